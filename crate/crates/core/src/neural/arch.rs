use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::{Error, Result};

pub const FILTER_COUNT: usize = 32;
pub const FILTER_SIZE: usize = 5;
pub const HIDDEN_UNITS: usize = 256;
pub const DROPOUT_RATE: f64 = 0.5;
pub const IMAGE_LEARNING_RATE: f64 = 0.01;
pub const NUMERIC_LEARNING_RATE: f64 = 0.0001;
pub const MOMENTUM: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LayerSpec {
    /// Valid cross-correlation followed by a rectifier.
    Convolution {
        filters: usize,
        size: usize,
        stride: usize,
    },
    MaxPool {
        window: usize,
        stride: usize,
    },
    /// Fully connected rectifier layer; `dropout` applies to its input.
    Dense { units: usize, dropout: f64 },
    /// Fully connected softmax classifier; `dropout` applies to its input.
    SoftmaxOutput { units: usize, dropout: f64 },
}

impl LayerSpec {
    pub fn conv() -> Self {
        LayerSpec::Convolution {
            filters: FILTER_COUNT,
            size: FILTER_SIZE,
            stride: 1,
        }
    }

    pub fn pool() -> Self {
        LayerSpec::MaxPool { window: 2, stride: 2 }
    }

    pub fn dense() -> Self {
        LayerSpec::Dense {
            units: HIDDEN_UNITS,
            dropout: DROPOUT_RATE,
        }
    }

    pub fn has_params(&self) -> bool {
        !matches!(self, LayerSpec::MaxPool { .. })
    }

    pub fn dropout(&self) -> Option<f64> {
        match *self {
            LayerSpec::Dense { dropout, .. } | LayerSpec::SoftmaxOutput { dropout, .. } => {
                Some(dropout)
            }
            _ => None,
        }
    }
}

/// Shape of one sample flowing between layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InputShape {
    Image {
        channels: usize,
        height: usize,
        width: usize,
    },
    Flat(usize),
}

impl InputShape {
    pub fn mnist() -> Self {
        InputShape::Image {
            channels: 1,
            height: 28,
            width: 28,
        }
    }

    pub fn len(&self) -> usize {
        match *self {
            InputShape::Image {
                channels,
                height,
                width,
            } => channels * height * width,
            InputShape::Flat(n) => n,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dims(&self) -> Vec<usize> {
        match *self {
            InputShape::Image {
                channels,
                height,
                width,
            } => vec![channels, height, width],
            InputShape::Flat(n) => vec![n],
        }
    }

    /// Parses a per-sample shape: rank 3 is an image, rank 1 is flat.
    pub fn from_dims(dims: &[usize]) -> Result<Self> {
        match *dims {
            [channels, height, width] => Ok(InputShape::Image {
                channels,
                height,
                width,
            }),
            [n] => Ok(InputShape::Flat(n)),
            _ => Err(Error::InvalidParameter(format!(
                "sample shape {dims:?} is neither an image nor a flat vector"
            ))),
        }
    }
}

impl core::fmt::Display for InputShape {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            InputShape::Image {
                channels,
                height,
                width,
            } => write!(f, "{channels}x{height}x{width} image"),
            InputShape::Flat(n) => write!(f, "{n}-dim vector"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MomentumKind {
    /// `v <- mu v - lr g; w <- w + v`
    #[default]
    Classical,
    /// `v <- mu v - lr g; w <- w + mu v - lr g`
    Nesterov,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArchitectureSpec {
    pub id: u8,
    pub layers: Vec<LayerSpec>,
    pub learning_rate: f64,
    pub momentum: f64,
    pub momentum_kind: MomentumKind,
    pub input: InputShape,
    pub class_count: usize,
}

/// Builds one of the seven stock architectures.
///
/// | id | conv | pool | dense | input   | lr     |
/// |----|------|------|-------|---------|--------|
/// | 1  | 2    | 2    | 1     | image   | 0.01   |
/// | 2  | 1    | 1    | 1     | image   | 0.01   |
/// | 3  | 1    | 0    | 1     | image   | 0.01   |
/// | 4  | 0    | 0    | 1     | image   | 0.01   |
/// | 5  | 0    | 0    | 2     | numeric | 0.0001 |
/// | 6  | 0    | 0    | 4     | numeric | 0.0001 |
/// | 7  | 0    | 0    | 6     | numeric | 0.0001 |
///
/// Every stack ends in a softmax layer with one unit per class. All use
/// momentum 0.9.
pub fn build_architecture(id: u8, input: InputShape, class_count: usize) -> Result<ArchitectureSpec> {
    use LayerSpec as L;
    let (mut layers, image) = match id {
        1 => (vec![L::conv(), L::pool(), L::conv(), L::pool(), L::dense()], true),
        2 => (vec![L::conv(), L::pool(), L::dense()], true),
        3 => (vec![L::conv(), L::dense()], true),
        4 => (vec![L::dense()], true),
        5 => (vec![L::dense(); 2], false),
        6 => (vec![L::dense(); 4], false),
        7 => (vec![L::dense(); 6], false),
        _ => return Err(Error::UnknownArchitecture(id)),
    };
    let input_ok = matches!((image, input), (true, InputShape::Image { .. }) | (false, InputShape::Flat(_)));
    if !input_ok || input.is_empty() {
        return Err(Error::IncompatibleInput {
            id,
            input: format!("{input}"),
        });
    }
    if class_count < 2 {
        return Err(Error::InvalidParameter(format!(
            "class_count must be at least 2, got {class_count}"
        )));
    }
    layers.push(L::SoftmaxOutput {
        units: class_count,
        dropout: DROPOUT_RATE,
    });
    let spec = ArchitectureSpec {
        id,
        layers,
        learning_rate: if image { IMAGE_LEARNING_RATE } else { NUMERIC_LEARNING_RATE },
        momentum: MOMENTUM,
        momentum_kind: MomentumKind::Classical,
        input,
        class_count,
    };
    spec.layer_shapes().map_err(|_| Error::IncompatibleInput {
        id,
        input: format!("{input} (too small for the layer stack)"),
    })?;
    Ok(spec)
}

impl ArchitectureSpec {
    /// Output shape of every layer, in order.
    pub fn layer_shapes(&self) -> Result<Vec<InputShape>> {
        shapes_for(self.input, &self.layers)
    }

    pub fn with_momentum_kind(mut self, kind: MomentumKind) -> Self {
        self.momentum_kind = kind;
        self
    }
}

pub(crate) fn shapes_for(input: InputShape, layers: &[LayerSpec]) -> Result<Vec<InputShape>> {
    let mut shapes = Vec::with_capacity(layers.len());
    let mut current = input;
    for layer in layers {
        current = output_shape(current, layer)?;
        shapes.push(current);
    }
    Ok(shapes)
}

fn output_shape(input: InputShape, layer: &LayerSpec) -> Result<InputShape> {
    let too_small = || {
        Err(Error::ShapeMismatch {
            op: "layer input",
            left: input.dims(),
            right: vec![],
        })
    };
    match (*layer, input) {
        (
            LayerSpec::Convolution {
                filters,
                size,
                stride,
            },
            InputShape::Image { height, width, .. },
        ) => {
            if height < size || width < size || stride == 0 {
                return too_small();
            }
            Ok(InputShape::Image {
                channels: filters,
                height: (height - size) / stride + 1,
                width: (width - size) / stride + 1,
            })
        }
        (
            LayerSpec::MaxPool { window, stride },
            InputShape::Image {
                channels,
                height,
                width,
            },
        ) => {
            if height < window || width < window || stride == 0 {
                return too_small();
            }
            Ok(InputShape::Image {
                channels,
                height: (height - window) / stride + 1,
                width: (width - window) / stride + 1,
            })
        }
        (LayerSpec::Dense { units, .. } | LayerSpec::SoftmaxOutput { units, .. }, _) => {
            Ok(InputShape::Flat(units))
        }
        _ => too_small(),
    }
}
