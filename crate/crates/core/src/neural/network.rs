use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use super::arch::{shapes_for, ArchitectureSpec, InputShape, LayerSpec, MomentumKind};
use super::layers::{col2im, conv_batch, pool_batch, relu_in_place, softmax_row, Window};
use crate::data::Dataset;
use crate::rng::{self, SeededRng};
use crate::tensor::{gemm_nn, gemm_nt, gemm_tn, transpose};
use crate::{Error, Result, Tensor};

pub const BATCH_SIZE: usize = 128;

/// Weights and bias of one parametric layer.
///
/// Convolution weights are `[filters, channels, k, k]`, dense weights are
/// `[inputs, units]`; biases are `[filters]` or `[units]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub weights: Tensor,
    pub bias: Tensor,
}

impl LayerParams {
    fn zeros_like(&self) -> Self {
        LayerParams {
            weights: Tensor::zeros(self.weights.shape()).expect("non-empty shape"),
            bias: Tensor::zeros(self.bias.shape()).expect("non-empty shape"),
        }
    }
}

/// Per-layer gradients, `None` for layers without parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients(pub Vec<Option<LayerParams>>);

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedNetwork {
    spec: ArchitectureSpec,
    params: Vec<Option<LayerParams>>,
    velocities: Vec<Option<LayerParams>>,
    epochs_trained: u32,
    seed: u64,
}

/// A trained network without its softmax head. Inference only; dropout is
/// never applied.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureExtractor {
    input: InputShape,
    layers: Vec<LayerSpec>,
    params: Vec<Option<LayerParams>>,
    output_dim: usize,
}

pub enum Mode<'a> {
    /// Dropout masks are drawn from the generator.
    Train(&'a mut SeededRng),
    Infer,
}

/// Multiplicative dropout factors (`0` or `1 / (1 - p)`) for the input of
/// every dropout layer, one per sample and unit.
#[derive(Debug, Clone, PartialEq)]
pub struct DropoutMasks {
    batch: usize,
    masks: Vec<Option<Vec<f64>>>,
}

impl DropoutMasks {
    fn none(layers: usize, batch: usize) -> Self {
        DropoutMasks {
            batch,
            masks: vec![None; layers],
        }
    }

    /// Draws masks for a batch. The draw order (layer, then sample, then
    /// unit) is fixed.
    pub fn sample(spec: &ArchitectureSpec, batch: usize, rng: &mut SeededRng) -> Result<Self> {
        let shapes = spec.layer_shapes()?;
        let mut masks = Vec::with_capacity(spec.layers.len());
        for (i, layer) in spec.layers.iter().enumerate() {
            let in_len = if i == 0 { spec.input.len() } else { shapes[i - 1].len() };
            masks.push(match layer.dropout() {
                Some(p) if p > 0.0 => {
                    let keep = 1.0 / (1.0 - p);
                    Some(
                        (0..batch * in_len)
                            .map(|_| if rng.gen::<f64>() < p { 0.0 } else { keep })
                            .collect(),
                    )
                }
                _ => None,
            });
        }
        Ok(DropoutMasks { batch, masks })
    }

    pub fn layer(&self, i: usize) -> Option<&[f64]> {
        self.masks.get(i).and_then(|m| m.as_deref())
    }
}

enum Cache {
    Conv { cols: Vec<f64> },
    Pool { argmax: Vec<u32> },
    Dense { input: Vec<f64> },
}

/// Everything a forward pass produced: each layer's output (`[batch, ...]`)
/// plus what the backward pass needs.
pub struct Activations {
    batch: usize,
    input_shape: InputShape,
    outputs: Vec<Tensor>,
    caches: Vec<Cache>,
    masks: DropoutMasks,
}

impl Activations {
    pub fn batch(&self) -> usize {
        self.batch
    }

    pub fn layer_outputs(&self) -> &[Tensor] {
        &self.outputs
    }

    /// Output of the final layer (class probabilities for a full network).
    pub fn output(&self) -> &Tensor {
        self.outputs.last().expect("networks have at least one layer")
    }

    pub fn masks(&self) -> &DropoutMasks {
        &self.masks
    }
}

/// Borrowed view shared by full networks and feature extractors.
struct Stack<'a> {
    input: InputShape,
    layers: &'a [LayerSpec],
    params: &'a [Option<LayerParams>],
}

fn window(shape: InputShape, size: usize, stride: usize) -> Window {
    let InputShape::Image {
        channels,
        height,
        width,
    } = shape
    else {
        unreachable!("spatial layer after a flat layer is rejected when building shapes")
    };
    Window {
        channels,
        height,
        width,
        size,
        stride,
    }
}

fn batch_shape(batch: usize, shape: InputShape) -> Vec<usize> {
    let mut s = vec![batch];
    s.extend(shape.dims());
    s
}

impl Stack<'_> {
    fn check_batch(&self, batch: &Tensor) -> Result<usize> {
        if batch.rank() < 2 || batch.shape()[1..] != self.input.dims()[..] {
            return Err(Error::ShapeMismatch {
                op: "network input",
                left: batch.shape().to_vec(),
                right: self.input.dims(),
            });
        }
        Ok(batch.rows())
    }

    fn forward(&self, batch: &Tensor, masks: DropoutMasks) -> Result<Activations> {
        let n = self.check_batch(batch)?;
        if masks.batch != n || masks.masks.len() != self.layers.len() {
            return Err(Error::ShapeMismatch {
                op: "dropout masks",
                left: vec![masks.batch, masks.masks.len()],
                right: vec![n, self.layers.len()],
            });
        }
        let shapes = shapes_for(self.input, self.layers)?;
        let mut outputs: Vec<Tensor> = Vec::with_capacity(self.layers.len());
        let mut caches = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            let in_shape = if i == 0 { self.input } else { shapes[i - 1] };
            let x = if i == 0 { batch.data() } else { outputs[i - 1].data() };
            let (out, cache) = match *layer {
                LayerSpec::Convolution { size, stride, .. } => {
                    let p = self.params[i].as_ref().expect("conv has params");
                    let w = window(in_shape, size, stride);
                    let (mut out, cols) = conv_batch(x, n, &w, p.weights.data(), p.bias.data());
                    relu_in_place(&mut out);
                    (out, Cache::Conv { cols })
                }
                LayerSpec::MaxPool { window: size, stride } => {
                    let (out, argmax) = pool_batch(x, n, &window(in_shape, size, stride));
                    (out, Cache::Pool { argmax })
                }
                LayerSpec::Dense { units, .. } | LayerSpec::SoftmaxOutput { units, .. } => {
                    let p = self.params[i].as_ref().expect("dense has params");
                    let in_len = in_shape.len();
                    let input: Vec<f64> = match masks.layer(i) {
                        Some(m) => x.iter().zip(m).map(|(a, b)| a * b).collect(),
                        None => x.to_vec(),
                    };
                    let mut out = Vec::with_capacity(n * units);
                    for _ in 0..n {
                        out.extend_from_slice(p.bias.data());
                    }
                    gemm_nn(n, in_len, units, &input, p.weights.data(), &mut out);
                    if matches!(layer, LayerSpec::Dense { .. }) {
                        relu_in_place(&mut out);
                    } else {
                        out.chunks_mut(units).for_each(softmax_row);
                    }
                    (out, Cache::Dense { input })
                }
            };
            outputs.push(Tensor::new(&batch_shape(n, shapes[i]), out)?);
            caches.push(cache);
        }
        Ok(Activations {
            batch: n,
            input_shape: self.input,
            outputs,
            caches,
            masks,
        })
    }

    fn infer(&self, batch: &Tensor) -> Result<Tensor> {
        let n = self.check_batch(batch)?;
        let mut acts = self.forward(batch, DropoutMasks::none(self.layers.len(), n))?;
        Ok(acts.outputs.pop().expect("non-empty stack"))
    }

    /// Runs `data` through in chunks and stacks the final outputs.
    fn infer_dataset(&self, data: &Dataset) -> Result<Tensor> {
        if data.sample_shape() != &self.input.dims()[..] {
            return Err(Error::ShapeMismatch {
                op: "dataset input",
                left: data.sample_shape().to_vec(),
                right: self.input.dims(),
            });
        }
        let shapes = shapes_for(self.input, self.layers)?;
        let out_len = shapes.last().expect("non-empty stack").len();
        let mut out = Vec::with_capacity(data.len() * out_len);
        let w = data.sample_len();
        let all = data.features().data();
        for start in (0..data.len()).step_by(BATCH_SIZE) {
            let end = (start + BATCH_SIZE).min(data.len());
            let chunk = Tensor::new(&batch_shape(end - start, self.input), all[start * w..end * w].to_vec())?;
            out.extend_from_slice(self.infer(&chunk)?.data());
        }
        Tensor::new(&[data.len(), out_len], out)
    }
}

fn glorot(fan_in: usize, fan_out: usize, shape: &[usize], rng: &mut SeededRng) -> Tensor {
    let limit = libm::sqrt(6.0 / (fan_in + fan_out) as f64);
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.gen_range(-limit..limit)).collect();
    Tensor::new(shape, data).expect("shape matches count")
}

fn expected_param_shapes(spec: &ArchitectureSpec) -> Result<Vec<Option<(Vec<usize>, Vec<usize>)>>> {
    let shapes = spec.layer_shapes()?;
    Ok(spec
        .layers
        .iter()
        .enumerate()
        .map(|(i, layer)| {
            let in_shape = if i == 0 { spec.input } else { shapes[i - 1] };
            match *layer {
                LayerSpec::Convolution { filters, size, .. } => {
                    let channels = match in_shape {
                        InputShape::Image { channels, .. } => channels,
                        InputShape::Flat(_) => unreachable!("checked by shapes_for"),
                    };
                    Some((vec![filters, channels, size, size], vec![filters]))
                }
                LayerSpec::MaxPool { .. } => None,
                LayerSpec::Dense { units, .. } | LayerSpec::SoftmaxOutput { units, .. } => {
                    Some((vec![in_shape.len(), units], vec![units]))
                }
            }
        })
        .collect())
}

impl TrainedNetwork {
    /// Glorot-uniform weights and zero biases drawn from `seed`.
    pub fn initialize(spec: ArchitectureSpec, seed: u64) -> Result<Self> {
        let mut init_rng = rng::stream(seed, 1);
        let params: Vec<Option<LayerParams>> = expected_param_shapes(&spec)?
            .into_iter()
            .map(|shapes| {
                shapes.map(|(w, b)| {
                    let (fan_in, fan_out) = if w.len() == 4 {
                        let rf = w[2] * w[3];
                        (w[1] * rf, w[0] * rf)
                    } else {
                        (w[0], w[1])
                    };
                    LayerParams {
                        weights: glorot(fan_in, fan_out, &w, &mut init_rng),
                        bias: Tensor::zeros(&b).expect("non-empty"),
                    }
                })
            })
            .collect();
        let velocities = params.iter().map(|p| p.as_ref().map(LayerParams::zeros_like)).collect();
        Ok(TrainedNetwork {
            spec,
            params,
            velocities,
            epochs_trained: 0,
            seed,
        })
    }

    /// Reassembles a network from stored parts, checking every shape.
    pub fn from_parts(
        spec: ArchitectureSpec,
        params: Vec<Option<LayerParams>>,
        velocities: Vec<Option<LayerParams>>,
        epochs_trained: u32,
        seed: u64,
    ) -> Result<Self> {
        let expected = expected_param_shapes(&spec)?;
        for set in [&params, &velocities] {
            if set.len() != expected.len() {
                return Err(Error::ShapeMismatch {
                    op: "network layers",
                    left: vec![set.len()],
                    right: vec![expected.len()],
                });
            }
            for (p, e) in set.iter().zip(&expected) {
                let ok = match (p, e) {
                    (None, None) => true,
                    (Some(p), Some((w, b))) => p.weights.shape() == &w[..] && p.bias.shape() == &b[..],
                    _ => false,
                };
                if !ok {
                    return Err(Error::ShapeMismatch {
                        op: "layer parameters",
                        left: p.as_ref().map(|p| p.weights.shape().to_vec()).unwrap_or_default(),
                        right: e.as_ref().map(|e| e.0.clone()).unwrap_or_default(),
                    });
                }
            }
        }
        Ok(TrainedNetwork {
            spec,
            params,
            velocities,
            epochs_trained,
            seed,
        })
    }

    pub fn spec(&self) -> &ArchitectureSpec {
        &self.spec
    }

    pub fn params(&self) -> &[Option<LayerParams>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Option<LayerParams>] {
        &mut self.params
    }

    pub fn velocities(&self) -> &[Option<LayerParams>] {
        &self.velocities
    }

    pub fn epochs_trained(&self) -> u32 {
        self.epochs_trained
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    fn stack(&self) -> Stack<'_> {
        Stack {
            input: self.spec.input,
            layers: &self.spec.layers,
            params: &self.params,
        }
    }

    pub fn forward(&self, batch: &Tensor, mode: Mode<'_>) -> Result<Activations> {
        let n = self.stack().check_batch(batch)?;
        let masks = match mode {
            Mode::Train(rng) => DropoutMasks::sample(&self.spec, n, rng)?,
            Mode::Infer => DropoutMasks::none(self.spec.layers.len(), n),
        };
        self.stack().forward(batch, masks)
    }

    /// Forward pass with caller-supplied dropout masks.
    pub fn forward_with_masks(&self, batch: &Tensor, masks: &DropoutMasks) -> Result<Activations> {
        self.stack().forward(batch, masks.clone())
    }

    /// Class probabilities `[N, classes]` without dropout.
    pub fn predict_proba(&self, data: &Dataset) -> Result<Tensor> {
        self.stack().infer_dataset(data)
    }

    /// Most probable class per sample; ties go to the lower class index.
    pub fn predict(&self, data: &Dataset) -> Result<Vec<usize>> {
        let probs = self.predict_proba(data)?;
        Ok((0..probs.rows()).map(|i| argmax(probs.row(i))).collect())
    }

    /// Gradient of the mean categorical cross-entropy of `labels` with
    /// respect to every parameter, through the masks recorded in `acts`.
    pub fn backward(&self, acts: &Activations, labels: &[usize]) -> Result<Gradients> {
        let n = acts.batch;
        if labels.len() != n || acts.outputs.len() != self.spec.layers.len() {
            return Err(Error::ShapeMismatch {
                op: "backward labels",
                left: vec![labels.len()],
                right: vec![n],
            });
        }
        let shapes = self.spec.layer_shapes()?;
        let classes = self.spec.class_count;
        // Softmax + cross-entropy: d loss / d logits = (p - onehot) / n.
        let mut delta = acts.output().data().to_vec();
        for (row, &label) in delta.chunks_mut(classes).zip(labels) {
            if label >= classes {
                return Err(Error::LabelOutOfRange {
                    label,
                    class_count: classes,
                });
            }
            row[label] -= 1.0;
        }
        let scale = 1.0 / n as f64;
        delta.iter_mut().for_each(|d| *d *= scale);

        let mut grads: Vec<Option<LayerParams>> = vec![None; self.spec.layers.len()];
        for i in (0..self.spec.layers.len()).rev() {
            let in_shape = if i == 0 { acts.input_shape } else { shapes[i - 1] };
            let need_input_grad = i > 0;
            let layer = self.spec.layers[i];
            let out = acts.outputs[i].data();
            match (layer, &acts.caches[i]) {
                (LayerSpec::Dense { units, .. } | LayerSpec::SoftmaxOutput { units, .. }, Cache::Dense { input }) => {
                    if matches!(layer, LayerSpec::Dense { .. }) {
                        for (d, &y) in delta.iter_mut().zip(out) {
                            if y <= 0.0 {
                                *d = 0.0;
                            }
                        }
                    }
                    let p = self.params[i].as_ref().expect("dense has params");
                    let in_len = in_shape.len();
                    let mut dw = vec![0.0; in_len * units];
                    gemm_tn(in_len, n, units, input, &delta, &mut dw);
                    let mut db = vec![0.0; units];
                    for row in delta.chunks(units) {
                        for (b, &d) in db.iter_mut().zip(row) {
                            *b += d;
                        }
                    }
                    if need_input_grad {
                        let mut dx = vec![0.0; n * in_len];
                        gemm_nt(n, units, in_len, &delta, p.weights.data(), &mut dx);
                        if let Some(mask) = acts.masks.layer(i) {
                            dx.iter_mut().zip(mask).for_each(|(d, m)| *d *= m);
                        }
                        delta = dx;
                    }
                    grads[i] = Some(LayerParams {
                        weights: Tensor::new(p.weights.shape(), dw)?,
                        bias: Tensor::new(&[units], db)?,
                    });
                }
                (LayerSpec::MaxPool { .. }, Cache::Pool { argmax }) => {
                    let in_len = in_shape.len();
                    let out_len = shapes[i].len();
                    let mut dx = vec![0.0; n * in_len];
                    for b in 0..n {
                        for j in 0..out_len {
                            dx[b * in_len + argmax[b * out_len + j] as usize] += delta[b * out_len + j];
                        }
                    }
                    delta = dx;
                }
                (LayerSpec::Convolution { filters, size, stride }, Cache::Conv { cols }) => {
                    let w = window(in_shape, size, stride);
                    let positions = w.positions();
                    let patch = w.patch_len();
                    let p = self.params[i].as_ref().expect("conv has params");
                    // Rectifier, then regroup [n, F, P] into [n * P, F].
                    let mut dz = vec![0.0; n * positions * filters];
                    for b in 0..n {
                        let base = b * filters * positions;
                        let mut masked = delta[base..base + filters * positions].to_vec();
                        for (d, &y) in masked.iter_mut().zip(&out[base..base + filters * positions]) {
                            if y <= 0.0 {
                                *d = 0.0;
                            }
                        }
                        dz[b * positions * filters..(b + 1) * positions * filters]
                            .copy_from_slice(&transpose(filters, positions, &masked));
                    }
                    let mut dw = vec![0.0; filters * patch];
                    gemm_tn(filters, n * positions, patch, &dz, cols, &mut dw);
                    let mut db = vec![0.0; filters];
                    for row in dz.chunks(filters) {
                        for (b, &d) in db.iter_mut().zip(row) {
                            *b += d;
                        }
                    }
                    if need_input_grad {
                        let mut dcols = vec![0.0; n * positions * patch];
                        gemm_nn(n * positions, filters, patch, &dz, p.weights.data(), &mut dcols);
                        delta = col2im(&dcols, n, &w);
                    }
                    grads[i] = Some(LayerParams {
                        weights: Tensor::new(p.weights.shape(), dw)?,
                        bias: Tensor::new(&[filters], db)?,
                    });
                }
                _ => unreachable!("cache kind always matches layer kind"),
            }
        }
        Ok(Gradients(grads))
    }

    /// One momentum step on every parameter using the spec's learning rate,
    /// momentum and momentum kind.
    pub fn apply_gradients(&mut self, grads: &Gradients) -> Result<()> {
        let (lr, mu, kind) = (self.spec.learning_rate, self.spec.momentum, self.spec.momentum_kind);
        for ((p, v), g) in self.params.iter_mut().zip(&mut self.velocities).zip(&grads.0) {
            match (p, v, g) {
                (Some(p), Some(v), Some(g)) => {
                    sgd_momentum_step(p.weights.data_mut(), v.weights.data_mut(), g.weights.data(), lr, mu, kind)?;
                    sgd_momentum_step(p.bias.data_mut(), v.bias.data_mut(), g.bias.data(), lr, mu, kind)?;
                }
                (None, None, None) => {}
                _ => {
                    return Err(Error::ShapeMismatch {
                        op: "gradient layers",
                        left: vec![],
                        right: vec![],
                    })
                }
            }
        }
        Ok(())
    }

    /// Removes the final softmax layer, leaving a deterministic feature
    /// extractor over the remaining layers.
    pub fn strip_softmax(&self) -> Result<FeatureExtractor> {
        strip(self.spec.input, &self.spec.layers, &self.params)
    }
}

fn strip(input: InputShape, layers: &[LayerSpec], params: &[Option<LayerParams>]) -> Result<FeatureExtractor> {
    match layers.split_last() {
        Some((LayerSpec::SoftmaxOutput { .. }, rest)) if !rest.is_empty() => {
            let shapes = shapes_for(input, rest)?;
            Ok(FeatureExtractor {
                input,
                layers: rest.to_vec(),
                params: params[..rest.len()].to_vec(),
                output_dim: shapes.last().expect("non-empty").len(),
            })
        }
        _ => Err(Error::NoSoftmaxHead),
    }
}

/// `v <- mu v - lr g`, then `w <- w + v` (classical) or
/// `w <- w + mu v - lr g` (Nesterov).
pub fn sgd_momentum_step(
    params: &mut [f64],
    velocities: &mut [f64],
    grads: &[f64],
    lr: f64,
    mu: f64,
    kind: MomentumKind,
) -> Result<()> {
    if params.len() != velocities.len() || params.len() != grads.len() {
        return Err(Error::ShapeMismatch {
            op: "sgd_momentum_step",
            left: vec![params.len(), velocities.len()],
            right: vec![grads.len()],
        });
    }
    for ((w, v), &g) in params.iter_mut().zip(velocities.iter_mut()).zip(grads) {
        *v = mu * *v - lr * g;
        match kind {
            MomentumKind::Classical => *w += *v,
            MomentumKind::Nesterov => *w += mu * *v - lr * g,
        }
    }
    Ok(())
}

fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

impl FeatureExtractor {
    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    pub fn input(&self) -> InputShape {
        self.input
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    fn stack(&self) -> Stack<'_> {
        Stack {
            input: self.input,
            layers: &self.layers,
            params: &self.params,
        }
    }

    /// Features for a batch shaped `[B, ...input]`.
    pub fn extract_batch(&self, batch: &Tensor) -> Result<Tensor> {
        self.stack().infer(batch)
    }

    /// Always fails: an extractor has no softmax head left to remove.
    pub fn strip_softmax(&self) -> Result<FeatureExtractor> {
        strip(self.input, &self.layers, &self.params)
    }
}

/// Runs every sample through the extractor: row `i` of the `[N, 256]`
/// result is the feature vector of sample `i`.
pub fn extract_features(extractor: &FeatureExtractor, data: &Dataset) -> Result<Tensor> {
    extractor.stack().infer_dataset(data)
}

/// Rebuilds `data` with extracted features in place of its raw features.
pub fn extract_dataset(extractor: &FeatureExtractor, data: &Dataset) -> Result<Dataset> {
    data.with_features(extract_features(extractor, data)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrainConfig {
    pub epochs: u32,
    pub seed: u64,
    pub batch_size: usize,
}

impl TrainConfig {
    pub fn new(epochs: u32, seed: u64) -> Self {
        TrainConfig {
            epochs,
            seed,
            batch_size: BATCH_SIZE,
        }
    }
}

/// Minibatch SGD with momentum and dropout. Same spec, data, epochs and
/// seed always produce bit-identical parameters.
pub fn train(spec: &ArchitectureSpec, data: &Dataset, epochs: u32, seed: u64) -> Result<TrainedNetwork> {
    train_with_history(spec, data, &TrainConfig::new(epochs, seed)).map(|(net, _)| net)
}

/// [`train`] that also returns the mean training loss of every epoch.
pub fn train_with_history(
    spec: &ArchitectureSpec,
    data: &Dataset,
    config: &TrainConfig,
) -> Result<(TrainedNetwork, Vec<f64>)> {
    let net = TrainedNetwork::initialize(spec.clone(), config.seed)?;
    continue_training(net, data, config)
}

/// Trains an existing network for `config.epochs` more epochs. The shuffle
/// and dropout streams depend on `config.seed` and the epoch index, so
/// splitting a run into several calls gives the same result as one call.
pub fn continue_training(
    mut net: TrainedNetwork,
    data: &Dataset,
    config: &TrainConfig,
) -> Result<(TrainedNetwork, Vec<f64>)> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if data.sample_shape() != &net.spec.input.dims()[..] {
        return Err(Error::ShapeMismatch {
            op: "training data",
            left: data.sample_shape().to_vec(),
            right: net.spec.input.dims(),
        });
    }
    if let Some(&label) = data.labels().iter().find(|&&l| l >= net.spec.class_count) {
        return Err(Error::LabelOutOfRange {
            label,
            class_count: net.spec.class_count,
        });
    }
    if config.batch_size == 0 {
        return Err(Error::InvalidParameter("batch_size must be positive".into()));
    }
    let w = data.sample_len();
    let features = data.features().data();
    let mut history = Vec::with_capacity(config.epochs as usize);
    let first_epoch = net.epochs_trained;
    for epoch in first_epoch..first_epoch + config.epochs {
        let mut shuffle_rng = rng::stream(config.seed, 0x1000 + 2 * epoch as u64);
        let mut dropout_rng = rng::stream(config.seed, 0x1001 + 2 * epoch as u64);
        let order = rng::permutation(&mut shuffle_rng, data.len());
        let mut loss_sum = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let mut batch = Vec::with_capacity(chunk.len() * w);
            for &i in chunk {
                batch.extend_from_slice(&features[i * w..(i + 1) * w]);
            }
            let batch = Tensor::new(&batch_shape(chunk.len(), net.spec.input), batch)?;
            let labels: Vec<usize> = chunk.iter().map(|&i| data.labels()[i]).collect();
            let acts = net.forward(&batch, Mode::Train(&mut dropout_rng))?;
            loss_sum += super::layers::categorical_cross_entropy(acts.output(), &labels)? * chunk.len() as f64;
            let grads = net.backward(&acts, &labels)?;
            net.apply_gradients(&grads)?;
        }
        history.push(loss_sum / data.len() as f64);
        net.epochs_trained += 1;
    }
    Ok((net, history))
}
