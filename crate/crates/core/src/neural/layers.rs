//! Layer primitives. The batched kernels work on flat row-major buffers;
//! the `Tensor` wrappers are the single-sample public entry points.

use alloc::vec;
use alloc::vec::Vec;

use crate::tensor::{gemm_nt, transpose};
use crate::{Error, Result, Tensor};

const PROB_FLOOR: f64 = 1e-12;

/// Geometry of a convolution or pooling window over `[C, H, W]` input.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Window {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub size: usize,
    pub stride: usize,
}

impl Window {
    pub fn out_h(&self) -> usize {
        (self.height - self.size) / self.stride + 1
    }

    pub fn out_w(&self) -> usize {
        (self.width - self.size) / self.stride + 1
    }

    pub fn positions(&self) -> usize {
        self.out_h() * self.out_w()
    }

    pub fn in_len(&self) -> usize {
        self.channels * self.height * self.width
    }

    pub fn patch_len(&self) -> usize {
        self.channels * self.size * self.size
    }
}

/// Unfolds a batch of images into `[batch * positions, C * k * k]`.
pub(crate) fn im2col(input: &[f64], batch: usize, w: &Window) -> Vec<f64> {
    let (oh, ow, k) = (w.out_h(), w.out_w(), w.size);
    let patch = w.patch_len();
    let mut cols = vec![0.0; batch * w.positions() * patch];
    for b in 0..batch {
        let img = &input[b * w.in_len()..(b + 1) * w.in_len()];
        for oy in 0..oh {
            for ox in 0..ow {
                let row = (b * w.positions() + oy * ow + ox) * patch;
                let dst = &mut cols[row..row + patch];
                let mut d = 0;
                for c in 0..w.channels {
                    for ky in 0..k {
                        let src = c * w.height * w.width + (oy * w.stride + ky) * w.width + ox * w.stride;
                        dst[d..d + k].copy_from_slice(&img[src..src + k]);
                        d += k;
                    }
                }
            }
        }
    }
    cols
}

/// Adjoint of [`im2col`]: accumulates column gradients back onto images.
pub(crate) fn col2im(cols: &[f64], batch: usize, w: &Window) -> Vec<f64> {
    let (oh, ow, k) = (w.out_h(), w.out_w(), w.size);
    let patch = w.patch_len();
    let mut out = vec![0.0; batch * w.in_len()];
    for b in 0..batch {
        let img = &mut out[b * w.in_len()..(b + 1) * w.in_len()];
        for oy in 0..oh {
            for ox in 0..ow {
                let row = (b * w.positions() + oy * ow + ox) * patch;
                let src = &cols[row..row + patch];
                let mut s = 0;
                for c in 0..w.channels {
                    for ky in 0..k {
                        let dst = c * w.height * w.width + (oy * w.stride + ky) * w.width + ox * w.stride;
                        for (o, &g) in img[dst..dst + k].iter_mut().zip(&src[s..s + k]) {
                            *o += g;
                        }
                        s += k;
                    }
                }
            }
        }
    }
    out
}

/// Convolution pre-activations for a batch, laid out `[batch, F, oh, ow]`.
/// Returns the unfolded input alongside for reuse in the backward pass.
pub(crate) fn conv_batch(
    input: &[f64],
    batch: usize,
    w: &Window,
    filters: &[f64],
    bias: &[f64],
) -> (Vec<f64>, Vec<f64>) {
    let f = bias.len();
    let p = w.positions();
    let cols = im2col(input, batch, w);
    let mut by_position = vec![0.0; batch * p * f];
    gemm_nt(batch * p, w.patch_len(), f, &cols, filters, &mut by_position);
    let mut out = vec![0.0; batch * f * p];
    for b in 0..batch {
        let src = &by_position[b * p * f..(b + 1) * p * f];
        let dst = &mut out[b * f * p..(b + 1) * f * p];
        let t = transpose(p, f, src);
        for (fi, chunk) in t.chunks(p).enumerate() {
            for (o, &v) in dst[fi * p..(fi + 1) * p].iter_mut().zip(chunk) {
                *o = v + bias[fi];
            }
        }
    }
    (out, cols)
}

/// Max pooling over a batch; ties resolve to the first maximum in scan
/// order. Returns outputs and, for each output, the flat within-sample index
/// of the winning input.
pub(crate) fn pool_batch(input: &[f64], batch: usize, w: &Window) -> (Vec<f64>, Vec<u32>) {
    let (oh, ow) = (w.out_h(), w.out_w());
    let out_len = w.channels * oh * ow;
    let mut out = Vec::with_capacity(batch * out_len);
    let mut argmax = Vec::with_capacity(batch * out_len);
    for b in 0..batch {
        let img = &input[b * w.in_len()..(b + 1) * w.in_len()];
        for c in 0..w.channels {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut best = f64::NEG_INFINITY;
                    let mut best_idx = 0;
                    for ky in 0..w.size {
                        for kx in 0..w.size {
                            let idx = c * w.height * w.width
                                + (oy * w.stride + ky) * w.width
                                + ox * w.stride
                                + kx;
                            if img[idx] > best {
                                best = img[idx];
                                best_idx = idx;
                            }
                        }
                    }
                    out.push(best);
                    argmax.push(best_idx as u32);
                }
            }
        }
    }
    (out, argmax)
}

pub(crate) fn relu_in_place(values: &mut [f64]) {
    for v in values {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
}

pub(crate) fn softmax_row(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = libm::exp(*v - max);
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

/// Softmax over the last axis (every row for rank 2, the whole vector for
/// rank 1). Computed max-shifted.
pub fn softmax(logits: &Tensor) -> Tensor {
    let width = *logits.shape().last().expect("tensors have rank >= 1");
    let mut data = logits.data().to_vec();
    for row in data.chunks_mut(width) {
        softmax_row(row);
    }
    Tensor::new(logits.shape(), data).expect("shape unchanged")
}

/// Mean negative log-probability of the true class, with probabilities
/// floored at 1e-12.
pub fn categorical_cross_entropy(probs: &Tensor, labels: &[usize]) -> Result<f64> {
    if probs.rank() != 2 || probs.rows() != labels.len() {
        return Err(Error::ShapeMismatch {
            op: "categorical_cross_entropy",
            left: probs.shape().to_vec(),
            right: vec![labels.len()],
        });
    }
    let n = probs.shape()[1];
    let mut total = 0.0;
    for (i, &label) in labels.iter().enumerate() {
        if label >= n {
            return Err(Error::LabelOutOfRange {
                label,
                class_count: n,
            });
        }
        total -= libm::log(probs.row(i)[label].max(PROB_FLOOR));
    }
    Ok(total / labels.len() as f64)
}

fn conv_geometry(input: &Tensor, filters: &Tensor, bias: &Tensor, stride: usize) -> Result<Window> {
    let mismatch = || Error::ShapeMismatch {
        op: "conv2d",
        left: input.shape().to_vec(),
        right: filters.shape().to_vec(),
    };
    let (&[c, h, w], &[f, fc, k, k2]) = (input.shape(), filters.shape()) else {
        return Err(mismatch());
    };
    if fc != c || k != k2 || bias.shape() != [f] || stride == 0 {
        return Err(mismatch());
    }
    if h < k || w < k {
        return Err(Error::ShapeMismatch {
            op: "conv2d input smaller than filter",
            left: input.shape().to_vec(),
            right: filters.shape().to_vec(),
        });
    }
    Ok(Window {
        channels: c,
        height: h,
        width: w,
        size: k,
        stride,
    })
}

/// Valid cross-correlation of a `[C, H, W]` input with `[F, C, k, k]`
/// filters plus per-filter bias, before the rectifier.
pub fn conv2d_preactivation(input: &Tensor, filters: &Tensor, bias: &Tensor, stride: usize) -> Result<Tensor> {
    let w = conv_geometry(input, filters, bias, stride)?;
    let (out, _) = conv_batch(input.data(), 1, &w, filters.data(), bias.data());
    Tensor::new(&[bias.len(), w.out_h(), w.out_w()], out)
}

/// [`conv2d_preactivation`] followed by the rectifier.
pub fn conv2d_forward(input: &Tensor, filters: &Tensor, bias: &Tensor, stride: usize) -> Result<Tensor> {
    let pre = conv2d_preactivation(input, filters, bias, stride)?;
    let mut data = pre.into_data();
    relu_in_place(&mut data);
    let w = conv_geometry(input, filters, bias, stride)?;
    Tensor::new(&[bias.len(), w.out_h(), w.out_w()], data)
}

/// 2x2/stride-2 max pooling of a `[C, H, W]` tensor. Odd trailing rows or
/// columns are dropped. Also returns each output's argmax as a flat index
/// into the input.
pub fn maxpool_forward(input: &Tensor) -> Result<(Tensor, Vec<usize>)> {
    let &[c, h, w] = input.shape() else {
        return Err(Error::ShapeMismatch {
            op: "maxpool",
            left: input.shape().to_vec(),
            right: vec![],
        });
    };
    if h < 2 || w < 2 {
        return Err(Error::ShapeMismatch {
            op: "maxpool input smaller than window",
            left: input.shape().to_vec(),
            right: vec![2, 2],
        });
    }
    let win = Window {
        channels: c,
        height: h,
        width: w,
        size: 2,
        stride: 2,
    };
    let (out, argmax) = pool_batch(input.data(), 1, &win);
    Ok((
        Tensor::new(&[c, win.out_h(), win.out_w()], out)?,
        argmax.into_iter().map(|i| i as usize).collect(),
    ))
}
