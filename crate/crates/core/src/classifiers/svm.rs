//! Soft-margin RBF support vector machine.
//!
//! Binary problems are solved in the dual with SMO, picking the working
//! pair by maximal violation for the first index and second-order gain for
//! the second. Multiclass models train one binary machine per class pair and
//! vote.

use alloc::format;
use alloc::rc::Rc;
use alloc::vec;
use alloc::vec::Vec;

use super::squared_distance;
use crate::{Error, Result, Tensor};

/// Floor for the curvature of a working pair, used when two points coincide.
const TAU: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvmHyper {
    /// Misclassification penalty.
    pub c: f64,
    /// RBF width in `exp(-gamma * |x - y|^2)`.
    pub gamma: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoConfig {
    /// Stop when the maximal KKT violation gap drops below this.
    pub tol: f64,
    /// Hard cap on pair updates; hitting it marks the result non-converged.
    pub max_iter: usize,
    /// Memory budget for cached kernel rows.
    pub cache_bytes: usize,
}

impl Default for SmoConfig {
    fn default() -> Self {
        SmoConfig {
            tol: 1e-3,
            max_iter: 1_000_000,
            cache_bytes: 512 << 20,
        }
    }
}

pub fn rbf_kernel(x: &[f64], y: &[f64], gamma: f64) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::ShapeMismatch {
            op: "rbf_kernel",
            left: vec![x.len()],
            right: vec![y.len()],
        });
    }
    if !(gamma > 0.0) {
        return Err(Error::InvalidParameter(format!("gamma must be positive, got {gamma}")));
    }
    Ok(rbf(x, y, gamma))
}

#[inline]
fn rbf(x: &[f64], y: &[f64], gamma: f64) -> f64 {
    libm::exp(-gamma * squared_distance(x, y))
}

/// A trained two-class machine, `f(x) = sum_i coef_i K(sv_i, x) + bias`.
/// Positive decision values mean label `+1`.
#[derive(Debug, Clone, PartialEq)]
pub struct SvmBinaryModel {
    /// `[S, D]`, only points with a non-zero multiplier.
    pub support_vectors: Tensor,
    /// `alpha_i * y_i` for each support vector.
    pub dual_coefs: Vec<f64>,
    pub bias: f64,
    pub hyper: SvmHyper,
    /// Multiplier of every training point, in input order.
    pub alphas: Vec<f64>,
    /// `sum alpha - 1/2 sum_ij alpha_i alpha_j y_i y_j K_ij` at the solution.
    pub dual_objective: f64,
    pub converged: bool,
    pub iterations: usize,
}

impl SvmBinaryModel {
    pub fn decision(&self, x: &[f64]) -> f64 {
        let mut f = self.bias;
        for (i, &coef) in self.dual_coefs.iter().enumerate() {
            f += coef * rbf(self.support_vectors.row(i), x, self.hyper.gamma);
        }
        f
    }
}

/// Kernel rows over a fixed point subset, computed on demand and kept
/// under a byte budget (least recently used rows are dropped first).
struct KernelCache<'a> {
    data: &'a [f64],
    dims: usize,
    subset: Vec<usize>,
    gamma: f64,
    rows: Vec<Option<Rc<[f64]>>>,
    last_used: Vec<u64>,
    clock: u64,
    cached: usize,
    capacity: usize,
}

impl<'a> KernelCache<'a> {
    fn new(data: &'a [f64], dims: usize, subset: Vec<usize>, gamma: f64, cache_bytes: usize) -> Self {
        let n = subset.len();
        let capacity = (cache_bytes / (n.max(1) * core::mem::size_of::<f64>())).max(2);
        KernelCache {
            data,
            dims,
            subset,
            gamma,
            rows: vec![None; n],
            last_used: vec![0; n],
            clock: 0,
            cached: 0,
            capacity,
        }
    }

    fn point(&self, i: usize) -> &[f64] {
        let g = self.subset[i];
        &self.data[g * self.dims..(g + 1) * self.dims]
    }

    fn row(&mut self, i: usize) -> Rc<[f64]> {
        self.clock += 1;
        self.last_used[i] = self.clock;
        if let Some(row) = &self.rows[i] {
            return row.clone();
        }
        if self.cached >= self.capacity {
            let victim = (0..self.rows.len())
                .filter(|&j| self.rows[j].is_some())
                .min_by_key(|&j| self.last_used[j])
                .expect("cache is non-empty when full");
            self.rows[victim] = None;
            self.cached -= 1;
        }
        let xi = self.point(i);
        let row: Rc<[f64]> = (0..self.subset.len())
            .map(|t| rbf(xi, self.point(t), self.gamma))
            .collect();
        self.rows[i] = Some(row.clone());
        self.cached += 1;
        row
    }
}

struct Solution {
    alphas: Vec<f64>,
    bias: f64,
    dual_objective: f64,
    converged: bool,
    iterations: usize,
}

fn solve(cache: &mut KernelCache<'_>, y: &[f64], c: f64, cfg: &SmoConfig) -> Solution {
    let n = y.len();
    let mut alpha = vec![0.0; n];
    // Gradient of 1/2 a'Qa - e'a, with Q_ij = y_i y_j K_ij.
    let mut grad = vec![-1.0; n];
    let at_upper = |a: f64| a >= c;
    let at_lower = |a: f64| a <= 0.0;
    // RBF kernels have a unit diagonal.
    let diag = 1.0;
    let mut iterations = 0;
    let mut converged = false;

    while iterations < cfg.max_iter {
        // First index: maximal violation among points that can move up.
        let mut gmax = f64::NEG_INFINITY;
        let mut i = usize::MAX;
        for t in 0..n {
            let can_move = if y[t] > 0.0 { !at_upper(alpha[t]) } else { !at_lower(alpha[t]) };
            if can_move && -y[t] * grad[t] >= gmax {
                gmax = -y[t] * grad[t];
                i = t;
            }
        }
        if i == usize::MAX {
            converged = true;
            break;
        }
        let ki = cache.row(i);
        // Second index: largest objective decrease among violating partners.
        let mut gmax2 = f64::NEG_INFINITY;
        let mut j = usize::MAX;
        let mut best_gain = f64::INFINITY;
        for t in 0..n {
            let can_move = if y[t] > 0.0 { !at_lower(alpha[t]) } else { !at_upper(alpha[t]) };
            if !can_move {
                continue;
            }
            let yg = y[t] * grad[t];
            gmax2 = gmax2.max(yg);
            let diff = gmax + yg;
            if diff > 0.0 {
                let quad = diag + diag - 2.0 * ki[t];
                let gain = -(diff * diff) / if quad > 0.0 { quad } else { TAU };
                if gain <= best_gain {
                    best_gain = gain;
                    j = t;
                }
            }
        }
        if gmax + gmax2 < cfg.tol || j == usize::MAX {
            converged = true;
            break;
        }
        iterations += 1;

        let kj = cache.row(j);
        let (old_i, old_j) = (alpha[i], alpha[j]);
        let quad = {
            let q = diag + diag - 2.0 * ki[j];
            if q > 0.0 {
                q
            } else {
                TAU
            }
        };
        if y[i] != y[j] {
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = sum;
                }
                if alpha[i] < 0.0 {
                    alpha[i] = 0.0;
                    alpha[j] = sum;
                }
            }
        }
        let (dai, daj) = ((alpha[i] - old_i) * y[i], (alpha[j] - old_j) * y[j]);
        for t in 0..n {
            grad[t] += y[t] * (ki[t] * dai + kj[t] * daj);
        }
    }

    // Offset: average over free vectors, else the midpoint of the feasible
    // interval.
    let (mut ub, mut lb, mut sum_free, mut n_free) = (f64::INFINITY, f64::NEG_INFINITY, 0.0, 0usize);
    for t in 0..n {
        let yg = y[t] * grad[t];
        if at_upper(alpha[t]) {
            if y[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if at_lower(alpha[t]) {
            if y[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            n_free += 1;
            sum_free += yg;
        }
    }
    let rho = if n_free > 0 { sum_free / n_free as f64 } else { (ub + lb) / 2.0 };
    let dual_objective = 0.5 * alpha.iter().zip(&grad).map(|(a, g)| a * (1.0 - g)).sum::<f64>();
    Solution {
        alphas: alpha,
        bias: -rho,
        dual_objective,
        converged,
        iterations,
    }
}

fn check_points(points: &Tensor, labels_len: usize) -> Result<usize> {
    if points.rank() != 2 || points.rows() != labels_len {
        return Err(Error::ShapeMismatch {
            op: "svm points",
            left: points.shape().to_vec(),
            right: vec![labels_len],
        });
    }
    Ok(points.shape()[1])
}

/// Trains a two-class machine on labels `+1` / `-1`.
pub fn smo_train_binary(points: &Tensor, labels: &[i8], hyper: SvmHyper, cfg: &SmoConfig) -> Result<SvmBinaryModel> {
    let dims = check_points(points, labels.len())?;
    if let Some(&bad) = labels.iter().find(|&&l| l != 1 && l != -1) {
        return Err(Error::InvalidParameter(format!("binary labels must be +1 or -1, got {bad}")));
    }
    let positives = labels.iter().filter(|&&l| l == 1).count();
    if positives == 0 || positives == labels.len() {
        return Err(Error::SingleClass(1));
    }
    check_hyper(hyper)?;
    let y: Vec<f64> = labels.iter().map(|&l| l as f64).collect();
    let mut cache = KernelCache::new(points.data(), dims, (0..labels.len()).collect(), hyper.gamma, cfg.cache_bytes);
    let sol = solve(&mut cache, &y, hyper.c, cfg);
    let sv: Vec<usize> = (0..labels.len()).filter(|&i| sol.alphas[i] > 0.0).collect();
    let mut sv_data = Vec::with_capacity(sv.len() * dims);
    for &i in &sv {
        sv_data.extend_from_slice(points.row(i));
    }
    Ok(SvmBinaryModel {
        support_vectors: Tensor::new(&[sv.len(), dims], sv_data)?,
        dual_coefs: sv.iter().map(|&i| sol.alphas[i] * y[i]).collect(),
        bias: sol.bias,
        hyper,
        alphas: sol.alphas,
        dual_objective: sol.dual_objective,
        converged: sol.converged,
        iterations: sol.iterations,
    })
}

fn check_hyper(hyper: SvmHyper) -> Result<()> {
    if !(hyper.c > 0.0) || !(hyper.gamma > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "C and gamma must be positive, got C={} gamma={}",
            hyper.c, hyper.gamma
        )));
    }
    Ok(())
}

/// One binary machine of a one-vs-one ensemble; positive decisions vote
/// for `classes.0`.
#[derive(Debug, Clone, PartialEq)]
pub struct PairModel {
    pub classes: (usize, usize),
    /// Rows of [`SvmModel::support_vectors`] this machine uses.
    pub support: Vec<usize>,
    pub dual_coefs: Vec<f64>,
    pub bias: f64,
    pub converged: bool,
}

/// One-vs-one RBF SVM over the classes present in the training labels.
#[derive(Debug, Clone, PartialEq)]
pub struct SvmModel {
    /// Sorted class labels seen in training.
    pub classes: Vec<usize>,
    pub hyper: SvmHyper,
    /// Union of every pair's support vectors, `[S, D]`.
    pub support_vectors: Tensor,
    pub pairs: Vec<PairModel>,
}

impl SvmModel {
    pub fn dims(&self) -> usize {
        self.support_vectors.shape()[1]
    }

    pub fn converged(&self) -> bool {
        self.pairs.iter().all(|p| p.converged)
    }

    /// Decision value of every pair machine, in `pairs` order.
    pub fn decisions(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dims() {
            return Err(Error::ShapeMismatch {
                op: "svm_predict",
                left: vec![x.len()],
                right: vec![self.dims()],
            });
        }
        let kernel: Vec<f64> = (0..self.support_vectors.rows())
            .map(|s| rbf(self.support_vectors.row(s), x, self.hyper.gamma))
            .collect();
        Ok(self
            .pairs
            .iter()
            .map(|p| p.bias + p.support.iter().zip(&p.dual_coefs).map(|(&s, &c)| c * kernel[s]).sum::<f64>())
            .collect())
    }

    pub fn predict(&self, x: &[f64]) -> Result<usize> {
        let decisions = self.decisions(x)?;
        Ok(vote(&self.classes, &self.pairs, &decisions))
    }

    /// Predicts every row of a `[N, D]` tensor.
    pub fn predict_batch(&self, points: &Tensor) -> Result<Vec<usize>> {
        (0..points.rows()).map(|i| self.predict(points.row(i))).collect()
    }
}

/// Majority vote; ties go to the class with the largest summed |decision|
/// over the pairs it won, then to the lowest class.
fn vote(classes: &[usize], pairs: &[PairModel], decisions: &[f64]) -> usize {
    let k = classes.len();
    let slot = |c: usize| classes.binary_search(&c).expect("pair classes come from the class list");
    let mut votes = vec![0usize; k];
    let mut strength = vec![0.0f64; k];
    for (p, &f) in pairs.iter().zip(decisions) {
        let winner = if f > 0.0 { p.classes.0 } else { p.classes.1 };
        votes[slot(winner)] += 1;
        strength[slot(winner)] += f.abs();
    }
    let mut best = 0;
    for s in 1..k {
        if votes[s] > votes[best] || (votes[s] == votes[best] && strength[s] > strength[best]) {
            best = s;
        }
    }
    classes[best]
}

pub fn svm_predict(model: &SvmModel, x: &[f64]) -> Result<usize> {
    model.predict(x)
}

/// Default RBF width: one over the feature dimensionality.
pub fn default_gamma(dims: usize) -> f64 {
    1.0 / dims as f64
}

/// One-vs-one RBF SVM with `gamma = 1 / D`.
pub fn svm_fit(points: &Tensor, labels: &[usize], c: f64) -> Result<SvmModel> {
    let mut models = svm_fit_grid(points, labels, &[c], &SmoConfig::default())?;
    Ok(models.pop().expect("one model per C"))
}

/// Fits one model per value in `cs`, sharing kernel evaluations between
/// them. Each result equals what [`svm_fit`] returns for that `C`.
pub fn svm_fit_grid(points: &Tensor, labels: &[usize], cs: &[f64], cfg: &SmoConfig) -> Result<Vec<SvmModel>> {
    let dims = check_points(points, labels.len())?;
    let gamma = default_gamma(dims);
    for &c in cs {
        check_hyper(SvmHyper { c, gamma })?;
    }
    let mut classes: Vec<usize> = labels.to_vec();
    classes.sort_unstable();
    classes.dedup();
    if classes.len() < 2 {
        return Err(Error::SingleClass(classes.len()));
    }

    // Per C: (pair, global support indices, coefs, bias, converged).
    let mut per_c: Vec<Vec<(usize, Vec<usize>, Vec<f64>, f64, bool)>> = vec![Vec::new(); cs.len()];
    let mut pair_classes = Vec::new();
    for (ai, &a) in classes.iter().enumerate() {
        for &b in &classes[ai + 1..] {
            let subset: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == a || labels[i] == b).collect();
            let y: Vec<f64> = subset.iter().map(|&i| if labels[i] == a { 1.0 } else { -1.0 }).collect();
            let mut cache = KernelCache::new(points.data(), dims, subset.clone(), gamma, cfg.cache_bytes);
            let pair = pair_classes.len();
            pair_classes.push((a, b));
            for (ci, &c) in cs.iter().enumerate() {
                let sol = solve(&mut cache, &y, c, cfg);
                let mut support = Vec::new();
                let mut coefs = Vec::new();
                for (local, &global) in subset.iter().enumerate() {
                    if sol.alphas[local] > 0.0 {
                        support.push(global);
                        coefs.push(sol.alphas[local] * y[local]);
                    }
                }
                per_c[ci].push((pair, support, coefs, sol.bias, sol.converged));
            }
        }
    }

    per_c
        .into_iter()
        .zip(cs)
        .map(|(pairs, &c)| {
            let mut used: Vec<usize> = pairs.iter().flat_map(|p| p.1.iter().copied()).collect();
            used.sort_unstable();
            used.dedup();
            let mut pool = Vec::with_capacity(used.len().max(1) * dims);
            for &g in &used {
                pool.extend_from_slice(points.row(g));
            }
            // Degenerate case: no support vectors at all still needs a
            // well-formed [S, D] tensor.
            let pool_rows = used.len();
            let support_vectors = if pool_rows == 0 {
                Tensor::new(&[1, dims], vec![0.0; dims])?
            } else {
                Tensor::new(&[pool_rows, dims], pool)?
            };
            let pairs = pairs
                .into_iter()
                .map(|(pair, support, dual_coefs, bias, converged)| PairModel {
                    classes: pair_classes[pair],
                    support: support
                        .iter()
                        .map(|g| used.binary_search(g).expect("support is in the pool"))
                        .collect(),
                    dual_coefs,
                    bias,
                    converged,
                })
                .collect();
            Ok(SvmModel {
                classes: classes.clone(),
                hyper: SvmHyper { c, gamma },
                support_vectors,
                pairs,
            })
        })
        .collect()
}
