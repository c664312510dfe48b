//! Independent reference implementations used by the test suites.
//!
//! Nothing in here calls into the solver, training loop or neighbour scan
//! being tested; each oracle works from the textbook definition.

#![allow(dead_code)]

use nnhybrid_core::neural::{categorical_cross_entropy, DropoutMasks, TrainedNetwork};
use nnhybrid_core::Tensor;

/// Outcome of a finite-difference sweep over a network's parameters.
#[derive(Debug, Default)]
pub struct GradientReport {
    pub checked: usize,
    pub failures: Vec<String>,
}

fn loss(net: &TrainedNetwork, x: &Tensor, labels: &[usize], masks: &DropoutMasks) -> f64 {
    let acts = net.forward_with_masks(x, masks).unwrap();
    categorical_cross_entropy(acts.output(), labels).unwrap()
}

fn param(net: &mut TrainedNetwork, layer: usize, which: usize, j: usize) -> &mut f64 {
    let p = net.params_mut()[layer].as_mut().unwrap();
    let t = if which == 0 { &mut p.weights } else { &mut p.bias };
    &mut t.data_mut()[j]
}

/// Compares analytic gradients with central differences for every
/// `stride`-th parameter, dropout masks held fixed.
pub fn finite_difference_check(
    net: &TrainedNetwork,
    x: &Tensor,
    labels: &[usize],
    masks: &DropoutMasks,
    eps: f64,
    rel_tol: f64,
    abs_floor: f64,
    stride: usize,
) -> GradientReport {
    let acts = net.forward_with_masks(x, masks).unwrap();
    let grads = net.backward(&acts, labels).unwrap();
    let mut probe = net.clone();
    let mut report = GradientReport::default();
    let mut counter = 0usize;
    for layer in 0..net.params().len() {
        let Some(analytic) = grads.0[layer].as_ref() else { continue };
        for which in 0..2 {
            let len = if which == 0 { analytic.weights.len() } else { analytic.bias.len() };
            for j in 0..len {
                counter += 1;
                if !counter.is_multiple_of(stride) {
                    continue;
                }
                let original = *param(&mut probe, layer, which, j);
                *param(&mut probe, layer, which, j) = original + eps;
                let up = loss(&probe, x, labels, masks);
                *param(&mut probe, layer, which, j) = original - eps;
                let down = loss(&probe, x, labels, masks);
                *param(&mut probe, layer, which, j) = original;
                let numeric = (up - down) / (2.0 * eps);
                let a = if which == 0 { analytic.weights.data()[j] } else { analytic.bias.data()[j] };
                let scale = a.abs().max(numeric.abs());
                report.checked += 1;
                if (a - numeric).abs() > (rel_tol * scale).max(abs_floor) {
                    report.failures.push(format!(
                        "layer {layer} {} [{j}]: analytic {a:e} numeric {numeric:e}",
                        if which == 0 { "weight" } else { "bias" }
                    ));
                }
            }
        }
    }
    report
}

/// Plain RBF Gram matrix.
pub fn gram(points: &[Vec<f64>], gamma: f64) -> Vec<Vec<f64>> {
    points
        .iter()
        .map(|a| {
            points
                .iter()
                .map(|b| {
                    let d: f64 = a.iter().zip(b).map(|(u, v)| (u - v) * (u - v)).sum();
                    (-gamma * d).exp()
                })
                .collect()
        })
        .collect()
}

/// `sum alpha - 1/2 sum_ij alpha_i alpha_j y_i y_j K_ij`.
pub fn dual_objective(alpha: &[f64], y: &[f64], k: &[Vec<f64>]) -> f64 {
    let n = alpha.len();
    let mut quad = 0.0;
    for i in 0..n {
        for j in 0..n {
            quad += alpha[i] * alpha[j] * y[i] * y[j] * k[i][j];
        }
    }
    alpha.iter().sum::<f64>() - 0.5 * quad
}

fn solve_linear(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col].abs() < 1e-12 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for c in col..n {
                a[row][c] -= f * a[col][c];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|c| a[row][c] * x[c]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    Some(x)
}

/// Exact maximum of the soft-margin dual by exhaustive search over the
/// faces of the feasible box: every multiplier is pinned at 0, pinned at
/// C, or free, and the free ones solve the equality-constrained
/// stationarity system. The dual is concave, so the best feasible
/// stationary point over all 3^n faces is the global optimum.
pub fn exact_dual_optimum(points: &[Vec<f64>], y: &[f64], c: f64, gamma: f64) -> (f64, Vec<f64>) {
    let n = y.len();
    let k = gram(points, gamma);
    let mut best = (f64::NEG_INFINITY, vec![0.0; n]);
    for code in 0..3usize.pow(n as u32) {
        let mut state = vec![0u8; n];
        let mut rest = code;
        for s in state.iter_mut() {
            *s = (rest % 3) as u8;
            rest /= 3;
        }
        let free: Vec<usize> = (0..n).filter(|&i| state[i] == 2).collect();
        let mut alpha: Vec<f64> = state.iter().map(|&s| if s == 1 { c } else { 0.0 }).collect();
        if !free.is_empty() {
            let m = free.len();
            // [Q_FF y_F; y_F^T 0] [a_F; nu] = [1 - Q_FB a_B; -y_B^T a_B]
            let mut a = vec![vec![0.0; m + 1]; m + 1];
            let mut b = vec![0.0; m + 1];
            for (r, &i) in free.iter().enumerate() {
                for (s, &j) in free.iter().enumerate() {
                    a[r][s] = y[i] * y[j] * k[i][j];
                }
                a[r][m] = y[i];
                a[m][r] = y[i];
                b[r] = 1.0 - (0..n).filter(|j| state[*j] != 2).map(|j| y[i] * y[j] * k[i][j] * alpha[j]).sum::<f64>();
            }
            b[m] = -(0..n).filter(|j| state[*j] != 2).map(|j| y[j] * alpha[j]).sum::<f64>();
            let Some(sol) = solve_linear(a, b) else { continue };
            for (r, &i) in free.iter().enumerate() {
                alpha[i] = sol[r];
            }
        }
        let feasible = alpha.iter().all(|&a| (-1e-12..=c + 1e-12).contains(&a))
            && alpha.iter().zip(y).map(|(a, y)| a * y).sum::<f64>().abs() < 1e-9;
        if feasible {
            let w = dual_objective(&alpha, y, &k);
            if w > best.0 {
                best = (w, alpha);
            }
        }
    }
    best
}

/// Best dual objective over a lattice of `steps + 1` values per multiplier
/// in `[0, C]`; the last multiplier is solved from the equality constraint.
/// A lower bound on the true optimum.
pub fn lattice_dual_search(points: &[Vec<f64>], y: &[f64], c: f64, gamma: f64, steps: usize) -> f64 {
    let n = y.len();
    let k = gram(points, gamma);
    let mut best = f64::NEG_INFINITY;
    let mut idx = vec![0usize; n - 1];
    loop {
        let mut alpha: Vec<f64> = idx.iter().map(|&s| c * s as f64 / steps as f64).collect();
        let partial: f64 = alpha.iter().zip(y).map(|(a, y)| a * y).sum();
        let last = -partial * y[n - 1];
        if (-1e-12..=c + 1e-12).contains(&last) {
            alpha.push(last.clamp(0.0, c));
            best = best.max(dual_objective(&alpha, y, &k));
        }
        let mut d = 0;
        loop {
            if d == n - 1 {
                return best;
            }
            idx[d] += 1;
            if idx[d] <= steps {
                break;
            }
            idx[d] = 0;
            d += 1;
        }
    }
}

/// k-nearest-neighbour prediction by sorting every distance. Equal
/// distances order by index; a vote tie goes to the tied class seen first
/// in distance order, then the lowest class.
pub fn knn_by_full_sort(points: &[Vec<f64>], labels: &[usize], x: &[f64], k: usize) -> usize {
    let mut order: Vec<(f64, usize)> = points
        .iter()
        .enumerate()
        .map(|(i, p)| (p.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum(), i))
        .collect();
    order.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
    let classes = labels.iter().max().unwrap() + 1;
    let mut votes = vec![0usize; classes];
    for &(_, i) in &order[..k] {
        votes[labels[i]] += 1;
    }
    let top = *votes.iter().max().unwrap();
    order[..k].iter().map(|&(_, i)| labels[i]).find(|&l| votes[l] == top).unwrap()
}
