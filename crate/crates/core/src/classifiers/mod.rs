//! RBF-kernel support vector machine (SMO, one-vs-one) and brute-force
//! k-nearest-neighbour classifiers.

pub mod knn;
pub mod svm;

pub use knn::{knn_fit, knn_predict, KnnModel};
pub use svm::{
    rbf_kernel, smo_train_binary, svm_fit, svm_fit_grid, svm_predict, SmoConfig, SvmBinaryModel, SvmHyper,
    SvmModel,
};

/// Squared Euclidean distance, summed in four interleaved lanes.
#[inline]
pub(crate) fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        for l in 0..4 {
            let d = a[c * 4 + l] - b[c * 4 + l];
            acc[l] += d * d;
        }
    }
    let mut tail = 0.0;
    for i in chunks * 4..a.len() {
        let d = a[i] - b[i];
        tail += d * d;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}
