//! Exhaustive-scan k-nearest-neighbour classifier.

use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use super::squared_distance;
use crate::{Error, Result, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub struct KnnModel {
    points: Tensor,
    labels: Vec<usize>,
    k: usize,
    class_count: usize,
}

/// Stores the training set verbatim.
pub fn knn_fit(points: Tensor, labels: Vec<usize>, k: usize) -> Result<KnnModel> {
    if points.rank() != 2 || points.rows() != labels.len() {
        return Err(Error::ShapeMismatch {
            op: "knn_fit",
            left: points.shape().to_vec(),
            right: vec![labels.len()],
        });
    }
    if k == 0 {
        return Err(Error::InvalidParameter("k must be positive".into()));
    }
    if k > labels.len() {
        return Err(Error::KTooLarge { k, n: labels.len() });
    }
    let class_count = labels.iter().max().map_or(0, |&m| m + 1);
    Ok(KnnModel {
        points,
        labels,
        k,
        class_count,
    })
}

pub fn knn_predict(model: &KnnModel, x: &[f64]) -> Result<usize> {
    model.predict(x)
}

fn by_distance_then_index(a: &(f64, usize), b: &(f64, usize)) -> Ordering {
    a.0.total_cmp(&b.0).then(a.1.cmp(&b.1))
}

impl KnnModel {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn points(&self) -> &Tensor {
        &self.points
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn dims(&self) -> usize {
        self.points.shape()[1]
    }

    /// The `count` nearest stored points as `(squared distance, index)`,
    /// nearest first; equal distances order by lower index.
    pub fn neighbors(&self, x: &[f64], count: usize) -> Result<Vec<(f64, usize)>> {
        if x.len() != self.dims() {
            return Err(Error::ShapeMismatch {
                op: "knn_predict",
                left: vec![x.len()],
                right: vec![self.dims()],
            });
        }
        let count = count.min(self.labels.len());
        let mut all: Vec<(f64, usize)> = (0..self.labels.len())
            .map(|i| (squared_distance(self.points.row(i), x), i))
            .collect();
        if count < all.len() {
            all.select_nth_unstable_by(count, by_distance_then_index);
            all.truncate(count);
        }
        all.sort_unstable_by(by_distance_then_index);
        Ok(all)
    }

    pub fn predict(&self, x: &[f64]) -> Result<usize> {
        let nn = self.neighbors(x, self.k)?;
        Ok(self.vote(&nn))
    }

    /// Predictions for several `k` at once from a single neighbour scan.
    /// Each entry equals what a model fitted with that `k` would predict.
    pub fn predict_for_ks(&self, x: &[f64], ks: &[usize]) -> Result<Vec<usize>> {
        if let Some(&k) = ks.iter().find(|&&k| k == 0 || k > self.labels.len()) {
            return Err(Error::KTooLarge { k, n: self.labels.len() });
        }
        let kmax = ks.iter().copied().max().unwrap_or(0);
        let nn = self.neighbors(x, kmax)?;
        Ok(ks.iter().map(|&k| self.vote(&nn[..k])).collect())
    }

    pub fn predict_batch(&self, queries: &Tensor) -> Result<Vec<usize>> {
        (0..queries.rows()).map(|i| self.predict(queries.row(i))).collect()
    }

    /// Majority label among sorted neighbours. A vote tie goes to the tied
    /// class that owns the nearest neighbour, then to the lowest class.
    fn vote(&self, neighbors: &[(f64, usize)]) -> usize {
        let mut counts = vec![0usize; self.class_count];
        let mut first_rank = vec![usize::MAX; self.class_count];
        for (rank, &(_, i)) in neighbors.iter().enumerate() {
            let c = self.labels[i];
            counts[c] += 1;
            first_rank[c] = first_rank[c].min(rank);
        }
        let mut best = 0;
        for c in 1..self.class_count {
            if counts[c] > counts[best] || (counts[c] == counts[best] && first_rank[c] < first_rank[best]) {
                best = c;
            }
        }
        best
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model(rows: &[[f64; 2]], labels: &[usize], k: usize) -> KnnModel {
        let pts = Tensor::new(&[rows.len(), 2], rows.iter().flatten().copied().collect()).unwrap();
        knn_fit(pts, labels.to_vec(), k).unwrap()
    }

    #[test]
    fn majority_example() {
        let m = model(&[[0.0, 0.0], [1.0, 0.0], [10.0, 10.0]], &[0, 0, 1], 3);
        assert_eq!(knn_predict(&m, &[0.4, 0.0]).unwrap(), 0);
    }

    #[test]
    fn stored_point_with_k1_returns_its_label() {
        let rows = [[0.0, 0.0], [1.0, 2.0], [3.0, -1.0], [5.0, 5.0]];
        let m = model(&rows, &[2, 0, 1, 0], 1);
        let before = m.clone();
        for (r, &l) in rows.iter().zip(&[2, 0, 1, 0]) {
            assert_eq!(m.predict(r).unwrap(), l);
        }
        assert_eq!(m, before);
    }

    #[test]
    fn fit_errors() {
        let pts = Tensor::new(&[5, 1], vec![0.0; 5]).unwrap();
        assert_eq!(knn_fit(pts.clone(), vec![0; 5], 7), Err(Error::KTooLarge { k: 7, n: 5 }));
        assert!(knn_fit(pts.clone(), vec![0; 4], 1).is_err());
        let m = knn_fit(pts, vec![0; 5], 1).unwrap();
        assert!(m.predict(&[0.0, 1.0]).is_err());
    }

    #[test]
    fn distance_ties_prefer_lower_index() {
        // Both stored points sit at distance 1 from the query.
        let m = model(&[[1.0, 0.0], [-1.0, 0.0]], &[1, 0], 1);
        assert_eq!(m.predict(&[0.0, 0.0]).unwrap(), 1);
        let nn = m.neighbors(&[0.0, 0.0], 2).unwrap();
        assert_eq!(nn, vec![(1.0, 0), (1.0, 1)]);
    }

    #[test]
    fn vote_ties_prefer_the_nearest_class() {
        // k = 4: two votes each; class 1 owns the single nearest point.
        let m = model(&[[3.0, 0.0], [0.5, 0.0], [2.0, 0.0], [4.0, 0.0]], &[0, 1, 0, 1], 4);
        assert_eq!(m.predict(&[0.0, 0.0]).unwrap(), 1);
    }

    #[test]
    fn multi_k_matches_refits() {
        let rows: Vec<[f64; 2]> = (0..40).map(|i| [(i * 7 % 11) as f64, (i * 3 % 5) as f64]).collect();
        let labels: Vec<usize> = (0..40).map(|i| i % 3).collect();
        let ks = [1, 3, 5, 11, 25];
        let m = model(&rows, &labels, 1);
        for q in [[2.5, 1.0], [0.0, 0.0], [9.0, 4.0]] {
            let multi = m.predict_for_ks(&q, &ks).unwrap();
            for (&k, &p) in ks.iter().zip(&multi) {
                assert_eq!(model(&rows, &labels, k).predict(&q).unwrap(), p);
            }
        }
        assert!(m.predict_for_ks(&[0.0, 0.0], &[41]).is_err());
    }
}
