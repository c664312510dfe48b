//! In-memory labelled datasets, deterministic splits, feature scaling and
//! synthetic generators.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::rng::{self, SeededRng};
use crate::{Error, Result, Tensor};

/// Features plus integer labels in `0..class_count`.
///
/// `features` has shape `[N, ...]`; images are `[N, 1, 28, 28]`, numeric
/// data `[N, D]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    features: Tensor,
    labels: Vec<usize>,
    class_count: usize,
}

impl Dataset {
    pub fn new(
        name: impl Into<String>,
        features: Tensor,
        labels: Vec<usize>,
        class_count: usize,
    ) -> Result<Self> {
        if features.rank() < 2 {
            return Err(Error::ShapeMismatch {
                op: "dataset features",
                left: features.shape().to_vec(),
                right: vec![labels.len()],
            });
        }
        if features.rows() != labels.len() {
            return Err(Error::ShapeMismatch {
                op: "dataset labels",
                left: features.shape().to_vec(),
                right: vec![labels.len()],
            });
        }
        if let Some(&label) = labels.iter().find(|&&l| l >= class_count) {
            return Err(Error::LabelOutOfRange { label, class_count });
        }
        Ok(Self {
            name: name.into(),
            features,
            labels,
            class_count,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn features(&self) -> &Tensor {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    /// Shape of a single sample (features shape without the leading axis).
    pub fn sample_shape(&self) -> &[usize] {
        &self.features.shape()[1..]
    }

    pub fn sample_len(&self) -> usize {
        self.features.row_len()
    }

    pub fn sample(&self, i: usize) -> &[f64] {
        self.features.row(i)
    }

    /// Dataset holding the given samples in the given order.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let w = self.sample_len();
        let mut data = Vec::with_capacity(indices.len() * w);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            data.extend_from_slice(self.sample(i));
            labels.push(self.labels[i]);
        }
        let mut shape = self.features.shape().to_vec();
        shape[0] = indices.len();
        Dataset::new(self.name.clone(), Tensor::new(&shape, data)?, labels, self.class_count)
    }

    /// `self` followed by `other`.
    pub fn concat(&self, other: &Dataset) -> Result<Self> {
        if self.sample_shape() != other.sample_shape() {
            return Err(Error::ShapeMismatch {
                op: "concat",
                left: self.features.shape().to_vec(),
                right: other.features.shape().to_vec(),
            });
        }
        let mut data = Vec::with_capacity(self.features.len() + other.features.len());
        data.extend_from_slice(self.features.data());
        data.extend_from_slice(other.features.data());
        let mut labels = self.labels.clone();
        labels.extend_from_slice(&other.labels);
        let mut shape = self.features.shape().to_vec();
        shape[0] = labels.len();
        Dataset::new(
            self.name.clone(),
            Tensor::new(&shape, data)?,
            labels,
            self.class_count.max(other.class_count),
        )
    }

    /// Same labels, new per-sample features.
    pub fn with_features(&self, features: Tensor) -> Result<Self> {
        Dataset::new(self.name.clone(), features, self.labels.clone(), self.class_count)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitStrategy {
    /// Contiguous blocks in file order.
    GivenOrder,
    /// Seeded permutation, then contiguous blocks.
    Shuffled,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SplitSpec {
    pub train: usize,
    pub val: usize,
    pub test: usize,
    pub seed: u64,
    pub strategy: SplitStrategy,
}

/// Train, validation and test partitions of one dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct Splits {
    pub train: Dataset,
    pub val: Dataset,
    pub test: Dataset,
}

/// Partitions `dataset` into train, validation and test blocks (in that
/// order). Every count must be positive; when the test data comes from a
/// separate file use [`split_train_val`].
pub fn split(dataset: &Dataset, spec: &SplitSpec) -> Result<Splits> {
    let requested = spec.train + spec.val + spec.test;
    if requested > dataset.len() {
        return Err(Error::SplitTooLarge {
            requested,
            available: dataset.len(),
        });
    }
    if spec.train == 0 || spec.val == 0 || spec.test == 0 {
        return Err(Error::InvalidParameter("split counts must be positive".into()));
    }
    let order = split_order(dataset.len(), spec);
    let (train, rest) = order.split_at(spec.train);
    let (val, rest) = rest.split_at(spec.val);
    Ok(Splits {
        train: dataset.subset(train)?,
        val: dataset.subset(val)?,
        test: dataset.subset(&rest[..spec.test])?,
    })
}

/// Train and validation blocks from a file that has a separate test file.
///
/// With [`SplitStrategy::GivenOrder`] the training block is the head of the
/// file and the validation block is its tail, so `(50_000, 10_000)` on the
/// 60,000-sample MNIST training file keeps the last 10,000 for validation.
pub fn split_train_val(dataset: &Dataset, spec: &SplitSpec) -> Result<(Dataset, Dataset)> {
    let requested = spec.train + spec.val;
    if requested > dataset.len() {
        return Err(Error::SplitTooLarge {
            requested,
            available: dataset.len(),
        });
    }
    if spec.train == 0 || spec.val == 0 {
        return Err(Error::InvalidParameter("split counts must be positive".into()));
    }
    let order = split_order(dataset.len(), spec);
    let train = &order[..spec.train];
    let val = &order[order.len() - spec.val..];
    Ok((dataset.subset(train)?, dataset.subset(val)?))
}

fn split_order(n: usize, spec: &SplitSpec) -> Vec<usize> {
    match spec.strategy {
        SplitStrategy::GivenOrder => (0..n).collect(),
        SplitStrategy::Shuffled => rng::permutation(&mut rng::stream(spec.seed, 0x5b17), n),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormalizationMode {
    /// Divide by 255 unless the data is already in `[0, 1]`.
    Image,
    /// Per-feature z-score.
    ZScore,
}

#[derive(Debug, Clone, PartialEq)]
pub enum NormalizationStats {
    Image { divisor: f64 },
    ZScore { mean: Vec<f64>, std: Vec<f64> },
}

const STD_FLOOR: f64 = 1e-8;

pub fn normalize_fit(train: &Dataset, mode: NormalizationMode) -> Result<NormalizationStats> {
    if train.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Ok(match mode {
        NormalizationMode::Image => {
            let already_scaled = train.features().data().iter().all(|&v| (0.0..=1.0).contains(&v));
            NormalizationStats::Image {
                divisor: if already_scaled { 1.0 } else { 255.0 },
            }
        }
        NormalizationMode::ZScore => {
            let d = train.sample_len();
            let n = train.len() as f64;
            let mut mean = vec![0.0; d];
            for i in 0..train.len() {
                for (m, &v) in mean.iter_mut().zip(train.sample(i)) {
                    *m += v;
                }
            }
            mean.iter_mut().for_each(|m| *m /= n);
            let mut var = vec![0.0; d];
            for i in 0..train.len() {
                for ((s, &v), &m) in var.iter_mut().zip(train.sample(i)).zip(&mean) {
                    *s += (v - m) * (v - m);
                }
            }
            let std = var
                .into_iter()
                .map(|s| libm::sqrt(s / n).max(STD_FLOOR))
                .collect();
            NormalizationStats::ZScore { mean, std }
        }
    })
}

pub fn normalize_apply(stats: &NormalizationStats, dataset: &Dataset) -> Result<Dataset> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut data = dataset.features().data().to_vec();
    match stats {
        NormalizationStats::Image { divisor } => data.iter_mut().for_each(|v| *v /= divisor),
        NormalizationStats::ZScore { mean, std } => {
            if mean.len() != dataset.sample_len() {
                return Err(Error::ShapeMismatch {
                    op: "normalize_apply",
                    left: vec![mean.len()],
                    right: dataset.sample_shape().to_vec(),
                });
            }
            for row in data.chunks_mut(mean.len()) {
                for ((v, m), s) in row.iter_mut().zip(mean).zip(std) {
                    *v = (*v - m) / s;
                }
            }
        }
    }
    dataset.with_features(Tensor::new(dataset.features().shape(), data)?)
}

/// Unit-variance Gaussian blobs whose centres are pairwise at least
/// `separation` apart. Samples are interleaved by class.
pub fn synth_blobs(
    per_class: usize,
    dims: usize,
    class_count: usize,
    separation: f64,
    seed: u64,
) -> Result<Dataset> {
    if separation <= 0.0 || dims == 0 || class_count == 0 || per_class == 0 {
        return Err(Error::InvalidParameter(
            "synth_blobs needs positive separation, dims, classes and per-class count".into(),
        ));
    }
    let centers = blob_centers(dims, class_count, separation);
    let mut rng = rng::seeded(seed);
    let n = per_class * class_count;
    let mut data = Vec::with_capacity(n * dims);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..per_class {
        for (class, center) in centers.iter().enumerate() {
            data.extend(center.iter().map(|&c| c + rng::standard_normal(&mut rng)));
            labels.push(class);
        }
    }
    Dataset::new("blobs", Tensor::new(&[n, dims], data)?, labels, class_count)
}

/// Centres used by [`synth_blobs`]: scaled unit vectors when there are
/// enough dimensions, otherwise evenly spaced along the first axis.
pub fn blob_centers(dims: usize, class_count: usize, separation: f64) -> Vec<Vec<f64>> {
    (0..class_count)
        .map(|c| {
            let mut center = vec![0.0; dims];
            if class_count <= dims {
                center[c] = separation / core::f64::consts::SQRT_2;
            } else {
                center[0] = c as f64 * separation;
            }
            center
        })
        .collect()
}

/// Greyscale `side x side` images in `[0, 1]`: each class is a bright square
/// patch at its own position, over uniform noise of amplitude `noise`.
pub fn synth_images(
    per_class: usize,
    class_count: usize,
    side: usize,
    noise: f64,
    seed: u64,
) -> Result<Dataset> {
    if side < 4 || class_count == 0 || per_class == 0 {
        return Err(Error::InvalidParameter("synth_images needs side >= 4".into()));
    }
    let patch = (side / 4).max(2);
    let slots = (side - patch + 1) * (side - patch + 1);
    let mut rng: SeededRng = rng::seeded(seed);
    let n = per_class * class_count;
    let mut data = Vec::with_capacity(n * side * side);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..per_class {
        for class in 0..class_count {
            let slot = (class * 7919) % slots;
            let (py, px) = (slot / (side - patch + 1), slot % (side - patch + 1));
            for y in 0..side {
                for x in 0..side {
                    let inside = (py..py + patch).contains(&y) && (px..px + patch).contains(&x);
                    let base = if inside { 1.0 - noise } else { 0.0 };
                    data.push(base + noise * rand::Rng::gen::<f64>(&mut rng));
                }
            }
            labels.push(class);
        }
    }
    Dataset::new(
        "images",
        Tensor::new(&[n, 1, side, side], data)?,
        labels,
        class_count,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn numeric(rows: &[&[f64]], labels: &[usize]) -> Dataset {
        let d = rows[0].len();
        let data = rows.iter().flat_map(|r| r.iter().copied()).collect();
        Dataset::new(
            "t",
            Tensor::new(&[rows.len(), d], data).unwrap(),
            labels.to_vec(),
            labels.iter().max().unwrap() + 1,
        )
        .unwrap()
    }

    #[test]
    fn rejects_out_of_range_labels() {
        let t = Tensor::new(&[2, 1], vec![0.0, 1.0]).unwrap();
        assert!(matches!(
            Dataset::new("x", t, vec![0, 2], 2),
            Err(Error::LabelOutOfRange { label: 2, .. })
        ));
    }

    #[test]
    fn splits_are_disjoint_and_deterministic() {
        let ds = synth_blobs(20, 2, 3, 5.0, 1).unwrap();
        let spec = SplitSpec {
            train: 30,
            val: 15,
            test: 10,
            seed: 9,
            strategy: SplitStrategy::Shuffled,
        };
        let a = split(&ds, &spec).unwrap();
        let b = split(&ds, &spec).unwrap();
        assert_eq!(a, b);
        assert_eq!((a.train.len(), a.val.len(), a.test.len()), (30, 15, 10));

        // Tag every sample with its index to check disjointness.
        let tagged = Dataset::new(
            "idx",
            Tensor::new(&[60, 1], (0..60).map(|i| i as f64).collect()).unwrap(),
            vec![0; 60],
            1,
        )
        .unwrap();
        let s = split(&tagged, &spec).unwrap();
        let mut seen: Vec<f64> = [&s.train, &s.val, &s.test]
            .iter()
            .flat_map(|d| d.features().data().to_vec())
            .collect();
        seen.sort_by(f64::total_cmp);
        seen.dedup();
        assert_eq!(seen.len(), 55);

        let too_big = SplitSpec { train: 50, ..spec };
        assert!(matches!(split(&ds, &too_big), Err(Error::SplitTooLarge { .. })));
    }

    #[test]
    fn given_order_train_val_uses_the_tail_for_validation() {
        let tagged = Dataset::new(
            "idx",
            Tensor::new(&[10, 1], (0..10).map(|i| i as f64).collect()).unwrap(),
            vec![0; 10],
            1,
        )
        .unwrap();
        let spec = SplitSpec {
            train: 4,
            val: 3,
            test: 0,
            seed: 0,
            strategy: SplitStrategy::GivenOrder,
        };
        let (train, val) = split_train_val(&tagged, &spec).unwrap();
        assert_eq!(train.features().data(), &[0.0, 1.0, 2.0, 3.0]);
        assert_eq!(val.features().data(), &[7.0, 8.0, 9.0]);
    }

    #[test]
    fn zscore_examples() {
        let train = numeric(&[&[0.0, 3.0], &[10.0, 3.0]], &[0, 1]);
        let stats = normalize_fit(&train, NormalizationMode::ZScore).unwrap();
        match &stats {
            NormalizationStats::ZScore { mean, std } => {
                assert_eq!(mean, &[5.0, 3.0]);
                assert_eq!(std[0], 5.0);
                assert_eq!(std[1], STD_FLOOR);
            }
            _ => unreachable!(),
        }
        let out = normalize_apply(&stats, &train).unwrap();
        assert_eq!(out.sample(1), &[1.0, 0.0]);
        assert_eq!(out.sample(0)[1], 0.0);

        // Test data is scaled with the training statistics.
        let test = numeric(&[&[20.0, 3.0], &[30.0, 3.0]], &[0, 1]);
        let scaled = normalize_apply(&stats, &test).unwrap();
        assert_eq!(scaled.sample(0)[0], 3.0);
        assert_eq!(scaled.sample(1)[0], 5.0);
    }

    #[test]
    fn image_scaling_is_idempotent_on_unit_data() {
        let raw = numeric(&[&[0.0, 255.0], &[51.0, 102.0]], &[0, 1]);
        let stats = normalize_fit(&raw, NormalizationMode::Image).unwrap();
        let scaled = normalize_apply(&stats, &raw).unwrap();
        assert_eq!(scaled.sample(0), &[0.0, 1.0]);
        let again = normalize_fit(&scaled, NormalizationMode::Image).unwrap();
        assert_eq!(again, NormalizationStats::Image { divisor: 1.0 });
    }

    fn nearest_centroid_accuracy(centers: &[Vec<f64>], ds: &Dataset) -> f64 {
        let mut correct = 0;
        for i in 0..ds.len() {
            let x = ds.sample(i);
            let best = centers
                .iter()
                .enumerate()
                .map(|(c, m)| (c, x.iter().zip(m).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()))
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .unwrap()
                .0;
            correct += (best == ds.labels()[i]) as usize;
        }
        correct as f64 / ds.len() as f64
    }

    #[test]
    fn blobs_contract() {
        let ds = synth_blobs(10, 4, 3, 6.0, 3).unwrap();
        assert_eq!(ds.len(), 30);
        assert_eq!(ds, synth_blobs(10, 4, 3, 6.0, 3).unwrap());
        let centers = blob_centers(4, 3, 6.0);
        for a in 0..3 {
            for b in a + 1..3 {
                let d: f64 = centers[a].iter().zip(&centers[b]).map(|(x, y)| (x - y) * (x - y)).sum();
                assert!(libm::sqrt(d) >= 6.0 - 1e-12);
            }
        }
        let fresh = synth_blobs(200, 2, 2, 20.0, 77).unwrap();
        assert_eq!(nearest_centroid_accuracy(&blob_centers(2, 2, 20.0), &fresh), 1.0);
    }
}
