//! Experiment protocol: hyperparameter selection on a validation split,
//! refitting on train + validation, and a single evaluation on test, for
//! networks alone, classifiers on raw features, and classifiers on
//! network-extracted features.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::classifiers::{knn_fit, svm_fit_grid, SmoConfig};
use crate::data::{Dataset, Splits};
use crate::error::ResultExt;
use crate::neural::{self, build_architecture, FeatureExtractor, InputShape, TrainedNetwork};
use crate::{Error, Result, Tensor};

/// SVM penalty values tried during validation.
pub const C_GRID: [f64; 6] = [0.01, 0.1, 1.0, 10.0, 100.0, 1000.0];
/// Fixed neighbour counts; `floor(sqrt(N))` is added per training set.
pub const K_GRID: [usize; 5] = [3, 5, 7, 11, 25];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Family {
    Nn,
    Svm,
    Knn,
    NnSvm,
    NnKnn,
}

impl Family {
    pub const ALL: [Family; 5] = [Family::Nn, Family::Svm, Family::Knn, Family::NnSvm, Family::NnKnn];

    pub fn as_str(&self) -> &'static str {
        match self {
            Family::Nn => "NN",
            Family::Svm => "SVM",
            Family::Knn => "KNN",
            Family::NnSvm => "NN/SVM",
            Family::NnKnn => "NN/KNN",
        }
    }

    /// Whether the family trains a network (and so needs an architecture).
    pub fn uses_network(&self) -> bool {
        matches!(self, Family::Nn | Family::NnSvm | Family::NnKnn)
    }

    /// The downstream classifier, if any.
    pub fn classifier(&self) -> Option<ClassifierKind> {
        match self {
            Family::Svm | Family::NnSvm => Some(ClassifierKind::Svm),
            Family::Knn | Family::NnKnn => Some(ClassifierKind::Knn),
            Family::Nn => None,
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Family::ALL
            .into_iter()
            .find(|f| f.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::InvalidParameter(format!("unknown model family {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClassifierKind {
    Svm,
    Knn,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Hyper {
    C(f64),
    K(usize),
}

impl fmt::Display for Hyper {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Hyper::C(c) => write!(f, "C={c}"),
            Hyper::K(k) => write!(f, "k={k}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HyperGrid {
    pub c_values: Vec<f64>,
    pub k_values: Vec<usize>,
}

impl HyperGrid {
    /// Standard grids for a training split of `n` samples.
    pub fn for_training_size(n: usize) -> Self {
        HyperGrid {
            c_values: C_GRID.to_vec(),
            k_values: k_grid(n),
        }
    }

    pub fn contains(&self, hyper: Hyper) -> bool {
        match hyper {
            Hyper::C(c) => self.c_values.contains(&c),
            Hyper::K(k) => self.k_values.contains(&k),
        }
    }
}

/// `{3, 5, 7, 11, 25, floor(sqrt(n))}`, deduplicated, sorted, and limited
/// to values no larger than `n`.
pub fn k_grid(n: usize) -> Vec<usize> {
    let mut ks: Vec<usize> = K_GRID.to_vec();
    ks.push(isqrt(n));
    ks.retain(|&k| k >= 1 && k <= n);
    ks.sort_unstable();
    ks.dedup();
    ks
}

fn isqrt(n: usize) -> usize {
    let mut r = libm::sqrt(n as f64) as usize;
    while r * r > n {
        r -= 1;
    }
    while (r + 1) * (r + 1) <= n {
        r += 1;
    }
    r
}

/// One row of a results table.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub model_family: Family,
    pub architecture_id: Option<u8>,
    pub epochs: u32,
    pub chosen_hyper: Option<Hyper>,
    pub test_accuracy: f64,
    pub seed: u64,
    pub dataset_name: String,
}

/// Read access to the three partitions of an experiment. Every protocol
/// step goes through this trait, so wrappers can audit which split is read
/// and when.
pub trait SplitSource {
    fn train(&self) -> &Dataset;
    fn validation(&self) -> &Dataset;
    fn test(&self) -> &Dataset;
}

impl SplitSource for Splits {
    fn train(&self) -> &Dataset {
        &self.train
    }

    fn validation(&self) -> &Dataset {
        &self.val
    }

    fn test(&self) -> &Dataset {
        &self.test
    }
}

pub fn accuracy(predictions: &[usize], truth: &[usize]) -> Result<f64> {
    if predictions.len() != truth.len() {
        return Err(Error::ShapeMismatch {
            op: "accuracy",
            left: alloc::vec![predictions.len()],
            right: alloc::vec![truth.len()],
        });
    }
    if truth.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let correct = predictions.iter().zip(truth).filter(|(p, t)| p == t).count();
    Ok(correct as f64 / truth.len() as f64)
}

/// Features as an `[N, D]` matrix, whatever the per-sample shape.
pub fn flat_features(data: &Dataset) -> Result<Tensor> {
    data.features().clone().reshape(&[data.len(), data.sample_len()])
}

/// A fitted SVM or KNN behind one interface.
enum Fitted {
    Svm(crate::classifiers::SvmModel),
    Knn(crate::classifiers::KnnModel),
}

impl Fitted {
    fn predict(&self, points: &Tensor) -> Result<Vec<usize>> {
        match self {
            Fitted::Svm(m) => m.predict_batch(points),
            Fitted::Knn(m) => m.predict_batch(points),
        }
    }
}

fn fit(kind: ClassifierKind, data: &Dataset, hyper: Hyper) -> Result<Fitted> {
    let points = flat_features(data)?;
    match (kind, hyper) {
        (ClassifierKind::Svm, Hyper::C(c)) => {
            let mut models = svm_fit_grid(&points, data.labels(), &[c], &SmoConfig::default())?;
            Ok(Fitted::Svm(models.pop().expect("one C")))
        }
        (ClassifierKind::Knn, Hyper::K(k)) => Ok(Fitted::Knn(knn_fit(points, data.labels().to_vec(), k)?)),
        _ => Err(Error::InvalidParameter(format!("{hyper} does not apply to {kind:?}"))),
    }
}

/// Fits one model per grid value on `train`, scores each on `val`, and
/// returns the most accurate value. Ties go to the smaller value.
pub fn validate_select(kind: ClassifierKind, train: &Dataset, val: &Dataset, grid: &HyperGrid) -> Result<Hyper> {
    let candidates: Vec<Hyper> = match kind {
        ClassifierKind::Svm => {
            let mut cs = grid.c_values.clone();
            cs.sort_by(f64::total_cmp);
            cs.into_iter().map(Hyper::C).collect()
        }
        ClassifierKind::Knn => {
            let mut ks = grid.k_values.clone();
            ks.sort_unstable();
            ks.into_iter().map(Hyper::K).collect()
        }
    };
    if candidates.is_empty() {
        return Err(Error::InvalidParameter("empty hyperparameter grid".into()));
    }
    let points = flat_features(train)?;
    let val_points = flat_features(val)?;
    let scores: Vec<f64> = match kind {
        ClassifierKind::Svm => {
            let cs: Vec<f64> = candidates
                .iter()
                .map(|h| match *h {
                    Hyper::C(c) if c > 0.0 => Ok(c),
                    h => Err(Error::InvalidParameter("C must be positive".into()).context(format!("{h}"))),
                })
                .collect::<Result<_>>()?;
            let models = svm_fit_grid(&points, train.labels(), &cs, &SmoConfig::default())
                .context_with(|| format!("SVM over C grid {cs:?}"))?;
            models
                .iter()
                .zip(&candidates)
                .map(|(m, h)| {
                    accuracy(&m.predict_batch(&val_points)?, val.labels()).context_with(|| format!("{h}"))
                })
                .collect::<Result<_>>()?
        }
        ClassifierKind::Knn => {
            let ks: Vec<usize> = candidates
                .iter()
                .map(|h| match *h {
                    Hyper::K(k) => k,
                    Hyper::C(_) => unreachable!(),
                })
                .collect();
            for &k in &ks {
                knn_fit(points.clone(), train.labels().to_vec(), k).context_with(|| format!("k={k}"))?;
            }
            let model = knn_fit(points, train.labels().to_vec(), 1)?;
            let mut per_k: Vec<Vec<usize>> = ks.iter().map(|_| Vec::with_capacity(val.len())).collect();
            for i in 0..val_points.rows() {
                for (preds, p) in per_k.iter_mut().zip(model.predict_for_ks(val_points.row(i), &ks)?) {
                    preds.push(p);
                }
            }
            per_k
                .iter()
                .map(|preds| accuracy(preds, val.labels()))
                .collect::<Result<_>>()?
        }
    };
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = i;
        }
    }
    Ok(candidates[best])
}

/// Selects the hyperparameter on (train, validation), refits on
/// train + validation and scores once on test.
fn select_refit_evaluate(
    kind: ClassifierKind,
    train: &Dataset,
    val: &Dataset,
    test: impl FnOnce() -> Result<Dataset>,
) -> Result<(Hyper, f64)> {
    let grid = HyperGrid::for_training_size(train.len());
    let hyper = validate_select(kind, train, val, &grid).context_with(|| "validation".to_string())?;
    let merged = train.concat(val)?;
    let model = fit(kind, &merged, hyper).context_with(|| format!("refit with {hyper}"))?;
    let test = test()?;
    let acc = accuracy(&model.predict(&flat_features(&test)?)?, test.labels())?;
    Ok((hyper, acc))
}

/// SVM or KNN on raw features.
pub fn run_baseline_classifier(kind: ClassifierKind, source: &impl SplitSource) -> Result<ExperimentResult> {
    let train = source.train();
    let (hyper, acc) = select_refit_evaluate(kind, train, source.validation(), || Ok(source.test().clone()))?;
    Ok(ExperimentResult {
        model_family: match kind {
            ClassifierKind::Svm => Family::Svm,
            ClassifierKind::Knn => Family::Knn,
        },
        architecture_id: None,
        epochs: 0,
        chosen_hyper: Some(hyper),
        test_accuracy: acc,
        seed: 0,
        dataset_name: train.name.clone(),
    })
}

fn spec_for(arch_id: u8, source: &impl SplitSource) -> Result<neural::ArchitectureSpec> {
    let train = source.train();
    let input = InputShape::from_dims(train.sample_shape())?;
    let classes = train.class_count().max(source.validation().class_count());
    build_architecture(arch_id, input, classes)
}

/// Network alone: trained on train + validation, scored on test.
pub fn run_network_baseline(
    arch_id: u8,
    source: &impl SplitSource,
    epochs: u32,
    seed: u64,
) -> Result<ExperimentResult> {
    let spec = spec_for(arch_id, source)?;
    let merged = source.train().concat(source.validation())?;
    let net = neural::train(&spec, &merged, epochs, seed).context_with(|| format!("training architecture {arch_id}"))?;
    let test = source.test();
    let acc = accuracy(&net.predict(test)?, test.labels())?;
    Ok(ExperimentResult {
        model_family: Family::Nn,
        architecture_id: Some(arch_id),
        epochs,
        chosen_hyper: None,
        test_accuracy: acc,
        seed,
        dataset_name: source.train().name.clone(),
    })
}

/// A network trained on the training split only, its feature extractor,
/// and the extracted train and validation features. Shared by the NN/SVM
/// and NN/KNN runs of the same architecture, epochs and seed.
#[derive(Debug, Clone)]
pub struct HybridStage {
    pub arch_id: u8,
    pub epochs: u32,
    pub seed: u64,
    pub network: TrainedNetwork,
    pub extractor: FeatureExtractor,
    pub train_features: Dataset,
    pub val_features: Dataset,
}

pub fn prepare_hybrid(arch_id: u8, source: &impl SplitSource, epochs: u32, seed: u64) -> Result<HybridStage> {
    let spec = spec_for(arch_id, source)?;
    let train = source.train();
    let network = neural::train(&spec, train, epochs, seed)
        .context_with(|| format!("training architecture {arch_id} on the training split"))?;
    let extractor = network.strip_softmax().context_with(|| "removing the softmax layer".to_string())?;
    let train_features =
        neural::extract_dataset(&extractor, train).context_with(|| "extracting training features".to_string())?;
    let val_features = neural::extract_dataset(&extractor, source.validation())
        .context_with(|| "extracting validation features".to_string())?;
    Ok(HybridStage {
        arch_id,
        epochs,
        seed,
        network,
        extractor,
        train_features,
        val_features,
    })
}

/// Validates and refits a classifier on a prepared stage's features, then
/// extracts and scores the test features.
pub fn finish_hybrid(stage: &HybridStage, kind: ClassifierKind, source: &impl SplitSource) -> Result<ExperimentResult> {
    let (hyper, acc) = select_refit_evaluate(kind, &stage.train_features, &stage.val_features, || {
        neural::extract_dataset(&stage.extractor, source.test()).context_with(|| "extracting test features".to_string())
    })?;
    Ok(ExperimentResult {
        model_family: match kind {
            ClassifierKind::Svm => Family::NnSvm,
            ClassifierKind::Knn => Family::NnKnn,
        },
        architecture_id: Some(stage.arch_id),
        epochs: stage.epochs,
        chosen_hyper: Some(hyper),
        test_accuracy: acc,
        seed: stage.seed,
        dataset_name: source.train().name.clone(),
    })
}

/// NN/SVM or NN/KNN end to end.
pub fn run_hybrid(
    arch_id: u8,
    kind: ClassifierKind,
    source: &impl SplitSource,
    epochs: u32,
    seed: u64,
) -> Result<ExperimentResult> {
    let stage = prepare_hybrid(arch_id, source, epochs, seed)?;
    finish_hybrid(&stage, kind, source)
}
