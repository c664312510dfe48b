//! Run manifests: a TOML file naming one dataset, how to split it, and the
//! experiments to run on it.
//!
//! ```toml
//! name = "mnist-desk"
//! output_dir = "results/mnist"      # relative to the manifest
//! aggregation = "peak"              # or "per-run"
//!
//! [dataset]
//! name = "MNIST"
//! kind = "image"                    # or "numeric"
//! train_images = "data/mnist/train-images-idx3-ubyte"
//! train_labels = "data/mnist/train-labels-idx1-ubyte"
//! test_images = "data/mnist/t10k-images-idx3-ubyte"
//! test_labels = "data/mnist/t10k-labels-idx1-ubyte"
//! # Delimited files instead: path, label_column (negative counts from the
//! # end), header, delimiter, skip_columns.
//!
//! [split]
//! train = 50000
//! val = 10000
//! test = 10000
//! seed = 0
//! strategy = "given-order"          # or "shuffled"
//!
//! [defaults]
//! epochs = [2, 5, 10, 20]
//! seeds = [1, 2, 3]
//!
//! [[experiment]]
//! family = "NN/SVM"                 # NN, SVM, KNN, NN/SVM, NN/KNN
//! architecture = 2
//! epochs = [5]                      # network families only
//! seeds = [1, 2, 3]
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use nnhybrid_core::data::{SplitSpec, SplitStrategy};
use nnhybrid_core::pipeline::Family;
use serde::Deserialize;
use sha2::{Digest, Sha256};

use crate::error::{io_err, Error, FieldError, Result};
use crate::tabular::CsvOptions;

pub const DEFAULT_EPOCHS: [u32; 4] = [2, 5, 10, 20];
pub const DEFAULT_SEEDS: [u64; 3] = [1, 2, 3];

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawManifest {
    name: Option<String>,
    output_dir: Option<PathBuf>,
    aggregation: Option<String>,
    dataset: Option<RawDataset>,
    split: Option<RawSplit>,
    defaults: Option<RawDefaults>,
    #[serde(default, rename = "experiment")]
    experiments: Vec<RawExperiment>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDataset {
    name: Option<String>,
    kind: Option<String>,
    train_images: Option<PathBuf>,
    train_labels: Option<PathBuf>,
    test_images: Option<PathBuf>,
    test_labels: Option<PathBuf>,
    path: Option<PathBuf>,
    label_column: Option<i64>,
    header: Option<bool>,
    delimiter: Option<String>,
    skip_columns: Option<Vec<usize>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSplit {
    train: Option<i64>,
    val: Option<i64>,
    test: Option<i64>,
    seed: Option<u64>,
    strategy: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDefaults {
    epochs: Option<Vec<i64>>,
    seeds: Option<Vec<u64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawExperiment {
    family: Option<String>,
    architecture: Option<i64>,
    epochs: Option<Vec<i64>>,
    seeds: Option<Vec<u64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataKind {
    Image,
    Numeric,
}

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Idx {
        train_images: PathBuf,
        train_labels: PathBuf,
        /// Separate test files; without them the test block is split off
        /// the training file.
        test: Option<(PathBuf, PathBuf)>,
    },
    Csv {
        path: PathBuf,
        options: CsvOptions,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetConfig {
    pub name: String,
    pub kind: DataKind,
    pub source: DataSource,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Experiment {
    pub family: Family,
    pub architecture: Option<u8>,
    /// Empty for the SVM and KNN baselines, which train no network.
    pub epochs: Vec<u32>,
    pub seeds: Vec<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Aggregation {
    PerRun,
    Peak,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunManifest {
    pub name: String,
    pub dataset: DatasetConfig,
    pub split: SplitSpec,
    pub experiments: Vec<Experiment>,
    pub output_dir: PathBuf,
    pub aggregation: Aggregation,
}

/// One (family, architecture, epochs, seed) combination to execute.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Cell {
    pub family: Family,
    pub architecture: Option<u8>,
    pub epochs: u32,
    pub seed: u64,
}

struct Checker {
    errors: Vec<FieldError>,
}

impl Checker {
    fn push(&mut self, field: impl Into<String>, message: impl Into<String>) {
        self.errors.push(FieldError { field: field.into(), message: message.into() });
    }

    fn count(&mut self, field: &str, v: Option<i64>) -> usize {
        match v {
            None => {
                self.push(field, "required");
                0
            }
            Some(v) if v <= 0 => {
                self.push(field, format!("must be a positive integer, got {v}"));
                0
            }
            Some(v) => v as usize,
        }
    }

    fn epochs(&mut self, field: &str, v: &[i64]) -> Vec<u32> {
        if v.is_empty() {
            self.push(field, "must list at least one epoch count");
        }
        let mut out = Vec::new();
        for &e in v {
            match u32::try_from(e) {
                Ok(e) => out.push(e),
                Err(_) => self.push(field, format!("epoch count {e} is out of range")),
            }
        }
        self.no_duplicates(field, &out);
        out
    }

    fn seeds(&mut self, field: &str, v: &[u64]) -> Vec<u64> {
        if v.is_empty() {
            self.push(field, "must list at least one seed");
        }
        self.no_duplicates(field, v);
        v.to_vec()
    }

    fn no_duplicates<T: Ord + Copy + std::fmt::Display>(&mut self, field: &str, v: &[T]) {
        let mut sorted = v.to_vec();
        sorted.sort();
        if let Some(w) = sorted.windows(2).find(|w| w[0] == w[1]) {
            self.push(field, format!("{} is listed twice", w[0]));
        }
    }
}

fn resolve(base: &Path, p: PathBuf) -> PathBuf {
    if p.is_absolute() {
        p
    } else {
        base.join(p)
    }
}

fn parse_delimiter(c: &mut Checker, s: Option<String>) -> u8 {
    match s.as_deref() {
        None => b',',
        Some("\\t") | Some("tab") => b'\t',
        Some("space") => b' ',
        Some(s) if s.len() == 1 && s.is_ascii() => s.as_bytes()[0],
        Some(s) => {
            c.push("dataset.delimiter", format!("expected a single ASCII character, got {s:?}"));
            b','
        }
    }
}

fn parse_dataset(c: &mut Checker, raw: Option<RawDataset>, base: &Path, fallback_name: &str) -> Option<DatasetConfig> {
    let Some(d) = raw else {
        c.push("dataset", "required");
        return None;
    };
    let kind = match d.kind.as_deref() {
        Some("image") => Some(DataKind::Image),
        Some("numeric") => Some(DataKind::Numeric),
        Some(other) => {
            c.push("dataset.kind", format!("expected \"image\" or \"numeric\", got {other:?}"));
            None
        }
        None => {
            c.push("dataset.kind", "required (\"image\" or \"numeric\")");
            None
        }
    };
    let idx_fields = d.train_images.is_some() || d.train_labels.is_some();
    let csv_only = d.label_column.is_some() || d.header.is_some() || d.delimiter.is_some() || d.skip_columns.is_some();
    let source = match (idx_fields, d.path) {
        (true, Some(_)) => {
            c.push("dataset.path", "give either path or train_images/train_labels, not both");
            None
        }
        (false, None) => {
            c.push("dataset.path", "required (or train_images and train_labels for IDX files)");
            None
        }
        (true, None) => {
            if csv_only {
                c.push("dataset", "label_column, header, delimiter and skip_columns apply only to delimited files");
            }
            if kind == Some(DataKind::Numeric) {
                c.push("dataset.kind", "IDX files hold images; use kind = \"image\"");
            }
            let test = match (d.test_images, d.test_labels) {
                (Some(i), Some(l)) => Some((resolve(base, i), resolve(base, l))),
                (None, None) => None,
                _ => {
                    c.push("dataset.test_images", "test_images and test_labels must be given together");
                    None
                }
            };
            match (d.train_images, d.train_labels) {
                (Some(i), Some(l)) => {
                    Some(DataSource::Idx { train_images: resolve(base, i), train_labels: resolve(base, l), test })
                }
                _ => {
                    c.push("dataset.train_labels", "train_images and train_labels must be given together");
                    None
                }
            }
        }
        (false, Some(path)) => {
            if d.test_images.is_some() || d.test_labels.is_some() {
                c.push("dataset.test_images", "separate test files are supported for IDX data only");
            }
            let delimiter = parse_delimiter(c, d.delimiter);
            Some(DataSource::Csv {
                path: resolve(base, path),
                options: CsvOptions {
                    label_column: d.label_column.unwrap_or(-1) as isize,
                    header: d.header.unwrap_or(false),
                    delimiter,
                    skip_columns: d.skip_columns.unwrap_or_default(),
                },
            })
        }
    };
    let name = d.name.unwrap_or_else(|| fallback_name.to_string());
    if name.trim().is_empty() {
        c.push("dataset.name", "must not be empty");
    }
    Some(DatasetConfig { name, kind: kind?, source: source? })
}

fn parse_split(c: &mut Checker, raw: Option<RawSplit>) -> Option<SplitSpec> {
    let Some(s) = raw else {
        c.push("split", "required");
        return None;
    };
    let strategy = match s.strategy.as_deref() {
        None | Some("shuffled") => SplitStrategy::Shuffled,
        Some("given-order") => SplitStrategy::GivenOrder,
        Some(other) => {
            c.push("split.strategy", format!("expected \"shuffled\" or \"given-order\", got {other:?}"));
            SplitStrategy::Shuffled
        }
    };
    Some(SplitSpec {
        train: c.count("split.train", s.train),
        val: c.count("split.val", s.val),
        test: c.count("split.test", s.test),
        seed: s.seed.unwrap_or(0),
        strategy,
    })
}

fn parse_experiment(
    c: &mut Checker,
    i: usize,
    e: RawExperiment,
    kind: Option<DataKind>,
    default_epochs: &[i64],
    default_seeds: &[u64],
) -> Option<Experiment> {
    let field = |name: &str| format!("experiment[{i}].{name}");
    let family = match e.family.as_deref().map(str::parse::<Family>) {
        Some(Ok(f)) => Some(f),
        Some(Err(_)) => {
            c.push(field("family"), format!("expected one of NN, SVM, KNN, NN/SVM, NN/KNN, got {:?}", e.family.unwrap()));
            None
        }
        None => {
            c.push(field("family"), "required");
            None
        }
    };
    let seeds = c.seeds(&field("seeds"), e.seeds.as_deref().unwrap_or(default_seeds));
    let family = family?;
    let mut architecture = None;
    let mut epochs = Vec::new();
    if family.uses_network() {
        match e.architecture {
            None => c.push(field("architecture"), format!("required for family {family}")),
            Some(a) if !(1..=7).contains(&a) => c.push(field("architecture"), format!("must be 1 to 7, got {a}")),
            Some(a) => {
                let image_arch = a <= 4;
                match kind {
                    Some(DataKind::Image) if !image_arch => c.push(
                        field("architecture"),
                        format!("architecture {a} takes numeric input but the dataset holds images (use 1 to 4)"),
                    ),
                    Some(DataKind::Numeric) if image_arch => c.push(
                        field("architecture"),
                        format!("architecture {a} takes images but the dataset is numeric (use 5 to 7)"),
                    ),
                    _ => {}
                }
                architecture = Some(a as u8);
            }
        }
        epochs = c.epochs(&field("epochs"), e.epochs.as_deref().unwrap_or(default_epochs));
    } else {
        if e.architecture.is_some() {
            c.push(field("architecture"), format!("{family} baselines take no architecture"));
        }
        if e.epochs.is_some() {
            c.push(field("epochs"), format!("{family} baselines train no network"));
        }
    }
    Some(Experiment { family, architecture, epochs, seeds })
}

impl RunManifest {
    /// Parses and validates manifest text; relative paths resolve against
    /// `base_dir`. Every problem found is reported, not just the first.
    pub fn parse(text: &str, base_dir: &Path, default_name: &str) -> Result<Self> {
        let raw: RawManifest = toml::from_str(text).map_err(|e| {
            Error::Manifest(vec![FieldError { field: "manifest".into(), message: e.to_string().trim().to_string() }])
        })?;
        let mut c = Checker { errors: Vec::new() };
        let name = raw.name.unwrap_or_else(|| default_name.to_string());
        let aggregation = match raw.aggregation.as_deref() {
            None | Some("peak") => Aggregation::Peak,
            Some("per-run") => Aggregation::PerRun,
            Some(other) => {
                c.push("aggregation", format!("expected \"peak\" or \"per-run\", got {other:?}"));
                Aggregation::Peak
            }
        };
        let dataset = parse_dataset(&mut c, raw.dataset, base_dir, &name);
        let split = parse_split(&mut c, raw.split);
        let defaults = raw.defaults.unwrap_or(RawDefaults { epochs: None, seeds: None });
        let default_epochs: Vec<i64> =
            defaults.epochs.unwrap_or_else(|| DEFAULT_EPOCHS.iter().map(|&e| e as i64).collect());
        let default_seeds = defaults.seeds.unwrap_or_else(|| DEFAULT_SEEDS.to_vec());
        if raw.experiments.is_empty() {
            c.push("experiment", "at least one [[experiment]] is required");
        }
        let kind = dataset.as_ref().map(|d| d.kind);
        let experiments: Vec<Option<Experiment>> = raw
            .experiments
            .into_iter()
            .enumerate()
            .map(|(i, e)| parse_experiment(&mut c, i, e, kind, &default_epochs, &default_seeds))
            .collect();

        let mut seen: BTreeMap<Cell, usize> = BTreeMap::new();
        for (i, e) in experiments.iter().enumerate() {
            let Some(e) = e else { continue };
            for cell in e.cells() {
                if let Some(&j) = seen.get(&cell) {
                    c.push(format!("experiment[{i}]"), format!("repeats cells of experiment[{j}]"));
                    break;
                }
                seen.insert(cell, i);
            }
        }

        let output_dir = resolve(base_dir, raw.output_dir.unwrap_or_else(|| PathBuf::from("results")));
        if !c.errors.is_empty() {
            return Err(Error::Manifest(c.errors));
        }
        Ok(RunManifest {
            name,
            dataset: dataset.expect("checked"),
            split: split.expect("checked"),
            experiments: experiments.into_iter().map(|e| e.expect("checked")).collect(),
            output_dir,
            aggregation,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let stem = path.file_stem().map_or_else(|| "run".into(), |s| s.to_string_lossy().into_owned());
        Self::parse(&text, base, &stem)
    }

    /// Replaces every network experiment's epoch list.
    pub fn override_epochs(&mut self, epochs: &[u32]) {
        for e in self.experiments.iter_mut().filter(|e| e.family.uses_network()) {
            e.epochs = epochs.to_vec();
        }
    }

    pub fn override_seeds(&mut self, seeds: &[u64]) {
        for e in &mut self.experiments {
            e.seeds = seeds.to_vec();
        }
    }

    /// Every cell in manifest order: experiments, then epochs, then seeds.
    pub fn cells(&self) -> Vec<Cell> {
        self.experiments.iter().flat_map(Experiment::cells).collect()
    }

    /// Stable identity of a cell: a hash over the dataset, the split and
    /// the cell's own fields. Paths contribute only their file names, so
    /// moving the data does not invalidate finished cells.
    pub fn cell_id(&self, cell: &Cell) -> String {
        let file = |p: &Path| p.file_name().map_or_else(String::new, |n| n.to_string_lossy().into_owned());
        let source = match &self.dataset.source {
            DataSource::Idx { train_images, train_labels, test } => format!(
                "idx:{}:{}:{}",
                file(train_images),
                file(train_labels),
                test.as_ref().map_or_else(String::new, |(i, l)| format!("{}:{}", file(i), file(l)))
            ),
            DataSource::Csv { path, options } => format!(
                "csv:{}:{}:{}:{}:{:?}",
                file(path),
                options.label_column,
                options.header,
                options.delimiter,
                options.skip_columns
            ),
        };
        let key = format!(
            "v1|{}|{:?}|{}|{}/{}/{}/{}/{:?}|{}|{:?}|{}|{}",
            self.dataset.name,
            self.dataset.kind,
            source,
            self.split.train,
            self.split.val,
            self.split.test,
            self.split.seed,
            self.split.strategy,
            cell.family,
            cell.architecture,
            cell.epochs,
            cell.seed
        );
        let digest = Sha256::digest(key.as_bytes());
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}

impl Experiment {
    pub fn cells(&self) -> Vec<Cell> {
        let epochs: &[u32] = if self.family.uses_network() { &self.epochs } else { &[0] };
        epochs
            .iter()
            .flat_map(|&epochs| {
                self.seeds.iter().map(move |&seed| Cell {
                    family: self.family,
                    architecture: self.architecture,
                    epochs,
                    seed,
                })
            })
            .collect()
    }
}
