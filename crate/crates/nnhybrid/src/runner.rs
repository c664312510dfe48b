//! Executes a manifest's cells and writes the result files.
//!
//! Output directory layout:
//! - `results.jsonl`: one record per finished cell, appended as cells
//!   finish and rewritten in manifest order at the end, so reruns are
//!   byte-identical regardless of scheduling.
//! - `timings.jsonl`: wall time per cell. Kept apart from the results
//!   because it differs between runs.
//! - `failures.jsonl`: present only when some cell failed.
//! - `report.txt`, `accuracy_vs_epochs.csv`: rendered from the results.

use std::collections::{BTreeMap, HashSet};
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;
use std::time::Instant;

use nnhybrid_core::data::{
    normalize_apply, normalize_fit, split, split_train_val, Dataset, NormalizationMode, SplitSpec, SplitStrategy,
    Splits,
};
use nnhybrid_core::pipeline::{
    finish_hybrid, prepare_hybrid, run_baseline_classifier, run_network_baseline, ClassifierKind, ExperimentResult,
    Family, Hyper,
};
use nnhybrid_core::neural::{extract_dataset, TrainedNetwork};
use serde::{Deserialize, Serialize};

use crate::codec;
use crate::error::{io_err, Error, Result};
use crate::idx::{idx_count, load_idx, load_idx_rows};
use crate::manifest::{Aggregation, Cell, DataKind, DataSource, DatasetConfig, RunManifest};
use crate::report::{plot_series, report_runs, report_table, ReportFormat};
use crate::tabular::load_csv;

pub const SCHEMA_VERSION: u32 = 1;
pub const RESULTS_FILE: &str = "results.jsonl";
pub const TIMINGS_FILE: &str = "timings.jsonl";
pub const FAILURES_FILE: &str = "failures.jsonl";
pub const REPORT_FILE: &str = "report.txt";
pub const PLOT_FILE: &str = "accuracy_vs_epochs.csv";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum HyperRecord {
    C(f64),
    #[serde(rename = "k")]
    K(usize),
}

/// One line of `results.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub schema: u32,
    pub cell_id: String,
    pub model_family: String,
    pub architecture_id: Option<u8>,
    pub epochs: u32,
    pub chosen_hyper: Option<HyperRecord>,
    pub test_accuracy: f64,
    pub seed: u64,
    pub dataset_name: String,
}

impl ResultRecord {
    pub fn new(cell_id: String, r: &ExperimentResult) -> Self {
        ResultRecord {
            schema: SCHEMA_VERSION,
            cell_id,
            model_family: r.model_family.to_string(),
            architecture_id: r.architecture_id,
            epochs: r.epochs,
            chosen_hyper: r.chosen_hyper.map(|h| match h {
                Hyper::C(c) => HyperRecord::C(c),
                Hyper::K(k) => HyperRecord::K(k),
            }),
            test_accuracy: r.test_accuracy,
            seed: r.seed,
            dataset_name: r.dataset_name.clone(),
        }
    }

    pub fn to_result(&self) -> Result<ExperimentResult> {
        Ok(ExperimentResult {
            model_family: self.model_family.parse::<Family>()?,
            architecture_id: self.architecture_id,
            epochs: self.epochs,
            chosen_hyper: self.chosen_hyper.map(|h| match h {
                HyperRecord::C(c) => Hyper::C(c),
                HyperRecord::K(k) => Hyper::K(k),
            }),
            test_accuracy: self.test_accuracy,
            seed: self.seed,
            dataset_name: self.dataset_name.clone(),
        })
    }

    fn to_line(&self) -> String {
        serde_json::to_string(self).expect("plain values serialize")
    }
}

/// Reads a results file. A malformed final line (an interrupted write) is
/// ignored; malformed lines elsewhere are errors.
pub fn read_results(path: &Path) -> Result<Vec<ResultRecord>> {
    let file = File::open(path).map_err(io_err(path))?;
    let lines: Vec<String> = BufReader::new(file).lines().collect::<std::io::Result<_>>().map_err(io_err(path))?;
    let mut out = Vec::new();
    let last = lines.iter().rposition(|l| !l.trim().is_empty());
    for (i, line) in lines.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<ResultRecord>(line) {
            Ok(r) => out.push(r),
            Err(_) if Some(i) == last => {}
            Err(source) => return Err(Error::Json { path: path.into(), source }),
        }
    }
    Ok(out)
}

fn with_classes(d: &Dataset, name: &str, class_count: usize) -> Result<Dataset> {
    Ok(Dataset::new(name, d.features().clone(), d.labels().to_vec(), class_count)?)
}

fn as_images(d: Dataset, path: &Path) -> Result<Dataset> {
    let dims = d.sample_len();
    let side = (dims as f64).sqrt().round() as usize;
    if side * side != dims {
        return Err(Error::Corrupt {
            path: path.into(),
            message: format!("{dims} pixel columns do not form a square image"),
        });
    }
    let features = d.features().clone().reshape(&[d.len(), 1, side, side])?;
    Ok(d.with_features(features)?)
}

fn check_fits(requested: usize, available: usize) -> Result<()> {
    if requested > available {
        return Err(nnhybrid_core::Error::SplitTooLarge { requested, available }.into());
    }
    Ok(())
}

/// Loads the dataset, partitions it and normalizes all three splits with
/// statistics fitted on the training split.
pub fn load_splits(dataset: &DatasetConfig, spec: &SplitSpec) -> Result<Splits> {
    let raw = match &dataset.source {
        DataSource::Idx { train_images, train_labels, test: Some((test_images, test_labels)) } => {
            let (train, val) = match spec.strategy {
                // Read only the head and tail blocks that are used.
                SplitStrategy::GivenOrder => {
                    let n = idx_count(train_images)?;
                    check_fits(spec.train + spec.val, n)?;
                    (
                        load_idx_rows(train_images, train_labels, 0, spec.train)?,
                        load_idx_rows(train_images, train_labels, n - spec.val, spec.val)?,
                    )
                }
                SplitStrategy::Shuffled => split_train_val(&load_idx(train_images, train_labels)?, spec)?,
            };
            check_fits(spec.test, idx_count(test_images)?)?;
            let test = load_idx_rows(test_images, test_labels, 0, spec.test)?;
            Splits { train, val, test }
        }
        DataSource::Idx { train_images, train_labels, test: None } => {
            split(&load_idx(train_images, train_labels)?, spec)?
        }
        DataSource::Csv { path, options } => {
            let mut d = load_csv(path, options)?;
            if dataset.kind == DataKind::Image {
                d = as_images(d, path)?;
            }
            split(&d, spec)?
        }
    };
    let classes = raw.train.class_count().max(raw.val.class_count()).max(raw.test.class_count());
    let train = with_classes(&raw.train, &dataset.name, classes)?;
    let mode = match dataset.kind {
        DataKind::Image => NormalizationMode::Image,
        DataKind::Numeric => NormalizationMode::ZScore,
    };
    let stats = normalize_fit(&train, mode)?;
    Ok(Splits {
        train: normalize_apply(&stats, &train)?,
        val: normalize_apply(&stats, &with_classes(&raw.val, &dataset.name, classes)?)?,
        test: normalize_apply(&stats, &with_classes(&raw.test, &dataset.name, classes)?)?,
    })
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    /// Worker threads; cells sharing a trained network stay on one worker.
    pub jobs: usize,
    /// Ignore results from an earlier, interrupted run.
    pub fresh: bool,
    /// Also write trained networks and the normalized splits as binary
    /// artifacts under `artifacts/`.
    pub save_artifacts: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions { jobs: 1, fresh: false, save_artifacts: false }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellFailure {
    pub cell_id: String,
    pub cell: Cell,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub output_dir: PathBuf,
    pub total: usize,
    pub executed: usize,
    pub resumed: usize,
    pub failures: Vec<CellFailure>,
}

impl RunSummary {
    pub fn succeeded(&self) -> bool {
        self.failures.is_empty()
    }
}

/// A unit of work: cells that share their expensive part.
enum Unit {
    /// All seeds of a baseline give the same result; it is computed once.
    Baseline(ClassifierKind, Vec<usize>),
    Network(usize),
    /// NN/SVM and NN/KNN cells on one trained feature extractor.
    Hybrid { arch: u8, epochs: u32, seed: u64, cells: Vec<usize> },
}

fn plan(cells: &[Cell], pending: &[bool]) -> Vec<Unit> {
    let mut units = Vec::new();
    let mut baseline: BTreeMap<Family, usize> = BTreeMap::new();
    let mut hybrid: BTreeMap<(u8, u32, u64), usize> = BTreeMap::new();
    for (i, c) in cells.iter().enumerate().filter(|(i, _)| pending[*i]) {
        match c.family {
            Family::Svm | Family::Knn => {
                let kind = c.family.classifier().expect("baseline family");
                let u = *baseline.entry(c.family).or_insert_with(|| {
                    units.push(Unit::Baseline(kind, Vec::new()));
                    units.len() - 1
                });
                if let Unit::Baseline(_, v) = &mut units[u] {
                    v.push(i);
                }
            }
            Family::Nn => units.push(Unit::Network(i)),
            Family::NnSvm | Family::NnKnn => {
                let arch = c.architecture.expect("validated");
                let u = *hybrid.entry((arch, c.epochs, c.seed)).or_insert_with(|| {
                    units.push(Unit::Hybrid { arch, epochs: c.epochs, seed: c.seed, cells: Vec::new() });
                    units.len() - 1
                });
                if let Unit::Hybrid { cells, .. } = &mut units[u] {
                    cells.push(i);
                }
            }
        }
    }
    units
}

type Outcome = (usize, std::result::Result<ExperimentResult, String>, f64);

fn execute(
    unit: &Unit,
    cells: &[Cell],
    splits: &Splits,
    artifacts: Option<&Path>,
    send: &mut dyn FnMut(Outcome),
) {
    let start = Instant::now();
    let elapsed = || start.elapsed().as_secs_f64();
    match unit {
        Unit::Baseline(kind, idx) => {
            let r = run_baseline_classifier(*kind, splits).map_err(|e| e.to_string());
            for &i in idx {
                let r = r.clone().map(|mut r| {
                    r.seed = cells[i].seed;
                    r
                });
                send((i, r, elapsed()));
            }
        }
        Unit::Network(i) => {
            let c = cells[*i];
            let arch = c.architecture.expect("validated");
            let r = run_network_baseline(arch, splits, c.epochs, c.seed).map_err(|e| e.to_string());
            send((*i, r, elapsed()));
        }
        Unit::Hybrid { arch, epochs, seed, cells: idx } => match prepare_hybrid(*arch, splits, *epochs, *seed) {
            Ok(stage) => {
                if let Some(dir) = artifacts {
                    let path = dir.join(format!("hybrid-a{arch}-e{epochs}-s{seed}.dhnn"));
                    if let Err(e) = codec::save(&path, &stage.network) {
                        for &i in idx {
                            send((i, Err(e.to_string()), elapsed()));
                        }
                        return;
                    }
                }
                for &i in idx {
                    let kind = cells[i].family.classifier().expect("hybrid family");
                    send((i, finish_hybrid(&stage, kind, splits).map_err(|e| e.to_string()), elapsed()));
                }
            }
            Err(e) => {
                for &i in idx {
                    send((i, Err(e.to_string()), elapsed()));
                }
            }
        },
    }
}

fn append_line(path: &Path, line: &str) -> Result<()> {
    let mut f = OpenOptions::new().create(true).append(true).open(path).map_err(io_err(path))?;
    writeln!(f, "{line}").map_err(io_err(path))?;
    f.flush().map_err(io_err(path))
}

fn write_atomically(path: &Path, contents: &str) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, contents).map_err(io_err(&tmp))?;
    fs::rename(&tmp, path).map_err(io_err(path))
}

/// Runs every cell of the manifest that has no result yet, then rewrites
/// the results file in manifest order and renders the reports.
pub fn run_manifest(manifest: &RunManifest, options: &RunOptions) -> Result<RunSummary> {
    let out = &manifest.output_dir;
    fs::create_dir_all(out).map_err(io_err(out))?;
    let results_path = out.join(RESULTS_FILE);
    let timings_path = out.join(TIMINGS_FILE);
    let failures_path = out.join(FAILURES_FILE);

    let cells = manifest.cells();
    let ids: Vec<String> = cells.iter().map(|c| manifest.cell_id(c)).collect();
    let mut done: BTreeMap<String, ResultRecord> = BTreeMap::new();
    if options.fresh {
        for p in [&results_path, &timings_path, &failures_path] {
            if p.exists() {
                fs::remove_file(p).map_err(io_err(p))?;
            }
        }
    } else if results_path.exists() {
        let wanted: HashSet<&String> = ids.iter().collect();
        for r in read_results(&results_path)? {
            if wanted.contains(&r.cell_id) {
                done.insert(r.cell_id.clone(), r);
            }
        }
        // Drop any partial line before appending.
        let lines: String = done.values().map(|r| r.to_line() + "\n").collect();
        write_atomically(&results_path, &lines)?;
    }
    let resumed = done.len();
    let pending: Vec<bool> = ids.iter().map(|id| !done.contains_key(id)).collect();
    let mut failures = Vec::new();

    if pending.iter().any(|&p| p) {
        let splits = load_splits(&manifest.dataset, &manifest.split)?;
        let artifacts = if options.save_artifacts {
            let dir = out.join("artifacts");
            fs::create_dir_all(&dir).map_err(io_err(&dir))?;
            for (name, d) in [("train", &splits.train), ("val", &splits.val), ("test", &splits.test)] {
                codec::save(&dir.join(format!("{name}.dhds")), d)?;
            }
            Some(dir)
        } else {
            None
        };
        let units = plan(&cells, &pending);
        let next = AtomicUsize::new(0);
        let (tx, rx) = mpsc::channel::<Outcome>();
        let jobs = options.jobs.clamp(1, units.len().max(1));
        std::thread::scope(|scope| -> Result<()> {
            for _ in 0..jobs {
                let tx = tx.clone();
                let (units, cells, splits, next, artifacts) = (&units, &cells, &splits, &next, artifacts.as_deref());
                scope.spawn(move || loop {
                    let u = next.fetch_add(1, Ordering::Relaxed);
                    let Some(unit) = units.get(u) else { break };
                    execute(unit, cells, splits, artifacts, &mut |o| {
                        let _ = tx.send(o);
                    });
                });
            }
            drop(tx);
            // Results are written from this thread only, as they arrive.
            for (i, outcome, seconds) in rx {
                let id = &ids[i];
                append_line(&timings_path, &serde_json::json!({ "cell_id": id, "wall_time_seconds": seconds }).to_string())?;
                match outcome {
                    Ok(r) => {
                        let record = ResultRecord::new(id.clone(), &r);
                        append_line(&results_path, &record.to_line())?;
                        done.insert(id.clone(), record);
                    }
                    Err(error) => failures.push(CellFailure { cell_id: id.clone(), cell: cells[i], error }),
                }
            }
            Ok(())
        })?;
    }

    let ordered: Vec<&ResultRecord> = ids.iter().filter_map(|id| done.get(id)).collect();
    write_atomically(&results_path, &ordered.iter().map(|r| r.to_line() + "\n").collect::<String>())?;
    if failures.is_empty() {
        if failures_path.exists() {
            fs::remove_file(&failures_path).map_err(io_err(&failures_path))?;
        }
    } else {
        let order: BTreeMap<&String, usize> = ids.iter().enumerate().map(|(i, id)| (id, i)).collect();
        failures.sort_by_key(|f| order[&f.cell_id]);
        let lines: String = failures
            .iter()
            .map(|f| {
                serde_json::json!({
                    "cell_id": f.cell_id,
                    "model_family": f.cell.family.to_string(),
                    "architecture_id": f.cell.architecture,
                    "epochs": f.cell.epochs,
                    "seed": f.cell.seed,
                    "error": f.error,
                })
                .to_string()
                    + "\n"
            })
            .collect();
        write_atomically(&failures_path, &lines)?;
    }

    let results: Vec<ExperimentResult> = ordered.iter().map(|r| r.to_result()).collect::<Result<_>>()?;
    let report = match manifest.aggregation {
        Aggregation::Peak => report_table(&results, ReportFormat::Text),
        Aggregation::PerRun => report_runs(&results),
    };
    write_atomically(&out.join(REPORT_FILE), &report)?;
    write_atomically(&out.join(PLOT_FILE), &plot_series(&results))?;

    Ok(RunSummary {
        output_dir: out.clone(),
        total: cells.len(),
        executed: cells.len() - resumed,
        resumed,
        failures,
    })
}

/// Runs a network without its softmax head over a dataset, giving
/// `[N, 256]` features with the source labels.
pub fn extract_to_dataset(network: &TrainedNetwork, data: &Dataset) -> Result<Dataset> {
    Ok(extract_dataset(&network.strip_softmax()?, data)?)
}
