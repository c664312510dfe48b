use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use nnhybrid::codec;
use nnhybrid::idx::load_idx;
use nnhybrid::manifest::RunManifest;
use nnhybrid::report::{report_table, ReportFormat};
use nnhybrid::runner::{extract_to_dataset, read_results, run_manifest, RunOptions};
use nnhybrid::{Error, Result};
use nnhybrid_core::data::Dataset;
use nnhybrid_core::neural::TrainedNetwork;

/// Neural-network feature extraction with SVM and k-NN classifiers.
#[derive(Parser)]
#[command(name = "nnhybrid", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every experiment in a manifest, resuming an interrupted run.
    Run {
        manifest: PathBuf,
        /// Worker threads.
        #[arg(long, env = "NNHYBRID_JOBS", default_value_t = 1)]
        jobs: usize,
        /// Output directory, overriding the manifest.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Epoch counts for every network experiment, e.g. 2,5,10.
        #[arg(long, value_delimiter = ',')]
        epochs: Option<Vec<u32>>,
        /// Seeds for every experiment, e.g. 1,2,3.
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        /// Discard results of an earlier run instead of resuming it.
        #[arg(long)]
        fresh: bool,
        /// Save trained networks and normalized splits under artifacts/.
        #[arg(long)]
        save_artifacts: bool,
    },
    /// Render the peak-accuracy table of a results file.
    Report {
        results: PathBuf,
        #[arg(long, default_value = "text")]
        format: ReportFormat,
    },
    /// Check a manifest and print the number of cells it defines.
    Validate { manifest: PathBuf },
    /// Write the 256-dimensional features a saved network gives a dataset.
    Extract {
        /// Network file (.dhnn).
        #[arg(long)]
        network: PathBuf,
        /// Dataset file (.dhds), or IDX images when --labels is given.
        #[arg(long)]
        data: PathBuf,
        /// IDX labels matching --data.
        #[arg(long)]
        labels: Option<PathBuf>,
        /// Output file: .csv for text (label last), anything else for .dhds.
        #[arg(long)]
        out: PathBuf,
    },
}

fn load_manifest(path: &Path, out: Option<PathBuf>) -> Result<RunManifest> {
    let mut m = RunManifest::load(path)?;
    if let Some(out) = out {
        m.output_dir = out;
    }
    Ok(m)
}

fn write_features_csv(path: &Path, data: &Dataset) -> Result<()> {
    let csv_err = |source| Error::Csv { path: path.into(), source };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    for i in 0..data.len() {
        let mut row: Vec<String> = data.sample(i).iter().map(f64::to_string).collect();
        row.push(data.labels()[i].to_string());
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::Io { path: path.into(), source: e })
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Run { manifest, jobs, out, epochs, seeds, fresh, save_artifacts } => {
            let mut m = load_manifest(&manifest, out)?;
            if let Some(e) = epochs {
                m.override_epochs(&e);
            }
            if let Some(s) = seeds {
                m.override_seeds(&s);
            }
            let summary = run_manifest(&m, &RunOptions { jobs, fresh, save_artifacts })?;
            eprintln!(
                "{} cells: {} run, {} resumed, {} failed; results in {}",
                summary.total,
                summary.executed,
                summary.resumed,
                summary.failures.len(),
                summary.output_dir.display()
            );
            for f in &summary.failures {
                eprintln!("failed {} ({} seed {}): {}", f.cell_id, f.cell.family, f.cell.seed, f.error);
            }
            print!("{}", std::fs::read_to_string(summary.output_dir.join(nnhybrid::runner::REPORT_FILE)).unwrap_or_default());
            Ok(if summary.succeeded() { ExitCode::SUCCESS } else { ExitCode::from(1) })
        }
        Command::Report { results, format } => {
            let records = read_results(&results)?;
            let results = records.iter().map(|r| r.to_result()).collect::<Result<Vec<_>>>()?;
            print!("{}", report_table(&results, format));
            Ok(ExitCode::SUCCESS)
        }
        Command::Validate { manifest } => {
            let m = load_manifest(&manifest, None)?;
            println!("{}: {} cells", m.name, m.cells().len());
            Ok(ExitCode::SUCCESS)
        }
        Command::Extract { network, data, labels, out } => {
            let net: TrainedNetwork = codec::load(&network)?;
            let data: Dataset = match labels {
                Some(labels) => load_idx(&data, &labels)?,
                None => codec::load(&data)?,
            };
            let features = extract_to_dataset(&net, &data)?;
            if out.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
                write_features_csv(&out, &features)?;
            } else {
                codec::save(&out, &features)?;
            }
            eprintln!("{} samples, {} features", features.len(), features.sample_len());
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(Error::Manifest(errors)) => {
            eprintln!("invalid manifest:");
            for e in errors {
                eprintln!("  {e}");
            }
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
