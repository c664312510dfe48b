//! Rendering of result lists: the peak-accuracy table (families by
//! datasets), a per-run listing, and accuracy-versus-epochs series.

use std::collections::BTreeMap;
use std::str::FromStr;

use nnhybrid_core::pipeline::{ExperimentResult, Family, Hyper};
use serde_json::json;

pub const MISSING: &str = "—";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Text,
    Csv,
    Json,
}

impl FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "text" => Ok(ReportFormat::Text),
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            other => Err(format!("unknown report format {other:?} (text, csv or json)")),
        }
    }
}

pub fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}

/// Groups accuracies by (dataset, family, architecture, epochs) across
/// seeds.
fn by_setting(results: &[ExperimentResult]) -> BTreeMap<(String, Family, Option<u8>, u32), Vec<f64>> {
    let mut groups: BTreeMap<_, Vec<f64>> = BTreeMap::new();
    for r in results {
        groups
            .entry((r.dataset_name.clone(), r.model_family, r.architecture_id, r.epochs))
            .or_default()
            .push(r.test_accuracy);
    }
    groups
}

/// Peak accuracy per family and dataset: the median over seeds of each
/// (architecture, epochs) setting, maximised over settings.
#[derive(Debug, Clone, PartialEq)]
pub struct PeakTable {
    pub datasets: Vec<String>,
    /// One row per family in fixed order, one entry per dataset.
    pub rows: Vec<(Family, Vec<Option<f64>>)>,
}

pub fn peak_table(results: &[ExperimentResult]) -> PeakTable {
    let mut peaks: BTreeMap<(Family, String), f64> = BTreeMap::new();
    for ((dataset, family, _, _), mut accs) in by_setting(results) {
        let m = median(&mut accs);
        let e = peaks.entry((family, dataset)).or_insert(m);
        *e = e.max(m);
    }
    let mut datasets: Vec<String> = results.iter().map(|r| r.dataset_name.clone()).collect();
    datasets.sort();
    datasets.dedup();
    let rows = Family::ALL
        .iter()
        .map(|&f| (f, datasets.iter().map(|d| peaks.get(&(f, d.clone())).copied()).collect()))
        .collect();
    PeakTable { datasets, rows }
}

fn percent(v: Option<f64>) -> String {
    v.map_or_else(|| MISSING.to_string(), |v| format!("{:.2}%", v * 100.0))
}

fn text_table(header: &[String], rows: &[Vec<String>]) -> String {
    let columns = header.len();
    let width = |i: usize| {
        rows.iter().map(|r| r[i].chars().count()).chain([header[i].chars().count()]).max().unwrap_or(0)
    };
    let widths: Vec<usize> = (0..columns).map(width).collect();
    let line = |cells: &[String]| {
        let mut s = String::new();
        for (i, c) in cells.iter().enumerate() {
            let pad = widths[i] - c.chars().count();
            if i == 0 {
                s.push_str(c);
                s.push_str(&" ".repeat(pad));
            } else {
                s.push_str("  ");
                s.push_str(&" ".repeat(pad));
                s.push_str(c);
            }
        }
        s.trim_end().to_string()
    };
    let mut out = line(header);
    out.push('\n');
    out.push_str(&"-".repeat(widths.iter().sum::<usize>() + 2 * (columns - 1)));
    out.push('\n');
    for r in rows {
        out.push_str(&line(r));
        out.push('\n');
    }
    out
}

fn csv_string(header: &[String], rows: &[Vec<String>]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("writing to memory");
    for r in rows {
        w.write_record(r).expect("writing to memory");
    }
    String::from_utf8(w.into_inner().expect("writing to memory")).expect("UTF-8 input")
}

/// Peak table as aligned text (percent, two decimals), CSV or JSON (raw
/// fractions). Missing cells are `—` in text, empty in CSV and `null` in
/// JSON.
pub fn report_table(results: &[ExperimentResult], format: ReportFormat) -> String {
    let table = peak_table(results);
    let mut header = vec!["Model".to_string()];
    header.extend(table.datasets.iter().cloned());
    match format {
        ReportFormat::Text => {
            let rows: Vec<Vec<String>> = table
                .rows
                .iter()
                .map(|(f, cells)| std::iter::once(f.to_string()).chain(cells.iter().map(|&c| percent(c))).collect())
                .collect();
            text_table(&header, &rows)
        }
        ReportFormat::Csv => {
            let rows: Vec<Vec<String>> = table
                .rows
                .iter()
                .map(|(f, cells)| {
                    std::iter::once(f.to_string())
                        .chain(cells.iter().map(|c| c.map_or_else(String::new, |v| v.to_string())))
                        .collect()
                })
                .collect();
            csv_string(&header, &rows)
        }
        ReportFormat::Json => {
            let rows: Vec<_> = table
                .rows
                .iter()
                .map(|(f, cells)| {
                    let peaks: serde_json::Map<String, serde_json::Value> =
                        table.datasets.iter().zip(cells).map(|(d, c)| (d.clone(), json!(c))).collect();
                    json!({ "family": f.to_string(), "peaks": peaks })
                })
                .collect();
            let mut s = serde_json::to_string_pretty(&json!({ "datasets": table.datasets, "rows": rows }))
                .expect("plain values serialize");
            s.push('\n');
            s
        }
    }
}

pub fn hyper_label(h: Option<Hyper>) -> String {
    h.map_or_else(|| MISSING.to_string(), |h| h.to_string())
}

/// One line per result, in the given order.
pub fn report_runs(results: &[ExperimentResult]) -> String {
    let header: Vec<String> =
        ["Dataset", "Model", "Arch", "Epochs", "Seed", "Chosen", "Accuracy"].iter().map(|s| s.to_string()).collect();
    let rows: Vec<Vec<String>> = results
        .iter()
        .map(|r| {
            vec![
                r.dataset_name.clone(),
                r.model_family.to_string(),
                r.architecture_id.map_or_else(|| MISSING.to_string(), |a| a.to_string()),
                if r.model_family.uses_network() { r.epochs.to_string() } else { MISSING.to_string() },
                r.seed.to_string(),
                hyper_label(r.chosen_hyper),
                percent(Some(r.test_accuracy)),
            ]
        })
        .collect();
    text_table(&header, &rows)
}

/// Accuracy against epochs for every (dataset, family, architecture):
/// median, minimum and maximum over seeds. Baselines appear with epochs 0.
pub fn plot_series(results: &[ExperimentResult]) -> String {
    let mut out = String::from("dataset,family,architecture,epochs,median_accuracy,min_accuracy,max_accuracy,seeds\n");
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    for ((dataset, family, arch, epochs), mut accs) in by_setting(results) {
        let m = median(&mut accs);
        w.write_record([
            dataset,
            family.to_string(),
            arch.map_or_else(String::new, |a| a.to_string()),
            epochs.to_string(),
            m.to_string(),
            accs[0].to_string(),
            accs[accs.len() - 1].to_string(),
            accs.len().to_string(),
        ])
        .expect("writing to memory");
    }
    out.push_str(&String::from_utf8(w.into_inner().expect("writing to memory")).expect("UTF-8"));
    out
}
