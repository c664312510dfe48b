//! Delimited numeric tables with one integer label column.

use std::collections::BTreeMap;
use std::path::Path;

use nnhybrid_core::data::Dataset;
use nnhybrid_core::Tensor;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct CsvOptions {
    /// Column holding the label; negative values count from the end
    /// (`-1` is the last column).
    pub label_column: isize,
    pub header: bool,
    pub delimiter: u8,
    /// Columns dropped before parsing (identifiers and the like).
    pub skip_columns: Vec<usize>,
}

impl Default for CsvOptions {
    fn default() -> Self {
        CsvOptions { label_column: -1, header: false, delimiter: b',', skip_columns: Vec::new() }
    }
}

fn parse_label(path: &Path, row: usize, value: &str) -> Result<i64> {
    let v: f64 = value.trim().parse().map_err(|_| Error::NonIntegerLabel {
        path: path.into(),
        row,
        value: value.into(),
    })?;
    if v.fract() != 0.0 || !v.is_finite() || v.abs() > 2f64.powi(53) {
        return Err(Error::NonIntegerLabel { path: path.into(), row, value: value.into() });
    }
    Ok(v as i64)
}

/// Loads `[N, D]` features and labels remapped to `0..class_count` in
/// sorted order of the original label values.
pub fn load_csv(path: &Path, options: &CsvOptions) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(options.header)
        .delimiter(options.delimiter)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|source| Error::Csv { path: path.into(), source })?;

    let mut width = None;
    let mut label_at = 0;
    let mut features = Vec::new();
    let mut raw_labels = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|source| Error::Csv { path: path.into(), source })?;
        // Rows are numbered from 1 as shown by text editors, after any header.
        let row = i + 1 + options.header as usize;
        if record.iter().all(|c| c.is_empty()) {
            continue;
        }
        let expected = *width.get_or_insert_with(|| record.len());
        if record.len() != expected {
            return Err(Error::RaggedRow { path: path.into(), row, expected, found: record.len() });
        }
        if raw_labels.is_empty() {
            label_at = if options.label_column < 0 {
                expected as isize + options.label_column
            } else {
                options.label_column
            };
            if label_at < 0 || label_at as usize >= expected {
                return Err(nnhybrid_core::Error::InvalidParameter(format!(
                    "label column {} does not exist in rows of {expected} columns",
                    options.label_column
                ))
                .into());
            }
        }
        for (column, cell) in record.iter().enumerate() {
            if column == label_at as usize {
                raw_labels.push(parse_label(path, row, cell)?);
            } else if !options.skip_columns.contains(&column) {
                let v: f64 = cell.parse().map_err(|_| Error::NonNumeric {
                    path: path.into(),
                    row,
                    column,
                    value: cell.into(),
                })?;
                if !v.is_finite() {
                    return Err(Error::NonNumeric { path: path.into(), row, column, value: cell.into() });
                }
                features.push(v);
            }
        }
    }
    if raw_labels.is_empty() {
        return Err(Error::EmptyFile(path.into()));
    }
    let n = raw_labels.len();
    let dims = features.len() / n;
    if dims == 0 {
        return Err(nnhybrid_core::Error::InvalidParameter("no feature columns left".into()).into());
    }

    let ids: BTreeMap<i64, usize> = {
        let mut distinct: Vec<i64> = raw_labels.clone();
        distinct.sort_unstable();
        distinct.dedup();
        distinct.into_iter().enumerate().map(|(i, l)| (l, i)).collect()
    };
    let labels = raw_labels.iter().map(|l| ids[l]).collect();
    let name = path.file_stem().map_or_else(String::new, |s| s.to_string_lossy().into_owned());
    Ok(Dataset::new(name, Tensor::new(&[n, dims], features)?, labels, ids.len())?)
}

