//! Tabular dataset ingestion, preprocessing and node partitioning for the
//! binary logistic-regression experiment.

use std::path::Path;

use log::{info, warn};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row-major feature matrix with `±1` labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    d: usize,
    x: Vec<f64>,
    y: Vec<f64>,
    feature_names: Vec<String>,
}

impl Dataset {
    pub fn new(d: usize, x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        let names = (0..d).map(|j| format!("x{j}")).collect();
        Self::with_names(d, x, y, names)
    }

    pub fn with_names(d: usize, x: Vec<f64>, y: Vec<f64>, feature_names: Vec<String>) -> Result<Self> {
        if d == 0 || x.len() != d * y.len() || feature_names.len() != d {
            return Err(Error::InvalidInput(format!(
                "feature matrix of {} values does not match {} rows of dimension {d}",
                x.len(),
                y.len()
            )));
        }
        if let Some(bad) = y.iter().find(|v| **v != 1.0 && **v != -1.0) {
            return Err(Error::InvalidInput(format!("labels must be -1 or +1, found {bad}")));
        }
        Ok(Dataset {
            d,
            x,
            y,
            feature_names,
        })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.d..(i + 1) * self.d]
    }

    pub fn label(&self, i: usize) -> f64 {
        self.y[i]
    }

    pub fn labels(&self) -> &[f64] {
        &self.y
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    /// Fraction of `+1` labels.
    pub fn positive_fraction(&self) -> f64 {
        self.y.iter().filter(|v| **v > 0.0).count() as f64 / self.len().max(1) as f64
    }
}

/// How the label column becomes `±1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Threshold {
    /// `+1` above the column median, `-1` otherwise.
    #[default]
    Median,
    /// `+1` above the given value, `-1` otherwise.
    Value(f64),
    /// The column already holds `{0, 1}` or `{-1, +1}`.
    None,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadOptions {
    pub label_column: String,
    pub threshold: Threshold,
    pub delimiter: u8,
}

impl LoadOptions {
    pub fn new(label_column: impl Into<String>) -> Self {
        LoadOptions {
            label_column: label_column.into(),
            threshold: Threshold::Median,
            delimiter: b',',
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoadReport {
    pub rows: usize,
    pub dim: usize,
    pub rows_with_missing: usize,
    pub positive_fraction: f64,
    /// Cut point applied to the raw label, if any.
    pub threshold: Option<f64>,
}

fn is_missing(cell: &str) -> bool {
    matches!(cell, "" | "NA" | "na" | "NaN" | "nan" | "?")
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// Reads a headed, delimited numeric file. Every column except
/// `label_column` is a feature. Rows with missing cells are skipped and
/// counted; any other non-numeric cell is an error.
pub fn load_csv(path: &Path, options: &LoadOptions) -> Result<(Dataset, LoadReport)> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(options.delimiter)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let headers: Vec<String> = reader.headers()?.iter().map(str::to_owned).collect();
    let label_idx = headers
        .iter()
        .position(|h| *h == options.label_column)
        .ok_or_else(|| Error::MissingLabelColumn(options.label_column.clone()))?;
    let feature_names: Vec<String> = headers
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != label_idx)
        .map(|(_, h)| h.clone())
        .collect();
    let d = feature_names.len();
    if d == 0 {
        return Err(Error::InvalidInput("no feature columns besides the label".into()));
    }

    let mut x = Vec::new();
    let mut raw_labels = Vec::new();
    let mut rows_with_missing = 0;
    let mut row_buf = Vec::with_capacity(d);
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let row_no = i + 1;
        if record.iter().any(is_missing) || record.len() < headers.len() {
            rows_with_missing += 1;
            continue;
        }
        row_buf.clear();
        let mut label = 0.0;
        for (j, cell) in record.iter().enumerate() {
            let value: f64 = cell.parse().map_err(|_| Error::Parse {
                row: row_no,
                column: headers.get(j).cloned().unwrap_or_else(|| format!("#{j}")),
                value: cell.to_owned(),
            })?;
            if j == label_idx {
                label = value;
            } else {
                row_buf.push(value);
            }
        }
        x.extend_from_slice(&row_buf);
        raw_labels.push(label);
    }
    if raw_labels.is_empty() {
        return Err(Error::NoUsableRows(path.to_path_buf()));
    }
    if rows_with_missing > 0 {
        warn!("{}: skipped {rows_with_missing} rows with missing values", path.display());
    }

    let cut = match options.threshold {
        Threshold::Median => Some(median(&raw_labels)),
        Threshold::Value(v) => Some(v),
        Threshold::None => None,
    };
    let y = match cut {
        Some(c) => raw_labels.iter().map(|v| if *v > c { 1.0 } else { -1.0 }).collect(),
        None => raw_labels
            .iter()
            .map(|v| match *v {
                1.0 => Ok(1.0),
                0.0 | -1.0 => Ok(-1.0),
                other => Err(Error::InvalidInput(format!(
                    "label {other} is not binary; give a threshold"
                ))),
            })
            .collect::<Result<Vec<f64>>>()?,
    };

    let data = Dataset::with_names(d, x, y, feature_names)?;
    let report = LoadReport {
        rows: data.len(),
        dim: d,
        rows_with_missing,
        positive_fraction: data.positive_fraction(),
        threshold: cut,
    };
    info!(
        "loaded {}: {} rows, d = {}, {:.1}% positive",
        path.display(),
        report.rows,
        report.dim,
        100.0 * report.positive_fraction
    );
    Ok((data, report))
}

/// Per-column mean and population standard deviation.
pub fn column_stats(data: &Dataset) -> Vec<(f64, f64)> {
    let n = data.len() as f64;
    (0..data.d)
        .map(|j| {
            let mean = (0..data.len()).map(|i| data.row(i)[j]).sum::<f64>() / n;
            let var = (0..data.len())
                .map(|i| (data.row(i)[j] - mean).powi(2))
                .sum::<f64>()
                / n;
            (mean, var.sqrt())
        })
        .collect()
}

/// Scales every row to unit Euclidean norm; returns `false` for a zero row.
pub fn normalize_row(row: &mut [f64]) -> bool {
    let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 {
        return false;
    }
    row.iter_mut().for_each(|v| *v /= norm);
    true
}

/// Standardizes each column (constant columns become zero), then normalizes
/// each row to unit length. Rows that end up all-zero are dropped.
pub fn preprocess(data: &Dataset) -> Dataset {
    let stats = column_stats(data);
    let mut x = Vec::with_capacity(data.x.len());
    let mut y = Vec::with_capacity(data.len());
    let mut dropped = 0;
    let mut row = vec![0.0; data.d];
    for i in 0..data.len() {
        for (j, (v, (mean, std))) in data.row(i).iter().zip(&stats).enumerate() {
            row[j] = if *std > 0.0 { (v - mean) / std } else { 0.0 };
        }
        if normalize_row(&mut row) {
            x.extend_from_slice(&row);
            y.push(data.y[i]);
        } else {
            dropped += 1;
        }
    }
    if dropped > 0 {
        warn!("dropped {dropped} rows that were all-zero after standardization");
    }
    Dataset {
        d: data.d,
        x,
        y,
        feature_names: data.feature_names.clone(),
    }
}

/// Row indices of the training partitions (one per node) and the test set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub partitions: Vec<Vec<usize>>,
    pub test: Vec<usize>,
}

impl Split {
    pub fn train_len(&self) -> usize {
        self.partitions.iter().map(Vec::len).sum()
    }
}

/// Random `train_fraction` / rest split followed by a balanced random
/// partition of the training rows over `n` nodes.
pub fn split<R: Rng + ?Sized>(data: &Dataset, train_fraction: f64, n: usize, rng: &mut R) -> Result<Split> {
    if n == 0 {
        return Err(Error::InvalidInput("node count must be positive".into()));
    }
    if !(train_fraction > 0.0 && train_fraction <= 1.0) {
        return Err(Error::InvalidInput(format!(
            "train fraction must be in (0, 1], got {train_fraction}"
        )));
    }
    let mut idx: Vec<usize> = (0..data.len()).collect();
    idx.shuffle(rng);
    let n_train = (train_fraction * data.len() as f64).round() as usize;
    if n_train < n {
        return Err(Error::InvalidInput(format!(
            "{n_train} training rows cannot be spread over {n} nodes"
        )));
    }
    let test = idx.split_off(n_train);
    idx.shuffle(rng);
    let base = n_train / n;
    let extra = n_train % n;
    let mut partitions = Vec::with_capacity(n);
    let mut rest = idx.as_slice();
    for v in 0..n {
        let size = base + usize::from(v < extra);
        let (head, tail) = rest.split_at(size);
        partitions.push(head.to_vec());
        rest = tail;
    }
    Ok(Split { partitions, test })
}
