use std::collections::HashSet;
use std::path::{Path, PathBuf};

use csv::{Terminator, WriterBuilder};
use serde::Serialize;

use super::{format_float, io_err, read_file, write_file};
use crate::decay::{DecayFit, FitStatus};
use crate::retention::RetentionStats;
use crate::scheduler::StrategyWeights;
use crate::stats::{ClassForgettingRow, OverlapPoint};
use crate::synth::TruthRow;
use crate::{Error, Result};

pub const FITS_HEADER: [&str; 5] = ["sample_id", "lambda", "fit_status", "r_squared", "sse"];

fn num(x: f64, what: &'static str) -> Result<String> {
    if x.is_finite() {
        Ok(format_float(x))
    } else {
        Err(Error::NonFinite(what))
    }
}

fn opt_num(x: Option<f64>, what: &'static str) -> Result<String> {
    x.map_or_else(|| Ok(String::new()), |v| num(v, what))
}

fn write_csv(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let mut w = WriterBuilder::new()
        .terminator(Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::Io {
        path: path.to_path_buf(),
        source: e.into(),
    };
    w.write_record(header).map_err(csv_err)?;
    for row in rows {
        w.write_record(&row).map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| io_err(path)(e.into_error()))?;
    std::fs::write(path, bytes).map_err(io_err(path))
}

pub fn write_fits(path: &Path, fits: &[DecayFit]) -> Result<()> {
    let rows = fits
        .iter()
        .map(|f| {
            Ok(vec![
                f.sample_id.clone(),
                num(f.lambda, "lambda")?,
                f.fit_status.as_str().to_owned(),
                opt_num(f.r_squared, "r_squared")?,
                opt_num(f.sse, "sse")?,
            ])
        })
        .collect::<Result<Vec<_>>>()?;
    write_csv(path, &FITS_HEADER, rows)
}

/// Reads a fits report written by [`write_fits`].
pub fn read_fits(path: &Path) -> Result<Vec<DecayFit>> {
    let text = read_file(path)?;
    let schema = |line: u64, message: String| Error::SchemaViolation {
        file: path.to_path_buf(),
        line,
        message,
    };
    let mut reader = csv::ReaderBuilder::new().from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| schema(1, e.to_string()))?.clone();
    if header.iter().ne(FITS_HEADER) {
        return Err(schema(1, format!("header must be `{}`", FITS_HEADER.join(","))));
    }
    let mut seen = HashSet::new();
    let mut fits = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| schema(e.position().map_or(0, |p| p.line()), e.to_string()))?;
        let line = record.position().map_or(0, |p| p.line());
        let field = |i: usize| record.get(i).unwrap_or_default();
        let parse = |i: usize| -> Result<Option<f64>> {
            let cell = field(i);
            if cell.is_empty() {
                return Ok(None);
            }
            match cell.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(Some(v)),
                _ => Err(schema(line, format!("`{cell}` in column {} is not a finite number", FITS_HEADER[i]))),
            }
        };
        let sample_id = field(0).to_owned();
        if sample_id.is_empty() {
            return Err(schema(line, "empty sample_id".into()));
        }
        if !seen.insert(sample_id.clone()) {
            return Err(schema(line, format!("duplicate sample id `{sample_id}`")));
        }
        let lambda = parse(1)?
            .filter(|l| *l >= 0.0)
            .ok_or_else(|| schema(line, "lambda must be a non-negative number".into()))?;
        let fit_status: FitStatus = field(2)
            .parse()
            .map_err(|_| schema(line, format!("unknown fit_status `{}`", field(2))))?;
        fits.push(DecayFit {
            sample_id,
            lambda,
            fit_status,
            r_squared: parse(3)?,
            sse: parse(4)?,
        });
    }
    Ok(fits)
}

pub fn write_retention_stats(path: &Path, stats: &[RetentionStats]) -> Result<()> {
    let rows = stats
        .iter()
        .map(|s| {
            let epochs: Vec<String> = s.forgetting_event_epochs.iter().map(usize::to_string).collect();
            Ok(vec![
                s.sample_id.clone(),
                s.first_learned_epoch.map_or_else(String::new, |e| e.to_string()),
                s.forgetting_event_count.to_string(),
                epochs.join(";"),
                opt_num(s.retention_rate, "retention_rate")?,
                s.never_learned.to_string(),
                s.never_forgotten.to_string(),
            ])
        })
        .collect::<Result<Vec<_>>>()?;
    write_csv(
        path,
        &[
            "sample_id",
            "first_learned_epoch",
            "forgetting_event_count",
            "forgetting_event_epochs",
            "retention_rate",
            "never_learned",
            "never_forgotten",
        ],
        rows,
    )
}

pub fn write_overlap(path: &Path, points: &[OverlapPoint]) -> Result<()> {
    let rows = points
        .iter()
        .map(|p| {
            Ok(vec![
                p.k_percent.to_string(),
                p.shared_samples.to_string(),
                p.top_k_size.to_string(),
                p.intersection.to_string(),
                p.union.to_string(),
                num(p.jaccard, "jaccard")?,
            ])
        })
        .collect::<Result<Vec<_>>>()?;
    write_csv(
        path,
        &["k", "shared_samples", "top_k_size", "intersection", "union", "jaccard"],
        rows,
    )
}

pub fn write_class_table(path: &Path, table: &[ClassForgettingRow]) -> Result<()> {
    let rows = table
        .iter()
        .map(|r| {
            Ok(vec![
                r.class_label.clone(),
                r.train_size.to_string(),
                num(r.mean_lambda, "mean_lambda")?,
                num(r.pct_never_forgotten, "pct_never_forgotten")?,
            ])
        })
        .collect::<Result<Vec<_>>>()?;
    write_csv(path, &["class", "train_size", "mean_lambda", "pct_never_forgotten"], rows)
}

/// Writes `weights-<strategy>-epoch<e>.csv` into `dir` and returns its path.
pub fn write_weights(dir: &Path, sample_ids: &[String], weights: &StrategyWeights) -> Result<PathBuf> {
    if sample_ids.len() != weights.weights.len() {
        return Err(Error::LengthMismatch {
            left: sample_ids.len(),
            right: weights.weights.len(),
        });
    }
    let path = dir.join(format!(
        "weights-{}-epoch{}.csv",
        weights.strategy.short_name(),
        weights.epoch
    ));
    let rows = sample_ids
        .iter()
        .zip(&weights.weights)
        .map(|(id, w)| Ok(vec![id.clone(), num(*w, "weight")?]))
        .collect::<Result<Vec<_>>>()?;
    write_csv(&path, &["sample_id", "weight"], rows)?;
    Ok(path)
}

pub fn write_selection_counts(path: &Path, sample_ids: &[String], counts: &[u64]) -> Result<()> {
    if sample_ids.len() != counts.len() {
        return Err(Error::LengthMismatch {
            left: sample_ids.len(),
            right: counts.len(),
        });
    }
    let rows = sample_ids
        .iter()
        .zip(counts)
        .map(|(id, c)| vec![id.clone(), c.to_string()]);
    write_csv(path, &["sample_id", "count"], rows)
}

pub fn write_truth(path: &Path, truth: &[TruthRow]) -> Result<()> {
    let rows = truth
        .iter()
        .map(|t| {
            Ok(vec![
                t.sample_id.clone(),
                num(t.lambda_truth, "lambda_truth")?,
                t.first_learned_truth.to_string(),
            ])
        })
        .collect::<Result<Vec<_>>>()?;
    write_csv(path, &["sample_id", "lambda_truth", "first_learned_truth"], rows)
}

/// Pretty-printed JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    text.push('\n');
    write_file(path, &text)
}

/// Reads a CSV of numeric columns (one value per row, e.g. one row per seed).
pub fn read_value_columns(path: &Path) -> Result<Vec<(String, Vec<f64>)>> {
    let text = read_file(path)?;
    let schema = |line: u64, message: String| Error::SchemaViolation {
        file: path.to_path_buf(),
        line,
        message,
    };
    let mut reader = csv::ReaderBuilder::new().from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| schema(1, e.to_string()))?.clone();
    if header.is_empty() || header.iter().any(str::is_empty) {
        return Err(schema(1, "header must name every column".into()));
    }
    let mut names = HashSet::new();
    if let Some(dup) = header.iter().find(|h| !names.insert(*h)) {
        return Err(schema(1, format!("duplicate column `{dup}`")));
    }
    let mut columns: Vec<(String, Vec<f64>)> = header.iter().map(|h| (h.to_owned(), Vec::new())).collect();
    for record in reader.records() {
        let record = record.map_err(|e| schema(e.position().map_or(0, |p| p.line()), e.to_string()))?;
        let line = record.position().map_or(0, |p| p.line());
        for (cell, (name, values)) in record.iter().zip(columns.iter_mut()) {
            match cell.trim().parse::<f64>() {
                Ok(v) if v.is_finite() => values.push(v),
                _ => return Err(schema(line, format!("`{cell}` in column `{name}` is not a finite number"))),
            }
        }
    }
    Ok(columns)
}
