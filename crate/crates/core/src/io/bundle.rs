use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{io_err, read_file, round_sig9, write_file};
use crate::retention::{RetentionMatrix, SampleMeta, Split};
use crate::{Error, Result};

pub const RUN_FILE: &str = "run.json";
pub const RETENTION_FILE: &str = "retention.csv";

/// One training run: metadata, per-sample metadata and the retention matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct RunBundle {
    pub run_id: String,
    pub dataset: String,
    pub backbone: String,
    pub seed: i64,
    pub phase1_epochs: u32,
    /// Sorted by sample id, same ids as `retention`.
    pub meta: Vec<SampleMeta>,
    pub retention: RetentionMatrix,
}

impl RunBundle {
    pub fn new(
        run_id: impl Into<String>,
        dataset: impl Into<String>,
        backbone: impl Into<String>,
        seed: i64,
        phase1_epochs: u32,
        mut meta: Vec<SampleMeta>,
        retention: RetentionMatrix,
    ) -> Result<Self> {
        meta.sort_by(|a, b| a.sample_id.cmp(&b.sample_id));
        if let Some(w) = meta.windows(2).find(|w| w[0].sample_id == w[1].sample_id) {
            return Err(Error::DuplicateSampleId(w[0].sample_id.clone()));
        }
        if let Some(m) = meta.iter().find(|m| !(m.phase1_loss.is_finite() && m.phase1_loss >= 0.0)) {
            return Err(Error::InvalidParameter(format!(
                "phase-1 loss of `{}` must be finite and non-negative, got {}",
                m.sample_id, m.phase1_loss
            )));
        }
        check_same_ids(&meta, &retention)?;
        Ok(Self {
            run_id: run_id.into(),
            dataset: dataset.into(),
            backbone: backbone.into(),
            seed,
            phase1_epochs,
            meta,
            retention,
        })
    }

    pub fn phase2_epochs(&self) -> usize {
        self.retention.num_epochs()
    }
}

fn check_same_ids(meta: &[SampleMeta], retention: &RetentionMatrix) -> Result<()> {
    let from_meta: BTreeSet<&str> = meta.iter().map(|m| m.sample_id.as_str()).collect();
    let from_matrix: BTreeSet<&str> = retention.sample_ids().iter().map(String::as_str).collect();
    if from_meta == from_matrix {
        return Ok(());
    }
    let describe = |set: Vec<&&str>| {
        let shown: Vec<&str> = set.iter().take(5).map(|s| **s).collect();
        format!("{}{}", shown.join(", "), if set.len() > 5 { ", …" } else { "" })
    };
    let only_meta: Vec<&&str> = from_meta.difference(&from_matrix).collect();
    let only_matrix: Vec<&&str> = from_matrix.difference(&from_meta).collect();
    let mut msg = String::new();
    if !only_meta.is_empty() {
        let _ = write!(msg, "{} only in {RUN_FILE} ({})", only_meta.len(), describe(only_meta));
    }
    if !only_matrix.is_empty() {
        if !msg.is_empty() {
            msg.push_str("; ");
        }
        let _ = write!(msg, "{} only in {RETENTION_FILE} ({})", only_matrix.len(), describe(only_matrix));
    }
    Err(Error::InconsistentIds(msg))
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RunJson {
    run_id: String,
    dataset: String,
    backbone: String,
    seed: i64,
    phase1_epochs: u32,
    phase2_epochs: usize,
    samples: Vec<SampleJson>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SampleJson {
    id: String,
    class: String,
    phase1_loss: f64,
    split: Split,
}

/// Reads and validates a bundle directory.
pub fn load_bundle(dir: &Path) -> Result<RunBundle> {
    let run_path = dir.join(RUN_FILE);
    let csv_path = dir.join(RETENTION_FILE);
    let run_text = read_file(&run_path)?;
    let csv_text = read_file(&csv_path)?;

    let schema = |line: usize, message: String| Error::SchemaViolation {
        file: run_path.clone(),
        line: line as u64,
        message,
    };
    let run: RunJson = serde_json::from_str(&run_text).map_err(|e| schema(e.line(), e.to_string()))?;

    let mut seen = BTreeSet::new();
    for s in &run.samples {
        let line = line_of(&run_text, &["\"id\"", &format!("\"{}\"", s.id)]);
        if !seen.insert(s.id.as_str()) {
            return Err(schema(line, format!("duplicate sample id `{}`", s.id)));
        }
        if !(s.phase1_loss.is_finite() && s.phase1_loss >= 0.0) {
            return Err(schema(
                line,
                format!("phase1_loss of `{}` must be finite and non-negative", s.id),
            ));
        }
    }

    let retention = parse_retention(&csv_path, &csv_text)?;
    if run.phase2_epochs != retention.num_epochs() {
        return Err(schema(
            line_of(&run_text, &["\"phase2_epochs\""]),
            format!(
                "phase2_epochs is {} but {RETENTION_FILE} has {} epoch columns",
                run.phase2_epochs,
                retention.num_epochs()
            ),
        ));
    }

    let meta = run
        .samples
        .into_iter()
        .map(|s| SampleMeta {
            sample_id: s.id,
            class_label: s.class,
            phase1_loss: s.phase1_loss,
            split: s.split,
        })
        .collect::<Vec<_>>();
    check_same_ids(&meta, &retention)?;
    RunBundle::new(
        run.run_id,
        run.dataset,
        run.backbone,
        run.seed,
        run.phase1_epochs,
        meta,
        retention,
    )
}

/// First line (1-based) containing every needle, or 0.
fn line_of(text: &str, needles: &[&str]) -> usize {
    text.lines()
        .position(|l| needles.iter().all(|n| l.contains(n)))
        .map_or(0, |i| i + 1)
}

/// Positions in `NonBinaryValue` errors are 1-based file line and column.
fn parse_retention(path: &Path, text: &str) -> Result<RetentionMatrix> {
    let schema = |line: u64, message: String| Error::SchemaViolation {
        file: path.to_path_buf(),
        line,
        message,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(text.as_bytes());
    let header = reader
        .headers()
        .map_err(|e| schema(1, e.to_string()))?
        .clone();
    let num_epochs = header.len().saturating_sub(1);
    let expected: Vec<String> = std::iter::once("sample_id".to_owned())
        .chain((0..num_epochs).map(|e| format!("e{e}")))
        .collect();
    if header.iter().ne(expected.iter().map(String::as_str)) || num_epochs < 2 {
        return Err(schema(
            1,
            format!("header must be `sample_id,e0,e1,...` with at least two epochs, got `{}`", header.iter().collect::<Vec<_>>().join(",")),
        ));
    }

    let mut rows: Vec<(String, Vec<u8>)> = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            schema(line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let id = record.get(0).unwrap_or_default();
        if id.is_empty() {
            return Err(schema(line, "empty sample_id".into()));
        }
        if let Some((prev, _)) = rows.last() {
            if prev.as_str() >= id {
                return Err(schema(
                    line,
                    format!("sample ids must be unique and ascending; `{id}` follows `{prev}`"),
                ));
            }
        }
        let mut bits = Vec::with_capacity(num_epochs);
        for (col, cell) in record.iter().enumerate().skip(1) {
            match cell {
                "0" => bits.push(0),
                "1" => bits.push(1),
                other => {
                    return Err(Error::NonBinaryValue {
                        row: line as usize,
                        col: col + 1,
                        value: other.to_owned(),
                    })
                }
            }
        }
        rows.push((id.to_owned(), bits));
    }
    if rows.is_empty() {
        return Err(schema(1, "no sample rows".into()));
    }
    RetentionMatrix::from_rows(rows)
}

/// Writes `run.json` and `retention.csv` in canonical form.
pub fn save_bundle(bundle: &RunBundle, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let run = RunJson {
        run_id: bundle.run_id.clone(),
        dataset: bundle.dataset.clone(),
        backbone: bundle.backbone.clone(),
        seed: bundle.seed,
        phase1_epochs: bundle.phase1_epochs,
        phase2_epochs: bundle.phase2_epochs(),
        samples: bundle
            .meta
            .iter()
            .map(|m| SampleJson {
                id: m.sample_id.clone(),
                class: m.class_label.clone(),
                phase1_loss: round_sig9(m.phase1_loss),
                split: m.split,
            })
            .collect(),
    };
    let mut json = serde_json::to_string_pretty(&run).expect("bundle metadata serializes");
    json.push('\n');
    write_file(&dir.join(RUN_FILE), &json)?;
    write_file(&dir.join(RETENTION_FILE), &retention_csv(&bundle.retention))
}

fn retention_csv(matrix: &RetentionMatrix) -> String {
    let mut out = String::with_capacity(matrix.num_samples() * (matrix.num_epochs() * 2 + 12));
    out.push_str("sample_id");
    for e in 0..matrix.num_epochs() {
        let _ = write!(out, ",e{e}");
    }
    out.push('\n');
    let mut writer = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    for (id, row) in matrix.sample_ids().iter().zip(matrix.rows()) {
        writer.write_field(id).expect("in-memory write");
        for &b in row {
            writer.write_field(if b == 1 { "1" } else { "0" }).expect("in-memory write");
        }
        writer.write_record(None::<&[u8]>).expect("in-memory write");
    }
    out.push_str(std::str::from_utf8(&writer.into_inner().expect("flush")).expect("utf-8"));
    out
}
