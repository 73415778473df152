//! Binary retention matrix and per-sample retention statistics.
//!
//! `R[i][e] = 1` when sample `i` is classified correctly at the end of
//! fine-tuning epoch `e` (epoch 0 is the first epoch after head warmup).
//! A forgetting event happens at epoch `e ≥ 1` when `R[i][e-1] = 1` and
//! `R[i][e] = 0`.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Row-major binary matrix with one row per sample, rows sorted by sample id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RetentionMatrix {
    sample_ids: Vec<String>,
    num_epochs: usize,
    bits: Vec<u8>,
}

impl RetentionMatrix {
    /// Builds a matrix from `(sample_id, row)` pairs in any order.
    ///
    /// Rows are re-ordered by ascending sample id. Every row must have the
    /// same length (at least 2) and contain only 0 or 1.
    pub fn from_rows<S, R>(rows: impl IntoIterator<Item = (S, R)>) -> Result<Self>
    where
        S: Into<String>,
        R: AsRef<[u8]>,
    {
        let mut rows: Vec<(String, Vec<u8>)> = rows
            .into_iter()
            .map(|(id, row)| (id.into(), row.as_ref().to_vec()))
            .collect();
        if rows.is_empty() {
            return Err(Error::EmptyMatrix);
        }
        rows.sort_by(|a, b| a.0.cmp(&b.0));

        let num_epochs = rows[0].1.len();
        if num_epochs < 2 {
            return Err(Error::TooFewEpochs(num_epochs));
        }
        let mut sample_ids = Vec::with_capacity(rows.len());
        let mut bits = Vec::with_capacity(rows.len() * num_epochs);
        for (row_idx, (id, row)) in rows.into_iter().enumerate() {
            if sample_ids.last() == Some(&id) {
                return Err(Error::DuplicateSampleId(id));
            }
            if row.len() != num_epochs {
                return Err(Error::RaggedRow {
                    sample_id: id,
                    expected: num_epochs,
                    got: row.len(),
                });
            }
            if let Some(col) = row.iter().position(|&b| b > 1) {
                return Err(Error::NonBinaryValue {
                    row: row_idx,
                    col,
                    value: row[col].to_string(),
                });
            }
            bits.extend_from_slice(&row);
            sample_ids.push(id);
        }
        Ok(Self {
            sample_ids,
            num_epochs,
            bits,
        })
    }

    pub fn num_samples(&self) -> usize {
        self.sample_ids.len()
    }

    pub fn num_epochs(&self) -> usize {
        self.num_epochs
    }

    pub fn sample_ids(&self) -> &[String] {
        &self.sample_ids
    }

    pub fn row(&self, index: usize) -> &[u8] {
        let start = index * self.num_epochs;
        &self.bits[start..start + self.num_epochs]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[u8]> + '_ {
        self.bits.chunks_exact(self.num_epochs)
    }

    pub fn index_of(&self, sample_id: &str) -> Option<usize> {
        self.sample_ids
            .binary_search_by(|id| id.as_str().cmp(sample_id))
            .ok()
    }

    /// Keeps only the rows whose id is in `keep`; fails if nothing is left.
    pub fn retain_ids(&self, keep: &HashSet<&str>) -> Result<Self> {
        Self::from_rows(
            self.sample_ids
                .iter()
                .zip(self.rows())
                .filter(|(id, _)| keep.contains(id.as_str()))
                .map(|(id, row)| (id.clone(), row)),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

/// Identity and warmup loss of one sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleMeta {
    pub sample_id: String,
    pub class_label: String,
    /// Cross-entropy at the end of head warmup.
    pub phase1_loss: f64,
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RetentionStats {
    pub sample_id: String,
    pub first_learned_epoch: Option<usize>,
    pub forgetting_event_count: usize,
    pub forgetting_event_epochs: Vec<usize>,
    /// Fraction of epochs strictly after the first-learned epoch at which the
    /// sample is still correct; 1.0 when learned at the final epoch.
    pub retention_rate: Option<f64>,
    pub never_learned: bool,
    pub never_forgotten: bool,
}

/// Statistics for a single row.
pub fn row_stats(sample_id: &str, row: &[u8]) -> RetentionStats {
    let first = row.iter().position(|&b| b == 1);
    let events: Vec<usize> = row
        .windows(2)
        .enumerate()
        .filter(|(_, w)| w[0] == 1 && w[1] == 0)
        .map(|(e, _)| e + 1)
        .collect();

    let retention_rate = first.map(|e_star| {
        let post = &row[e_star + 1..];
        if post.is_empty() {
            1.0
        } else {
            post.iter().filter(|&&b| b == 1).count() as f64 / post.len() as f64
        }
    });

    RetentionStats {
        sample_id: sample_id.to_owned(),
        first_learned_epoch: first,
        never_learned: first.is_none(),
        never_forgotten: first.is_some() && events.is_empty(),
        forgetting_event_count: events.len(),
        forgetting_event_epochs: events,
        retention_rate,
    }
}

/// Per-sample statistics in canonical row order.
pub fn compute_retention_stats(matrix: &RetentionMatrix) -> Vec<RetentionStats> {
    matrix
        .sample_ids()
        .iter()
        .zip(matrix.rows())
        .map(|(id, row)| row_stats(id, row))
        .collect()
}

/// The row from the first-learned epoch onwards: `(R[e*], …, R[E-1])`.
///
/// Element `t` of the result is the observation `t` epochs after first
/// learning, so the first element is always 1.
pub fn retention_vector_post_learning(matrix: &RetentionMatrix, sample_index: usize) -> Result<&[u8]> {
    let row = matrix.row(sample_index);
    match row.iter().position(|&b| b == 1) {
        Some(e_star) => Ok(&row[e_star..]),
        None => Err(Error::NeverLearned(matrix.sample_ids()[sample_index].clone())),
    }
}
