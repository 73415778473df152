//! Synthetic retention matrices with known decay constants.
//!
//! Row `i` is 0 before its first-learned epoch `e*` and, for `t = e - e*`,
//! either an independent Bernoulli draw with success probability
//! `exp(-λ* t)` or (threshold mode) 1 exactly while `exp(-λ* t) ≥ 1/2`.

use std::f64::consts::LN_2;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::retention::RetentionMatrix;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseModel {
    Bernoulli,
    Threshold,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub lambda_truth: Vec<f64>,
    pub first_learned_truth: Vec<usize>,
    pub num_epochs: usize,
    pub noise_model: NoiseModel,
    pub seed: u64,
}

impl SynthSpec {
    /// `per_group` samples for each value in `lambdas`, all first learned at
    /// `first_learned`.
    pub fn grouped(
        lambdas: &[f64],
        per_group: usize,
        first_learned: usize,
        num_epochs: usize,
        noise_model: NoiseModel,
        seed: u64,
    ) -> Self {
        let lambda_truth: Vec<f64> = lambdas
            .iter()
            .flat_map(|&l| std::iter::repeat_n(l, per_group))
            .collect();
        Self {
            first_learned_truth: vec![first_learned; lambda_truth.len()],
            lambda_truth,
            num_epochs,
            noise_model,
            seed,
        }
    }

    pub fn num_samples(&self) -> usize {
        self.lambda_truth.len()
    }

    fn validate(&self) -> Result<()> {
        if self.lambda_truth.is_empty() {
            return Err(Error::EmptyMatrix);
        }
        if self.num_epochs < 2 {
            return Err(Error::TooFewEpochs(self.num_epochs));
        }
        if self.first_learned_truth.len() != self.lambda_truth.len() {
            return Err(Error::LengthMismatch {
                left: self.lambda_truth.len(),
                right: self.first_learned_truth.len(),
            });
        }
        if let Some(l) = self.lambda_truth.iter().find(|l| !(l.is_finite() && **l >= 0.0)) {
            return Err(Error::InvalidParameter(format!(
                "true decay constants must be finite and non-negative, got {l}"
            )));
        }
        if let Some(e) = self.first_learned_truth.iter().find(|&&e| e >= self.num_epochs) {
            return Err(Error::InvalidParameter(format!(
                "first-learned epoch {e} outside 0..{}",
                self.num_epochs
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TruthRow {
    pub sample_id: String,
    pub lambda_truth: f64,
    pub first_learned_truth: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthOutput {
    pub matrix: RetentionMatrix,
    /// Same order as the matrix rows.
    pub truth: Vec<TruthRow>,
}

/// Zero-padded id so that lexical order equals generation order.
pub fn synth_sample_id(index: usize, total: usize) -> String {
    let width = total.saturating_sub(1).to_string().len().max(6);
    format!("s{index:0width$}")
}

pub fn generate(spec: &SynthSpec) -> Result<SynthOutput> {
    spec.validate()?;
    let n = spec.num_samples();
    let rows: Vec<Vec<u8>> = (0..n)
        .into_par_iter()
        .map(|i| generate_row(spec, i))
        .collect();
    let ids: Vec<String> = (0..n).map(|i| synth_sample_id(i, n)).collect();
    let truth = ids
        .iter()
        .enumerate()
        .map(|(i, id)| TruthRow {
            sample_id: id.clone(),
            lambda_truth: spec.lambda_truth[i],
            first_learned_truth: spec.first_learned_truth[i],
        })
        .collect();
    let matrix = RetentionMatrix::from_rows(ids.into_iter().zip(rows))?;
    Ok(SynthOutput { matrix, truth })
}

fn generate_row(spec: &SynthSpec, i: usize) -> Vec<u8> {
    let lambda = spec.lambda_truth[i];
    let e_star = spec.first_learned_truth[i];
    let mut row = vec![0u8; spec.num_epochs];
    match spec.noise_model {
        NoiseModel::Threshold => {
            for (t, cell) in row[e_star..].iter_mut().enumerate() {
                // exp(-λt) ≥ 1/2  ⇔  λt ≤ ln 2
                *cell = u8::from(lambda * t as f64 <= LN_2);
            }
        }
        NoiseModel::Bernoulli => {
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            rng.set_stream(i as u64);
            for (t, cell) in row[e_star..].iter_mut().enumerate() {
                let p = (-lambda * t as f64).exp();
                *cell = u8::from(rng.gen::<f64>() < p);
            }
        }
    }
    row
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::retention::compute_retention_stats;

    #[test]
    fn zero_lambda_rows_stay_learned() {
        for model in [NoiseModel::Bernoulli, NoiseModel::Threshold] {
            let spec = SynthSpec {
                lambda_truth: vec![0.0, 0.0],
                first_learned_truth: vec![0, 3],
                num_epochs: 6,
                noise_model: model,
                seed: 1,
            };
            let out = generate(&spec).unwrap();
            assert_eq!(out.matrix.row(0), &[1, 1, 1, 1, 1, 1]);
            assert_eq!(out.matrix.row(1), &[0, 0, 0, 1, 1, 1]);
        }
    }

    #[test]
    fn threshold_crossing_at_ln2() {
        let spec = SynthSpec {
            lambda_truth: vec![LN_2],
            first_learned_truth: vec![0],
            num_epochs: 5,
            noise_model: NoiseModel::Threshold,
            seed: 0,
        };
        assert_eq!(generate(&spec).unwrap().matrix.row(0), &[1, 1, 0, 0, 0]);
    }

    #[test]
    fn bernoulli_retention_fraction() {
        let spec = SynthSpec::grouped(&[0.5], 1000, 0, 200, NoiseModel::Bernoulli, 2024);
        let out = generate(&spec).unwrap();
        let at_t2 = out.matrix.rows().filter(|r| r[2] == 1).count() as f64 / 1000.0;
        assert!((at_t2 - (-1.0f64).exp()).abs() < 0.05, "{at_t2}");
    }

    #[test]
    fn first_learned_epoch_is_recovered() {
        let spec = SynthSpec {
            lambda_truth: vec![0.3, 2.0, 0.0],
            first_learned_truth: vec![4, 0, 9],
            num_epochs: 10,
            noise_model: NoiseModel::Bernoulli,
            seed: 9,
        };
        let out = generate(&spec).unwrap();
        let stats = compute_retention_stats(&out.matrix);
        let recovered: Vec<Option<usize>> = stats.iter().map(|s| s.first_learned_epoch).collect();
        assert_eq!(recovered, vec![Some(4), Some(0), Some(9)]);
    }

    #[test]
    fn reproducible_per_seed() {
        let spec = SynthSpec::grouped(&[0.1, 1.0], 50, 2, 30, NoiseModel::Bernoulli, 77);
        assert_eq!(generate(&spec).unwrap(), generate(&spec).unwrap());
        let other = SynthSpec { seed: 78, ..spec.clone() };
        assert_ne!(generate(&spec).unwrap().matrix, generate(&other).unwrap().matrix);
    }

    #[test]
    fn ids_sort_in_generation_order() {
        let spec = SynthSpec::grouped(&[0.1], 12, 0, 3, NoiseModel::Threshold, 0);
        let out = generate(&spec).unwrap();
        assert_eq!(out.matrix.sample_ids()[0], "s000000");
        assert_eq!(out.matrix.sample_ids()[11], "s000011");
        assert_eq!(synth_sample_id(5, 12_345_678), "s00000005");
    }

    #[test]
    fn invalid_specs() {
        let base = SynthSpec::grouped(&[0.1], 2, 0, 3, NoiseModel::Threshold, 0);
        assert!(generate(&SynthSpec { num_epochs: 1, ..base.clone() }).is_err());
        assert!(generate(&SynthSpec { lambda_truth: vec![-1.0, 0.1], ..base.clone() }).is_err());
        assert!(generate(&SynthSpec { first_learned_truth: vec![0, 3], ..base.clone() }).is_err());
        assert!(generate(&SynthSpec { first_learned_truth: vec![0], ..base }).is_err());
    }
}
