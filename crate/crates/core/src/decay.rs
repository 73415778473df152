//! Exponential decay fits on post-learning retention vectors.
//!
//! Each sample's retention after first learning is modelled as
//! `P(retained at t) = exp(-λ t)`, where `t` counts epochs since the
//! first-learned epoch. `λ` is fitted by least squares on the binary vector,
//! bounded to `[lambda_min, lambda_max]`.
//!
//! The one-dimensional objective is minimised with a uniform coarse grid
//! followed by golden-section refinement inside the cell around the grid
//! minimiser. The refined point is only accepted when it strictly improves on
//! the grid minimiser, so ties resolve to the grid value (and all-ones vectors
//! give exactly `λ = 0`).

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::quantile::percentile_sorted;
use crate::retention::RetentionMatrix;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig {
    pub lambda_min: f64,
    pub lambda_max: f64,
    /// Lower bound applied to `λ` when exporting to the scheduler only.
    pub epsilon_floor: f64,
    /// Percentile of the valid fitted `λ` assigned to never-learned samples.
    pub imputation_percentile: f64,
    pub grid_points: usize,
    /// Golden-section search stops once the bracket is narrower than this.
    pub refine_tolerance: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            lambda_min: 0.0,
            lambda_max: 10.0,
            epsilon_floor: 0.01,
            imputation_percentile: 99.0,
            grid_points: 2001,
            refine_tolerance: 1e-8,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if !(self.lambda_min.is_finite() && self.lambda_max.is_finite()) || self.lambda_min < 0.0 {
            return bad(format!(
                "lambda bounds must be finite and non-negative, got [{}, {}]",
                self.lambda_min, self.lambda_max
            ));
        }
        if self.lambda_min >= self.lambda_max {
            return bad(format!(
                "lambda_min ({}) must be below lambda_max ({})",
                self.lambda_min, self.lambda_max
            ));
        }
        if !(self.epsilon_floor > 0.0 && self.epsilon_floor < self.lambda_max) {
            return bad(format!("epsilon_floor {} outside (0, lambda_max)", self.epsilon_floor));
        }
        if !(self.imputation_percentile > 0.0 && self.imputation_percentile <= 100.0) {
            return bad(format!(
                "imputation_percentile {} outside (0, 100]",
                self.imputation_percentile
            ));
        }
        if self.grid_points < 2 {
            return bad(format!("grid_points must be at least 2, got {}", self.grid_points));
        }
        if !(self.refine_tolerance > 0.0 && self.refine_tolerance.is_finite()) {
            return bad(format!("refine_tolerance must be positive, got {}", self.refine_tolerance));
        }
        Ok(())
    }

    pub fn grid_value(&self, k: usize) -> f64 {
        if k + 1 == self.grid_points {
            return self.lambda_max;
        }
        let step = (self.lambda_max - self.lambda_min) / (self.grid_points - 1) as f64;
        self.lambda_min + k as f64 * step
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitStatus {
    Fitted,
    NeverForgotten,
    NeverLearnedImputed,
}

impl FitStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            FitStatus::Fitted => "fitted",
            FitStatus::NeverForgotten => "never_forgotten",
            FitStatus::NeverLearnedImputed => "never_learned_imputed",
        }
    }
}

impl fmt::Display for FitStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FitStatus {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "fitted" => Ok(FitStatus::Fitted),
            "never_forgotten" => Ok(FitStatus::NeverForgotten),
            "never_learned_imputed" => Ok(FitStatus::NeverLearnedImputed),
            other => Err(format!("unknown fit status `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecayFit {
    pub sample_id: String,
    pub lambda: f64,
    pub fit_status: FitStatus,
    /// Absent for imputed samples.
    pub r_squared: Option<f64>,
    pub sse: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LambdaFit {
    pub lambda: f64,
    pub sse: f64,
}

/// Sum of squared residuals of `exp(-λ t)` against a binary vector.
///
/// Precomputes the positions of the ones so that each evaluation costs one
/// exponential per retained epoch plus a closed-form geometric sum.
#[derive(Debug, Clone)]
pub struct SseObjective {
    ones: Vec<f64>,
    len: usize,
}

impl SseObjective {
    pub fn new(retention: &[u8]) -> Result<Self> {
        if retention.is_empty() {
            return Err(Error::EmptySequence);
        }
        let ones = retention
            .iter()
            .enumerate()
            .filter(|(_, &r)| r != 0)
            .map(|(t, _)| t as f64)
            .collect();
        Ok(Self {
            ones,
            len: retention.len(),
        })
    }

    pub fn eval(&self, lambda: f64) -> f64 {
        // Σ r_t² - 2 Σ r_t e^{-λt} + Σ e^{-2λt}, with r binary.
        let cross: f64 = self.ones.iter().map(|&t| (-lambda * t).exp()).sum();
        let squares = if lambda == 0.0 {
            self.len as f64
        } else {
            (-2.0 * lambda * self.len as f64).exp_m1() / (-2.0 * lambda).exp_m1()
        };
        (self.ones.len() as f64 - 2.0 * cross + squares).max(0.0)
    }
}

/// Fits `λ` to a post-learning retention vector (element `t` observed `t`
/// epochs after first learning).
pub fn fit_lambda(retention: &[u8], config: &FitConfig) -> Result<LambdaFit> {
    config.validate()?;
    let objective = SseObjective::new(retention)?;
    Ok(minimize(&objective, config))
}

fn minimize(objective: &SseObjective, config: &FitConfig) -> LambdaFit {
    let mut best_k = 0;
    let mut best = objective.eval(config.grid_value(0));
    for k in 1..config.grid_points {
        let v = objective.eval(config.grid_value(k));
        if v < best {
            best = v;
            best_k = k;
        }
    }
    let grid_best = LambdaFit {
        lambda: config.grid_value(best_k),
        sse: best,
    };

    let lo = config.grid_value(best_k.saturating_sub(1));
    let hi = config.grid_value((best_k + 1).min(config.grid_points - 1));
    let refined = golden_section(|x| objective.eval(x), lo, hi, config.refine_tolerance);
    let refined_sse = objective.eval(refined);
    if refined_sse < grid_best.sse {
        LambdaFit {
            lambda: refined,
            sse: refined_sse,
        }
    } else {
        grid_best
    }
}

const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Golden-section search for a minimum of `f` on `[lo, hi]`; returns the
/// midpoint of the final bracket.
fn golden_section(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    // 200 iterations shrink any bracket by 0.618^200 ≈ 1e-42.
    for _ in 0..200 {
        if hi - lo < tol {
            break;
        }
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            f2 = f(x2);
        }
    }
    0.5 * (lo + hi)
}

/// Coefficient of determination of `exp(-λ t)` against `observed`.
///
/// A constant observed vector has no variance to explain: the result is 1.0
/// when the prediction matches exactly and 0.0 otherwise. Values below zero
/// are returned as-is.
pub fn r_squared(observed: &[u8], lambda: f64) -> Result<f64> {
    if observed.is_empty() {
        return Err(Error::EmptySequence);
    }
    let n = observed.len() as f64;
    let mean = observed.iter().map(|&r| r as f64).sum::<f64>() / n;
    let mut ss_res = 0.0;
    let mut ss_tot = 0.0;
    for (t, &r) in observed.iter().enumerate() {
        let r = r as f64;
        let pred = (-lambda * t as f64).exp();
        ss_res += (r - pred).powi(2);
        ss_tot += (r - mean).powi(2);
    }
    if ss_tot == 0.0 {
        return Ok(if ss_res == 0.0 { 1.0 } else { 0.0 });
    }
    Ok(1.0 - ss_res / ss_tot)
}

/// Fits every row of the matrix, in canonical row order.
///
/// Never-forgotten rows get `λ = 0`; never-learned rows get the configured
/// percentile of all other rows' `λ` (fitted and never-forgotten alike).
pub fn fit_all(matrix: &RetentionMatrix, config: &FitConfig) -> Result<Vec<DecayFit>> {
    config.validate()?;
    let mut fits: Vec<Option<DecayFit>> = (0..matrix.num_samples())
        .into_par_iter()
        .map(|i| fit_row(&matrix.sample_ids()[i], matrix.row(i), config))
        .collect::<Result<_>>()?;

    let mut pool: Vec<f64> = fits.iter().flatten().map(|f| f.lambda).collect();
    if pool.is_empty() {
        return Err(Error::AllSamplesNeverLearned);
    }
    pool.sort_by(f64::total_cmp);
    let imputed = percentile_sorted(&pool, config.imputation_percentile);

    Ok(fits
        .iter_mut()
        .zip(matrix.sample_ids())
        .map(|(fit, id)| {
            fit.take().unwrap_or_else(|| DecayFit {
                sample_id: id.clone(),
                lambda: imputed,
                fit_status: FitStatus::NeverLearnedImputed,
                r_squared: None,
                sse: None,
            })
        })
        .collect())
}

fn fit_row(sample_id: &str, row: &[u8], config: &FitConfig) -> Result<Option<DecayFit>> {
    let Some(e_star) = row.iter().position(|&b| b == 1) else {
        return Ok(None);
    };
    let post = &row[e_star..];
    let fit = if post.iter().all(|&b| b == 1) {
        DecayFit {
            sample_id: sample_id.to_owned(),
            lambda: 0.0,
            fit_status: FitStatus::NeverForgotten,
            r_squared: Some(r_squared(post, 0.0)?),
            sse: Some(0.0),
        }
    } else {
        let LambdaFit { lambda, sse } = minimize(&SseObjective::new(post)?, config);
        DecayFit {
            sample_id: sample_id.to_owned(),
            lambda,
            fit_status: FitStatus::Fitted,
            r_squared: Some(r_squared(post, lambda)?),
            sse: Some(sse),
        }
    };
    Ok(Some(fit))
}

/// `max(λ, ε)` per sample, for scheduler export only.
pub fn apply_epsilon_floor(fits: &[DecayFit], config: &FitConfig) -> Vec<f64> {
    fits.iter()
        .map(|f| f.lambda.max(config.epsilon_floor))
        .collect()
}
