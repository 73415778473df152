//! Percentile bootstrap for Spearman's ρ.
//!
//! Each resample `b` draws from its own ChaCha8 stream (`seed`, stream `b`),
//! so resamples can be computed in parallel and still reproduce bit-exactly.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::rank::{average_ranks, pearson, spearman_rho};
use crate::quantile::percentile_sorted;
use crate::{Error, Result};

/// Redraws allowed for a single resample before giving up.
const MAX_ATTEMPTS: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BootstrapConfig {
    pub resamples: usize,
    pub confidence: f64,
    pub seed: u64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self {
            resamples: 10_000,
            confidence: 0.95,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BootstrapInterval {
    pub low: f64,
    pub high: f64,
    pub confidence: f64,
    pub resamples: usize,
    /// Draws discarded because a coordinate had zero variance.
    pub skipped: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
}

pub fn bootstrap_ci_rho(x: &[f64], y: &[f64], config: &BootstrapConfig) -> Result<BootstrapInterval> {
    if config.resamples < 100 {
        return Err(Error::InvalidParameter(format!(
            "bootstrap needs at least 100 resamples, got {}",
            config.resamples
        )));
    }
    if !(config.confidence > 0.0 && config.confidence < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "confidence {} outside (0, 1)",
            config.confidence
        )));
    }
    // Validates lengths, finiteness and variance of the full sample.
    spearman_rho(x, y)?;

    let draws: Vec<(f64, usize)> = (0..config.resamples)
        .into_par_iter()
        .map(|b| resample_rho(x, y, config.seed, b as u64))
        .collect::<Result<_>>()?;

    let skipped: usize = draws.iter().map(|d| d.1).sum();
    let mut rhos: Vec<f64> = draws.into_iter().map(|d| d.0).collect();
    rhos.sort_by(f64::total_cmp);
    let alpha = 1.0 - config.confidence;
    let low = percentile_sorted(&rhos, 100.0 * alpha / 2.0);
    let high = percentile_sorted(&rhos, 100.0 * (1.0 - alpha / 2.0));

    let total = config.resamples + skipped;
    let warning = (skipped * 100 > total).then(|| {
        let msg = format!("{skipped} of {total} bootstrap draws were degenerate and redrawn");
        log::warn!("{msg}");
        msg
    });

    Ok(BootstrapInterval {
        low,
        high,
        confidence: config.confidence,
        resamples: config.resamples,
        skipped,
        warning,
    })
}

fn resample_rho(x: &[f64], y: &[f64], seed: u64, stream: u64) -> Result<(f64, usize)> {
    let n = x.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let mut xs = vec![0.0; n];
    let mut ys = vec![0.0; n];
    for attempt in 0..MAX_ATTEMPTS {
        for j in 0..n {
            let i = rng.gen_range(0..n);
            xs[j] = x[i];
            ys[j] = y[i];
        }
        if let Some(rho) = pearson(&average_ranks(&xs), &average_ranks(&ys)) {
            return Ok((rho, attempt));
        }
    }
    Err(Error::DegenerateBootstrap(MAX_ATTEMPTS))
}
