//! Per-epoch sampling weights and schedule simulation.
//!
//! Spaced repetition scores each sample by its urgency
//! `u = 1 - exp(-λ (e - e_last))`, the probability under the decay model that
//! the sample was forgotten since it was last drawn, and samples from
//! `softmax(u / τ)`. The baselines are uniform (optionally inverse class
//! frequency) sampling, curriculum (low warmup loss first) and
//! anti-curriculum (high warmup loss first), both relaxing linearly to
//! uniform by the final epoch.
//!
//! Draws are with replacement. Epoch `e` draws from ChaCha8 stream `e` of the
//! run seed, so any epoch can be replayed on its own.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use rand::distributions::{Distribution, WeightedIndex};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Random,
    Curriculum,
    AntiCurriculum,
    SpacedRepetition,
}

impl Strategy {
    /// Short name used on the command line and in export file names.
    pub fn short_name(self) -> &'static str {
        match self {
            Strategy::Random => "random",
            Strategy::Curriculum => "curriculum",
            Strategy::AntiCurriculum => "anti",
            Strategy::SpacedRepetition => "sr",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short_name())
    }
}

impl FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "random" => Ok(Strategy::Random),
            "curriculum" => Ok(Strategy::Curriculum),
            "anti" | "anti-curriculum" => Ok(Strategy::AntiCurriculum),
            "sr" | "spaced-repetition" => Ok(Strategy::SpacedRepetition),
            other => Err(format!("unknown strategy `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CurriculumDirection {
    EasyFirst,
    HardFirst,
}

/// Sampling distribution over samples for one epoch.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StrategyWeights {
    pub strategy: Strategy,
    pub epoch: usize,
    pub weights: Vec<f64>,
}

/// `1 - exp(-λ (epoch - last_seen))`.
pub fn urgency(lambda: f64, epoch: i64, last_seen: i64) -> Result<f64> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "scheduler lambda must be positive and finite, got {lambda}"
        )));
    }
    if epoch < last_seen {
        return Err(Error::NegativeGap { epoch, last_seen });
    }
    let gap = (epoch - last_seen) as f64;
    Ok(-(-lambda * gap).exp_m1())
}

/// Temperature softmax, shifted by the maximum before exponentiating.
pub fn softmax_weights(urgencies: &[f64], tau: f64, epoch: usize) -> Result<StrategyWeights> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::InvalidParameter(format!("tau must be positive, got {tau}")));
    }
    if urgencies.is_empty() {
        return Err(Error::EmptySequence);
    }
    if urgencies.iter().any(|u| !u.is_finite()) {
        return Err(Error::NonFinite("urgencies"));
    }
    let max = urgencies.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = urgencies.iter().map(|u| ((u - max) / tau).exp()).collect();
    let total: f64 = exps.iter().sum();
    Ok(StrategyWeights {
        strategy: Strategy::SpacedRepetition,
        epoch,
        weights: exps.into_iter().map(|x| x / total).collect(),
    })
}

/// Linear-in-rank weights relaxed toward uniform.
///
/// Samples are ranked by warmup loss (ascending for easy-first, descending
/// for hard-first; ties by index); rank 1 gets base weight `N` and rank `N`
/// gets 1. The normalised base is blended with uniform using
/// `α = epoch / (total_epochs - 1)`.
pub fn curriculum_weights(
    phase1_losses: &[f64],
    epoch: usize,
    total_epochs: usize,
    direction: CurriculumDirection,
) -> Result<StrategyWeights> {
    if total_epochs == 0 || epoch >= total_epochs {
        return Err(Error::InvalidParameter(format!(
            "epoch {epoch} outside 0..{total_epochs}"
        )));
    }
    if phase1_losses.is_empty() {
        return Err(Error::EmptySequence);
    }
    if phase1_losses.iter().any(|l| !l.is_finite()) {
        return Err(Error::NonFinite("phase-1 losses"));
    }
    let n = phase1_losses.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        let ord = phase1_losses[a].total_cmp(&phase1_losses[b]);
        match direction {
            CurriculumDirection::EasyFirst => ord,
            CurriculumDirection::HardFirst => ord.reverse(),
        }
        .then(a.cmp(&b))
    });
    let base_total = (n * (n + 1) / 2) as f64;
    let mut base = vec![0.0; n];
    for (pos, &i) in order.iter().enumerate() {
        // rank = pos + 1, base weight N - rank + 1
        base[i] = (n - pos) as f64 / base_total;
    }

    let alpha = if total_epochs == 1 {
        1.0
    } else {
        epoch as f64 / (total_epochs - 1) as f64
    };
    let uniform = 1.0 / n as f64;
    // Both terms already sum to one; at α = 1 this is exactly 1/N.
    let weights: Vec<f64> = base.iter().map(|w| (1.0 - alpha) * w + alpha * uniform).collect();
    Ok(StrategyWeights {
        strategy: match direction {
            CurriculumDirection::EasyFirst => Strategy::Curriculum,
            CurriculumDirection::HardFirst => Strategy::AntiCurriculum,
        },
        epoch,
        weights,
    })
}

/// Uniform weights, or weights proportional to inverse class frequency.
pub fn random_weights(n: usize, class_labels: Option<&[String]>, epoch: usize) -> Result<StrategyWeights> {
    if n == 0 {
        return Err(Error::EmptySequence);
    }
    let weights = match class_labels {
        None => vec![1.0 / n as f64; n],
        Some(labels) => {
            if labels.len() != n {
                return Err(Error::LengthMismatch {
                    left: n,
                    right: labels.len(),
                });
            }
            let mut counts: HashMap<&str, usize> = HashMap::new();
            for l in labels {
                *counts.entry(l.as_str()).or_default() += 1;
            }
            let raw: Vec<f64> = labels.iter().map(|l| 1.0 / counts[l.as_str()] as f64).collect();
            let total: f64 = raw.iter().sum();
            raw.into_iter().map(|w| w / total).collect()
        }
    };
    Ok(StrategyWeights {
        strategy: Strategy::Random,
        epoch,
        weights,
    })
}

/// Random source for one epoch of a seeded schedule.
pub fn epoch_rng(seed: u64, epoch: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch as u64);
    rng
}

/// `n_draws` sample indices drawn with replacement, in draw order.
pub fn draw_epoch(weights: &StrategyWeights, n_draws: usize, seed: u64) -> Result<Vec<usize>> {
    if n_draws == 0 {
        return Err(Error::InvalidParameter("n_draws must be at least 1".into()));
    }
    let dist = WeightedIndex::new(&weights.weights)
        .map_err(|e| Error::InvalidParameter(format!("invalid weights: {e}")))?;
    let mut rng = epoch_rng(seed, weights.epoch);
    Ok((0..n_draws).map(|_| dist.sample(&mut rng)).collect())
}

/// Spaced-repetition state: scheduler `λ` and the last epoch each sample was
/// drawn (-1 before the first epoch).
#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleState {
    pub epoch: i64,
    pub last_seen: Vec<i64>,
    pub lambda_sched: Vec<f64>,
    pub tau: f64,
}

impl ScheduleState {
    pub fn new(lambda_sched: Vec<f64>, tau: f64) -> Result<Self> {
        if lambda_sched.is_empty() {
            return Err(Error::EmptySequence);
        }
        if let Some(l) = lambda_sched.iter().find(|l| !(**l > 0.0 && l.is_finite())) {
            return Err(Error::InvalidParameter(format!(
                "scheduler lambda must be positive (apply the epsilon floor first), got {l}"
            )));
        }
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(Error::InvalidParameter(format!("tau must be positive, got {tau}")));
        }
        Ok(Self {
            epoch: 0,
            last_seen: vec![-1; lambda_sched.len()],
            lambda_sched,
            tau,
        })
    }

    pub fn urgencies(&self) -> Result<Vec<f64>> {
        self.lambda_sched
            .iter()
            .zip(&self.last_seen)
            .map(|(&l, &last)| urgency(l, self.epoch, last))
            .collect()
    }

    pub fn weights(&self) -> Result<StrategyWeights> {
        softmax_weights(&self.urgencies()?, self.tau, self.epoch as usize)
    }

    /// Marks every drawn sample as seen in the current epoch, then advances.
    pub fn finish_epoch(&mut self, drawn: &[usize]) {
        for &i in drawn {
            self.last_seen[i] = self.epoch;
        }
        self.epoch += 1;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleConfig {
    pub epochs: usize,
    pub draws_per_epoch: usize,
    pub tau: f64,
    pub seed: u64,
    /// Random strategy only: weight by inverse class frequency.
    pub inverse_class_frequency: bool,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self {
            epochs: 45,
            draws_per_epoch: 1,
            tau: 1.0,
            seed: 0,
            inverse_class_frequency: false,
        }
    }
}

/// Per-sample inputs; slices are index-aligned.
#[derive(Debug, Clone, Copy, Default)]
pub struct ScheduleInput<'a> {
    /// Scheduler `λ` (already floored); required for spaced repetition.
    pub lambda_sched: Option<&'a [f64]>,
    /// Required for curriculum and anti-curriculum.
    pub phase1_losses: Option<&'a [f64]>,
    /// Required for inverse-frequency random sampling.
    pub class_labels: Option<&'a [String]>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub weights: StrategyWeights,
    pub drawn: Vec<usize>,
    /// Spaced repetition only: last-seen epochs after this epoch's update.
    pub last_seen: Option<Vec<i64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleOutcome {
    pub strategy: Strategy,
    pub selection_counts: Vec<u64>,
    pub epochs: Vec<EpochRecord>,
}

pub fn simulate_schedule(
    input: ScheduleInput<'_>,
    strategy: Strategy,
    config: &ScheduleConfig,
) -> Result<ScheduleOutcome> {
    if config.epochs == 0 {
        return Err(Error::InvalidParameter("epochs must be at least 1".into()));
    }
    let n = [
        input.lambda_sched.map(<[f64]>::len),
        input.phase1_losses.map(<[f64]>::len),
        input.class_labels.map(<[String]>::len),
    ]
    .into_iter()
    .flatten()
    .try_fold(None, |acc: Option<usize>, len| match acc {
        Some(n) if n != len => Err(Error::LengthMismatch { left: n, right: len }),
        _ => Ok(Some(len)),
    })?
    .ok_or(Error::EmptySequence)?;

    let require_losses = || {
        input.phase1_losses.ok_or_else(|| {
            Error::InvalidParameter(format!("{strategy} sampling needs phase-1 losses"))
        })
    };
    let mut sr_state = match strategy {
        Strategy::SpacedRepetition => {
            let lambdas = input.lambda_sched.ok_or_else(|| {
                Error::InvalidParameter("spaced repetition needs decay constants".into())
            })?;
            Some(ScheduleState::new(lambdas.to_vec(), config.tau)?)
        }
        _ => None,
    };
    let classes = if config.inverse_class_frequency {
        Some(input.class_labels.ok_or_else(|| {
            Error::InvalidParameter("inverse-frequency sampling needs class labels".into())
        })?)
    } else {
        None
    };

    let mut counts = vec![0u64; n];
    let mut epochs = Vec::with_capacity(config.epochs);
    for e in 0..config.epochs {
        let weights = match strategy {
            Strategy::Random => random_weights(n, classes, e)?,
            Strategy::Curriculum => {
                curriculum_weights(require_losses()?, e, config.epochs, CurriculumDirection::EasyFirst)?
            }
            Strategy::AntiCurriculum => {
                curriculum_weights(require_losses()?, e, config.epochs, CurriculumDirection::HardFirst)?
            }
            Strategy::SpacedRepetition => sr_state.as_ref().expect("initialised above").weights()?,
        };
        let drawn = draw_epoch(&weights, config.draws_per_epoch, config.seed)?;
        for &i in &drawn {
            counts[i] += 1;
        }
        let last_seen = sr_state.as_mut().map(|s| {
            s.finish_epoch(&drawn);
            s.last_seen.clone()
        });
        epochs.push(EpochRecord {
            weights,
            drawn,
            last_seen,
        });
    }
    Ok(ScheduleOutcome {
        strategy,
        selection_counts: counts,
        epochs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use super::Strategy;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn urgency_values() {
        assert_eq!(urgency(3.0, 4, 4).unwrap(), 0.0);
        // 1 - e^{-0.1}
        assert!(close(urgency(0.01, 10, 0).unwrap(), 0.095_162_581_964_040_43, 1e-15));
        assert!(close(urgency(10.0, 5, 0).unwrap(), 1.0, 1e-15));
        assert!(matches!(urgency(1.0, 2, 3), Err(Error::NegativeGap { epoch: 2, last_seen: 3 })));
        assert!(urgency(0.0, 2, 1).is_err());
    }

    #[test]
    fn softmax_values() {
        let w = softmax_weights(&[0.3; 4], 1.0, 0).unwrap();
        assert!(w.weights.iter().all(|&x| x == 0.25));
        let e = std::f64::consts::E;
        let w = softmax_weights(&[1.0, 0.0], 1.0, 0).unwrap();
        assert!(close(w.weights[0], e / (e + 1.0), 1e-15));
        assert!(close(w.weights[1], 1.0 / (e + 1.0), 1e-15));
        let w = softmax_weights(&[0.0, 0.4, 1.0, 0.9], 1e6, 0).unwrap();
        assert!(w.weights.iter().all(|&x| close(x, 0.25, 1e-6)));
        assert!(softmax_weights(&[0.1], 0.0, 0).is_err());
        assert!(softmax_weights(&[], 1.0, 0).is_err());
    }

    #[test]
    fn curriculum_epoch_zero_by_hand() {
        let w = curriculum_weights(&[0.1, 0.5, 0.9], 0, 10, CurriculumDirection::EasyFirst).unwrap();
        let expected = [0.5, 1.0 / 3.0, 1.0 / 6.0];
        for (a, b) in w.weights.iter().zip(expected) {
            assert!(close(*a, b, 1e-15));
        }
        let anti = curriculum_weights(&[0.1, 0.5, 0.9], 0, 10, CurriculumDirection::HardFirst).unwrap();
        assert_eq!(anti.strategy, Strategy::AntiCurriculum);
        for (a, b) in anti.weights.iter().zip(expected.iter().rev()) {
            assert!(close(*a, *b, 1e-15));
        }
    }

    #[test]
    fn curriculum_final_epoch_is_uniform() {
        let losses = [0.7, 0.1, 2.0, 0.3, 0.3];
        for dir in [CurriculumDirection::EasyFirst, CurriculumDirection::HardFirst] {
            let w = curriculum_weights(&losses, 9, 10, dir).unwrap();
            assert!(w.weights.iter().all(|&x| x == 1.0 / 5.0));
            let w = curriculum_weights(&losses, 0, 1, dir).unwrap();
            assert!(w.weights.iter().all(|&x| x == w.weights[0]));
        }
        assert!(curriculum_weights(&losses, 10, 10, CurriculumDirection::EasyFirst).is_err());
    }

    #[test]
    fn inverse_frequency_random() {
        let labels: Vec<String> = ["a", "a", "a", "b"].iter().map(|s| s.to_string()).collect();
        let w = random_weights(4, Some(&labels), 0).unwrap();
        // a: 1/3 each, b: 1 -> normalised by 2
        for (x, e) in w.weights.iter().zip([1.0 / 6.0, 1.0 / 6.0, 1.0 / 6.0, 0.5]) {
            assert!(close(*x, e, 1e-15));
        }
        assert_eq!(random_weights(4, None, 0).unwrap().weights, vec![0.25; 4]);
    }

    #[test]
    fn degenerate_distribution_draws() {
        let w = StrategyWeights {
            strategy: Strategy::Random,
            epoch: 3,
            weights: vec![1.0, 0.0, 0.0],
        };
        assert!(draw_epoch(&w, 1000, 5).unwrap().iter().all(|&i| i == 0));
        assert!(draw_epoch(&w, 0, 5).is_err());
    }

    #[test]
    fn draw_frequencies() {
        let w = StrategyWeights {
            strategy: Strategy::Random,
            epoch: 0,
            weights: vec![0.75, 0.25],
        };
        let n = 1_000_000;
        let draws = draw_epoch(&w, n, 11).unwrap();
        let zeros = draws.iter().filter(|&&i| i == 0).count() as f64 / n as f64;
        assert!(close(zeros, 0.75, 0.005), "{zeros}");

        let w = random_weights(4, None, 2).unwrap();
        let draws = draw_epoch(&w, n, 12).unwrap();
        for k in 0..4 {
            let f = draws.iter().filter(|&&i| i == k).count() as f64 / n as f64;
            assert!(close(f, 0.25, 0.005), "{k}: {f}");
        }
    }

    #[test]
    fn sr_epoch_zero_is_uniform_for_equal_lambdas() {
        let state = ScheduleState::new(vec![0.4; 5], 1.0).unwrap();
        let w = state.weights().unwrap();
        assert!(w.weights.iter().all(|&x| x == w.weights[0]));
    }

    #[test]
    fn drawn_sample_has_gap_one_next_epoch() {
        let mut state = ScheduleState::new(vec![0.7, 0.7], 1.0).unwrap();
        state.finish_epoch(&[0]);
        let u = state.urgencies().unwrap();
        assert_eq!(u[0], -(-0.7f64).exp_m1());
        assert_eq!(u[1], -(-1.4f64).exp_m1());
    }

    #[test]
    fn curriculum_and_anti_mirror_each_other_in_counts() {
        let losses: Vec<f64> = (0..6).map(|i| i as f64).collect();
        let cfg = ScheduleConfig {
            epochs: 4,
            draws_per_epoch: 20_000,
            seed: 3,
            ..Default::default()
        };
        let input = ScheduleInput {
            phase1_losses: Some(&losses),
            ..Default::default()
        };
        let cur = simulate_schedule(input, Strategy::Curriculum, &cfg).unwrap();
        let anti = simulate_schedule(input, Strategy::AntiCurriculum, &cfg).unwrap();
        let c0 = &cur.epochs[0].weights.weights;
        let a0 = &anti.epochs[0].weights.weights;
        let reversed: Vec<f64> = c0.iter().rev().copied().collect();
        assert!(a0.iter().zip(&reversed).all(|(a, r)| close(*a, *r, 1e-15)));
        let count = |drawn: &[usize], k: usize| drawn.iter().filter(|&&i| i == k).count();
        // counts at epoch 0 decrease with loss for curriculum, increase for anti
        let cur_counts: Vec<usize> = (0..6).map(|k| count(&cur.epochs[0].drawn, k)).collect();
        let anti_counts: Vec<usize> = (0..6).map(|k| count(&anti.epochs[0].drawn, k)).collect();
        assert!(cur_counts.windows(2).all(|w| w[0] > w[1]), "{cur_counts:?}");
        assert!(anti_counts.windows(2).all(|w| w[0] < w[1]), "{anti_counts:?}");
    }

    #[test]
    fn simulate_requires_inputs() {
        let cfg = ScheduleConfig::default();
        let none = ScheduleInput::default();
        assert!(simulate_schedule(none, Strategy::Random, &cfg).is_err());
        let l = [0.5, 0.5];
        let only_lambda = ScheduleInput {
            lambda_sched: Some(&l),
            ..Default::default()
        };
        assert!(simulate_schedule(only_lambda, Strategy::Curriculum, &cfg).is_err());
        assert!(simulate_schedule(only_lambda, Strategy::SpacedRepetition, &cfg).is_ok());
        let short = [0.1];
        let mismatched = ScheduleInput {
            lambda_sched: Some(&l),
            phase1_losses: Some(&short),
            ..Default::default()
        };
        assert!(matches!(
            simulate_schedule(mismatched, Strategy::Random, &cfg),
            Err(Error::LengthMismatch { .. })
        ));
        let zero = [0.0, 1.0];
        let unfloored = ScheduleInput {
            lambda_sched: Some(&zero),
            ..Default::default()
        };
        assert!(simulate_schedule(unfloored, Strategy::SpacedRepetition, &cfg).is_err());
    }

    #[test]
    fn strategy_names_round_trip() {
        for s in [Strategy::Random, Strategy::Curriculum, Strategy::AntiCurriculum, Strategy::SpacedRepetition] {
            assert_eq!(s.short_name().parse::<Strategy>().unwrap(), s);
        }
    }

    proptest! {
        #[test]
        fn urgency_is_monotone(l in 0.001f64..5.0, dl in 0.001f64..5.0, gap in 1i64..40) {
            let u = urgency(l, gap, 0).unwrap();
            prop_assert!((0.0..1.0).contains(&u) || u == 1.0);
            prop_assert!(urgency(l, gap + 1, 0).unwrap() >= u);
            prop_assert!(urgency(l + dl, gap, 0).unwrap() >= u);
        }

        #[test]
        fn softmax_properties(u in prop::collection::vec(0.0f64..1.0, 1..30), shift in -5.0f64..5.0, tau in 0.05f64..10.0) {
            let w = softmax_weights(&u, tau, 0).unwrap();
            prop_assert!((w.weights.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            prop_assert!(w.weights.iter().all(|&x| x >= 0.0));
            let shifted: Vec<f64> = u.iter().map(|x| x + shift).collect();
            let ws = softmax_weights(&shifted, tau, 0).unwrap();
            for (a, b) in w.weights.iter().zip(&ws.weights) {
                prop_assert!((a - b).abs() < 1e-12);
            }
            let imax = (0..u.len()).max_by(|&a, &b| u[a].total_cmp(&u[b])).unwrap();
            let wmax = w.weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            prop_assert_eq!(w.weights[imax], wmax);
        }

        #[test]
        fn curriculum_weights_are_distributions(
            losses in prop::collection::vec(0.0f64..5.0, 1..30),
            epoch in 0usize..10,
        ) {
            for dir in [CurriculumDirection::EasyFirst, CurriculumDirection::HardFirst] {
                let w = curriculum_weights(&losses, epoch, 10, dir).unwrap();
                prop_assert!((w.weights.iter().sum::<f64>() - 1.0).abs() < 1e-9);
                prop_assert!(w.weights.iter().all(|&x| x > 0.0));
            }
        }

        #[test]
        fn draws_reproduce(seed in any::<u64>(), epoch in 0usize..50) {
            let w = StrategyWeights { strategy: Strategy::Random, epoch, weights: vec![0.2, 0.3, 0.5] };
            prop_assert_eq!(draw_epoch(&w, 64, seed).unwrap(), draw_epoch(&w, 64, seed).unwrap());
        }
    }
}
