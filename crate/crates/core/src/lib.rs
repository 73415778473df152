//! Per-sample forgetting analysis for fine-tuning runs.
//!
//! The pipeline starts from a binary retention matrix (one row per training
//! sample, one column per fine-tuning epoch, `1` = classified correctly at the
//! end of that epoch) and produces:
//!
//! * forgetting events, first-learned epochs and retention rates ([`retention`]),
//! * per-sample exponential decay constants `λ` fitted by bounded least squares
//!   ([`decay`]),
//! * cross-run comparisons: top-k Jaccard overlap, Spearman rank correlation
//!   with exact or asymptotic p-values, percentile bootstrap intervals and
//!   class-level tables ([`stats`]),
//! * replay schedules driven by the fitted constants, alongside curriculum,
//!   anti-curriculum and random baselines ([`scheduler`]).
//!
//! [`synth`] generates matrices with known decay constants for validation and
//! [`io`] defines the on-disk run bundle and report formats.

pub mod decay;
pub mod error;
pub mod io;
pub mod retention;
pub mod scheduler;
pub mod stats;
pub mod synth;

mod quantile;

pub use error::{Error, Result};
pub use quantile::percentile;
