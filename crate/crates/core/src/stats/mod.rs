//! Cross-run and cross-class comparisons of fitted decay constants.

mod bootstrap;
mod overlap;
mod rank;
mod tables;

pub use bootstrap::{bootstrap_ci_rho, BootstrapConfig, BootstrapInterval};
pub use overlap::{jaccard_sweep, jaccard_top_k, overlap_top_k, OverlapPoint, RankedLambdaSet};
pub use rank::{
    average_ranks, cross_seed_stability, spearman, spearman_rho, CorrelationMethod,
    CorrelationResult, SeedPairCorrelation, EXACT_PERMUTATION_MAX_N,
};
pub use tables::{
    aggregate_over_seeds, class_table, early_loss_correlation, mean_r2, mean_r2_split,
    AggregateStat, ClassForgettingRow,
};

/// Default top-k percentages for overlap sweeps.
pub const DEFAULT_K_PERCENTS: [u32; 5] = [10, 20, 30, 40, 50];
