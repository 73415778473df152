use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("retention matrix has no samples")]
    EmptyMatrix,

    #[error("retention matrix needs at least 2 epochs, got {0}")]
    TooFewEpochs(usize),

    #[error("duplicate sample id `{0}`")]
    DuplicateSampleId(String),

    #[error("row for sample `{sample_id}` has {got} epochs, expected {expected}")]
    RaggedRow {
        sample_id: String,
        expected: usize,
        got: usize,
    },

    #[error("non-binary value `{value}` at row {row}, column {col}")]
    NonBinaryValue { row: usize, col: usize, value: String },

    #[error("sample `{0}` was never learned")]
    NeverLearned(String),

    #[error("sequence is empty")]
    EmptySequence,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("every sample is never-learned; no fitted decay constants to impute from")]
    AllSamplesNeverLearned,

    #[error("runs `{0}` and `{1}` share no sample ids")]
    DisjointUniverses(String, String),

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("need at least {min} observations, got {got}")]
    TooFewObservations { got: usize, min: usize },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("{0} input has zero variance; rank correlation is undefined")]
    ZeroVariance(&'static str),

    #[error("sample `{0}` has no class label in the metadata")]
    UnknownClassLabel(String),

    #[error("sample `{0}` has no phase-1 loss in the metadata")]
    MissingLoss(String),

    #[error("no samples with an R² value")]
    NoFittedSamples,

    #[error("negative gap: epoch {epoch} precedes last-seen epoch {last_seen}")]
    NegativeGap { epoch: i64, last_seen: i64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("bootstrap could not draw a non-degenerate resample after {0} attempts")]
    DegenerateBootstrap(usize),

    #[error("missing file {}", .0.display())]
    MissingFile(PathBuf),

    #[error("{}:{line}: {message}", file.display())]
    SchemaViolation {
        file: PathBuf,
        line: u64,
        message: String,
    },

    #[error("sample ids in run.json and retention.csv disagree: {0}")]
    InconsistentIds(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Stable machine-readable name, used for JSON error reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::EmptyMatrix => "empty_matrix",
            Error::TooFewEpochs(_) => "too_few_epochs",
            Error::DuplicateSampleId(_) => "duplicate_sample_id",
            Error::RaggedRow { .. } => "ragged_row",
            Error::NonBinaryValue { .. } => "non_binary_value",
            Error::NeverLearned(_) => "never_learned",
            Error::EmptySequence => "empty_sequence",
            Error::InvalidConfig(_) => "invalid_config",
            Error::AllSamplesNeverLearned => "all_samples_never_learned",
            Error::DisjointUniverses(..) => "disjoint_universes",
            Error::LengthMismatch { .. } => "length_mismatch",
            Error::TooFewObservations { .. } => "too_few_observations",
            Error::NonFinite(_) => "non_finite",
            Error::ZeroVariance(_) => "zero_variance",
            Error::UnknownClassLabel(_) => "unknown_class_label",
            Error::MissingLoss(_) => "missing_loss",
            Error::NoFittedSamples => "no_fitted_samples",
            Error::NegativeGap { .. } => "negative_gap",
            Error::InvalidParameter(_) => "invalid_parameter",
            Error::DegenerateBootstrap(_) => "degenerate_bootstrap",
            Error::MissingFile(_) => "missing_file",
            Error::SchemaViolation { .. } => "schema_violation",
            Error::InconsistentIds(_) => "inconsistent_ids",
            Error::Io { .. } => "io_failure",
        }
    }
}
