//! Error types shared across the pipeline.

use thiserror::Error;

/// Every failure the library can surface.
#[derive(Debug, Error)]
pub enum SynthError {
    #[error("unknown column: {0}")]
    UnknownColumn(String),

    #[error("context column '{column}' is not constant within sequence '{key}'")]
    NonConstantContext { column: String, key: String },

    #[error("sequence index '{column}' is not orderable: {reason}")]
    UnorderableIndex { column: String, reason: String },

    #[error("cannot parse cell at line {line}, column '{column}': {reason}")]
    BadCell {
        line: usize,
        column: String,
        reason: String,
    },

    #[error("invalid metadata: {0}")]
    InvalidMetadata(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("column '{0}' has no non-missing value")]
    EmptyColumn(String),

    #[error("category '{value}' was never seen while fitting column '{column}'")]
    UnseenCategory { column: String, value: String },

    #[error("malformed fragment for column '{column}': {reason}")]
    MalformedFragment { column: String, reason: String },

    #[error("framed sequence is missing its {0} marker row")]
    MissingFraming(&'static str),

    #[error("context table is empty")]
    EmptyContextTable,

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("non-finite gradient in {0}")]
    NonFiniteGradient(String),

    #[error("non-finite loss at epoch {0}")]
    NonFiniteLoss(usize),

    #[error("negative count {0} passed to a discrete loss")]
    NegativeCount(i64),

    #[error("category index {index} out of range for {len} categories")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("empty sample handed to the KS statistic")]
    EmptySample,

    #[error("column '{0}' is not numeric")]
    NonNumericColumn(String),

    #[error("no applicable column for statistic '{0}'")]
    NoApplicableColumn(String),

    #[error("model file version {found} unsupported (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },

    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, SynthError>;

impl SynthError {
    /// Process exit code classification: 1 for usage problems, 2 for data
    /// problems, 3 for numeric failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            SynthError::InvalidConfig(_) => 1,
            SynthError::NonFiniteGradient(_)
            | SynthError::NonFiniteLoss(_)
            | SynthError::ShapeMismatch(_)
            | SynthError::NegativeCount(_)
            | SynthError::IndexOutOfRange { .. } => 3,
            _ => 2,
        }
    }
}
