use thiserror::Error;

pub type Result<T> = std::result::Result<T, AsvError>;

#[derive(Debug, Error)]
pub enum AsvError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("feature index {index} out of range for {n} features")]
    IndexOutOfRange { index: usize, n: usize },

    #[error("invalid ordering spec: {0}")]
    InvalidSpec(String),

    #[error("ordering spec is cyclic: no permutation is consistent with it")]
    CyclicSpec,

    #[error(
        "exact enumeration over {n} features exceeds the cap of {cap}; use sampling (mc) instead"
    )]
    EnumerationCap { n: usize, cap: usize },

    #[error(
        "rejection sampler gave up after {attempts} rejected draws; enumerate the spec \
         or reformulate the constraints as ordered groups"
    )]
    SamplingBudgetExhausted { attempts: u64 },

    #[error("background set is empty")]
    EmptyBackground,

    #[error("schema error: {0}")]
    Schema(String),

    #[error("strategy mismatch: {0}")]
    StrategyMismatch(String),

    #[error("no closed-form conditional: {0}")]
    NoConditional(String),

    #[error("degenerate training data: {0}")]
    DegenerateData(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl AsvError {
    /// True for failures of an estimator or one of its guards, as opposed to
    /// bad input.
    pub fn is_estimator_failure(&self) -> bool {
        matches!(
            self,
            AsvError::EnumerationCap { .. }
                | AsvError::SamplingBudgetExhausted { .. }
                | AsvError::NoConditional(_)
                | AsvError::CyclicSpec
                | AsvError::DegenerateData(_)
        )
    }
}
