use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("too few samples: need at least {needed}, got {got}")]
    TooFewSamples { needed: usize, got: usize },

    #[error("degenerate covariates: all pairwise covariate distances are zero")]
    DegenerateCovariates,

    #[error("design matrix is rank deficient")]
    SingularDesign,

    /// Outcome dimension exceeds the residual degrees of freedom, so the error
    /// SSCP matrix cannot be inverted.
    #[error("high-dimension low-sample-size: outcome dimension {dim} exceeds residual df {df_residual}")]
    Hdlss { dim: usize, df_residual: usize },

    #[error("vector matching retained no samples")]
    EmptyOverlap,

    #[error("vector matching retained {retained} samples, need at least {needed}")]
    InsufficientOverlap { retained: usize, needed: usize },

    #[error("unknown method `{0}`")]
    UnknownMethod(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Errors that mean "this method cannot be applied to this data" rather than
    /// a usage mistake. The harness records these instead of failing a run.
    pub fn is_applicability(&self) -> bool {
        matches!(
            self,
            Error::Hdlss { .. }
                | Error::SingularDesign
                | Error::EmptyOverlap
                | Error::InsufficientOverlap { .. }
                | Error::DegenerateCovariates
                | Error::TooFewSamples { .. }
        )
    }
}
