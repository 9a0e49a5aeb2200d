use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("empty sample set")]
    EmptySamples,

    #[error("zero pattern violated: {0}")]
    ZeroPattern(String),

    #[error("operator is not hypoelliptic: {0}")]
    NotHypoelliptic(String),

    #[error("block pattern violated: {0}")]
    BlockPattern(String),

    #[error("rank deficient: {0}")]
    RankDeficient(String),

    #[error("singular Gramian (smallest eigenvalue {0:e})")]
    SingularGramian(f64),

    #[error("linear solve failed: {0}")]
    SolveFailed(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("maximum principle violated: {0}")]
    MaxPrinciple(String),

    #[error("derivative annihilated: {0}")]
    DerivativeAnnihilated(String),

    #[error("insufficient grid resolution: {0}")]
    Resolution(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn dim_err(msg: impl Into<String>) -> Error {
    Error::DimensionMismatch(msg.into())
}

pub(crate) fn arg_err(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
