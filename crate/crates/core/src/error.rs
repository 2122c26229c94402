use thiserror::Error;

/// Errors raised by the numerical core and the tensor file format.
#[derive(Debug, Error)]
pub enum Error {
    #[error("row {0} has (near-)zero L2 norm")]
    ZeroRow(usize),

    #[error("vector has (near-)zero L2 norm")]
    ZeroVector,

    #[error("row {0} of the keep mask has no surviving entry")]
    EmptyRow(usize),

    #[error("vector is constant; standard deviation is (near-)zero")]
    ConstantVector,

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("feature map has no spatial grid")]
    MissingGrid,

    #[error("LOF needs at least 2 points, got {0}")]
    TooFewPoints(usize),

    #[error("batch is empty")]
    EmptyBatch,

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("loss became non-finite at step {step}")]
    NonFiniteLoss { step: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("bad magic bytes {0:?}, expected \"DSDP\"")]
    BadMagic([u8; 4]),

    #[error("unsupported tensor file version {0}")]
    UnsupportedVersion(u32),

    #[error("unsupported dtype code {0}")]
    UnsupportedDtype(u8),

    #[error("payload length mismatch: expected {expected} bytes, found {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("i/o failure: {0}")]
    IoFailure(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn dim_mismatch(msg: impl Into<String>) -> Error {
    Error::DimensionMismatch(msg.into())
}
