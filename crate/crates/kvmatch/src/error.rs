use thiserror::Error;

/// Errors shared by every module of the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("series must contain at least one value")]
    EmptySeries,
    #[error("series value at position {position} is not finite")]
    NonFinite { position: usize },
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("warping band rho={rho} must be smaller than the series length {len}")]
    BandTooWide { rho: usize, len: usize },
    #[error("constant series has zero standard deviation")]
    ZeroVariance,
    #[error("series of length {len} is too short for window length {w}")]
    SeriesTooShort { len: usize, w: usize },
    #[error("query of length {len} is too short for window length {w}")]
    QueryTooShort { len: usize, w: usize },
    #[error("subsequence (offset={offset}, len={len}) out of range for series of length {n}")]
    SubsequenceOutOfRange { offset: usize, len: usize, n: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("corrupt index file: {0}")]
    CorruptIndex(String),
    #[error("corrupt data file: {0}")]
    CorruptData(String),
    #[error("enumeration space of {units} units exceeds the supported maximum of {max}")]
    TooLarge { units: usize, max: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
