use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid shape {0:?}: every dimension must be at least 1")]
    EmptyDimension([usize; 4]),

    #[error("data length {len} does not match shape {shape:?}")]
    DataLength { shape: [usize; 4], len: usize },

    #[error("shape mismatch: expected {expected:?}, got {actual:?}")]
    ShapeMismatch {
        expected: [usize; 4],
        actual: [usize; 4],
    },

    #[error("channel range {lo}..{hi} out of bounds for {channels} channels")]
    ChannelRange { lo: usize, hi: usize, channels: usize },

    #[error("{channels} channels not divisible by pool size {pool}")]
    NotDivisible { channels: usize, pool: usize },

    #[error("transform size {0} is not a power of two")]
    NotPowerOfTwo(usize),

    #[error("expected {expected} channels, got {actual}")]
    ChannelCount { expected: usize, actual: usize },

    #[error("parameter `{name}` has length {actual}, expected {expected}")]
    ParamLength {
        name: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
