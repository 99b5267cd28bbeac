use thiserror::Error;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A configuration field violates its documented constraint.
    #[error("invalid {field}: {constraint}")]
    Config {
        field: &'static str,
        constraint: &'static str,
    },
    #[error("temperature must be > 0 for softmax, got {0}")]
    Temperature(f64),
    #[error("logit at index {index} is not finite")]
    NonFiniteLogit { index: usize },
    #[error("logit vector has length {found}, alphabet has {expected} tokens")]
    LengthMismatch { expected: usize, found: usize },
    #[error("distribution is empty")]
    EmptyDistribution,
    #[error("survivor masses do not contain a positive finite total")]
    DegenerateMasses,
    #[error("invalid distribution: {0}")]
    InvalidDistribution(&'static str),
    #[error("invalid alphabet: {0}")]
    InvalidAlphabet(&'static str),
    #[error("token {token} outside alphabet of size {size}")]
    TokenOutOfRange { token: usize, size: usize },
    #[error("corpus has {len} tokens, order {order} needs at least {order}")]
    CorpusTooShort { len: usize, order: usize },
    #[error("frame is {found_h}x{found_w}, world expects {expected_h}x{expected_w}")]
    FrameShape {
        expected_h: usize,
        expected_w: usize,
        found_h: usize,
        found_w: usize,
    },
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
}
