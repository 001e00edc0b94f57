use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("{0} is not a valid odd modulus below 2^60")]
    InvalidModulus(u64),
    #[error("{value} has no inverse modulo {modulus}")]
    NotInvertible { value: u64, modulus: u64 },
    #[error("invalid parameters: {0}")]
    InvalidParameters(String),
    #[error("not enough primes: {0}")]
    PrimeExhaustion(String),
    #[error("parameters fail the security check: {0}")]
    Insecure(String),
    #[error("length mismatch: expected {expected}, got {got}")]
    SizeMismatch { expected: usize, got: usize },
    #[error("operand is in the wrong representation: {0}")]
    FormatMismatch(&'static str),
    #[error("operands have different limb sets")]
    LimbMismatch,
    #[error("level error: {0}")]
    Level(String),
    #[error("scales {0} and {1} cannot be reconciled")]
    ScaleMismatch(f64, f64),
    #[error("even Galois exponent {0}")]
    InvalidGaloisExponent(usize),
    #[error("no key for {0}")]
    MissingKey(String),
    #[error("value too large for the remaining modulus: {0}")]
    Overflow(String),
    #[error("slot count {0} is not a power of two in [1, N/2]")]
    InvalidSlots(usize),
    #[error("malformed data: {0}")]
    Malformed(String),
    #[error("context mismatch: {0}")]
    ContextMismatch(String),
}
