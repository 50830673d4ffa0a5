use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("configuration is not stream-admissible: pair {pair} has min(M, N) = {min} < d = {d}")]
    NotAdmissible { pair: usize, min: usize, d: usize },

    #[error("scaling by {factor} overflows the integer range")]
    ScaleOverflow { factor: usize },

    #[error("invalid prime field modulus {0}: must be a prime >= 2^20")]
    BadModulus(u64),

    #[error("index out of range: {0}")]
    IndexOutOfRange(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("operation requires {expected} arithmetic, got {found}")]
    WrongField {
        expected: &'static str,
        found: &'static str,
    },

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("exhaustive enumeration over K = {k} pairs exceeds the limit of {limit}")]
    EnumerationTooLarge { k: usize, limit: usize },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("direct links H_kk were not sampled")]
    MissingDirectLinks,

    #[error("internal defect: {0}")]
    Defect(String),

    #[error("malformed allocation: {0}")]
    MalformedAllocation(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
