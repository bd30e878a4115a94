use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A precondition on the arguments does not hold.
    #[error("domain error: {0}")]
    Domain(String),

    /// Brute-force enumeration of `d^n` paths would exceed the configured cap.
    #[error("enumeration cap exceeded: {d}^{n} paths exceeds cap {cap}")]
    CapExceeded { d: usize, n: usize, cap: u64 },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("empty grid")]
    EmptyGrid,

    #[error("empty input")]
    EmptyInput,

    /// A concatenation member does not belong to the plan's class.
    #[error("member {index} belongs to a different class than the plan")]
    MixedClass { index: usize },

    #[error("point {point:?} lies outside the rate grid hull")]
    Coverage { point: Vec<f64> },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}
