use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },

    #[error("panel has {n} rows, at least {min} required")]
    TooFewRows { n: usize, min: usize },

    #[error("index out of range: {0}")]
    IndexOutOfRange(String),

    #[error("expected a {expected} profile")]
    WrongProfileKind { expected: &'static str },

    #[error("degenerate panel: Frobenius norm estimate {0} is not positive")]
    FlatPanel(f64),

    #[error("zero variance in coordinate {0}")]
    DiagonalDegenerate(usize),

    #[error("matrix is not positive semi-definite")]
    NotPsd,

    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),

    #[error("degenerate signal: {0}")]
    DegenerateSignal(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures of the numerics on otherwise well-formed input.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::FlatPanel(_)
                | Error::DiagonalDegenerate(_)
                | Error::NotPsd
                | Error::NotSymmetric(_)
                | Error::DegenerateSignal(_)
        )
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
