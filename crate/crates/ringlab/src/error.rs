use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("inadmissible parameters: {0}")]
    Params(String),
    #[error("invalid input: {0}")]
    Input(String),
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("singular matrix: pivot {pivot:e} at row {row} (pivot ratio {ratio:e})")]
    Singular { row: usize, pivot: f64, ratio: f64 },
    #[error("inconsistent right-hand side: solvability defect {defect:e} exceeds {bound:e}")]
    Inconsistent { defect: f64, bound: f64 },
    #[error("no convergence: {0}")]
    NoConvergence(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("format error: {0}")]
    Format(String),
}

impl Error {
    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Params(_) | Error::Input(_) | Error::Format(_) => 2,
            Error::Invariant(_) => 1,
            _ => 3,
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Format(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
