use std::io;

/// Errors raised anywhere in the open-set pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("format error: {0}")]
    Format(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid data: {0}")]
    Data(String),

    #[error("i/o error: {0}")]
    Io(#[from] io::Error),

    #[error("arity error: {0}")]
    Arity(String),

    #[error("degenerate tail: all {0} tail values are identical")]
    DegenerateTail(usize),

    #[error("weibull shape solver did not converge after {iterations} iterations (last step {last_step:e})")]
    Solver { iterations: usize, last_step: f64 },

    #[error("no samples for {0}")]
    EmptyClass(String),

    #[error("zero vector is not allowed under the {0} metric")]
    ZeroVector(&'static str),

    #[error("no class model for class {0}")]
    ModelCoverage(usize),

    #[error("calibration failed: {0}")]
    Calibration(String),

    #[error("empty dataset: {0}")]
    EmptyDataset(String),

    #[error("invalid configuration: {0}")]
    Config(String),
}

impl Error {
    /// Process exit code for this error: 2 for data problems, 3 for
    /// numeric or solver failures, 1 for configuration misuse.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 1,
            Error::Format(_)
            | Error::Dimension(_)
            | Error::Data(_)
            | Error::Io(_)
            | Error::Arity(_)
            | Error::EmptyClass(_)
            | Error::ModelCoverage(_)
            | Error::EmptyDataset(_) => 2,
            Error::DegenerateTail(_)
            | Error::Solver { .. }
            | Error::ZeroVector(_)
            | Error::Calibration(_) => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
