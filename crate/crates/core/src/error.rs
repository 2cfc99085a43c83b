use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    /// A parameter vector lies outside its valid domain (e.g. λ ∉ Ω).
    #[error("domain error: {0}")]
    Domain(String),

    /// Inputs violate an operation's contract (shape, mode or range mismatch).
    #[error("contract violation: {0}")]
    Contract(String),

    /// An optimizer could not find a feasible step after exhausting its halving budget.
    #[error("step failure after {halvings} halvings: {reason}")]
    StepFailure { halvings: u32, reason: String },

    /// A model evaluator returned a non-finite value.
    #[error("non-finite model output at sample {sample}, example {example}: {what}")]
    Evaluator {
        sample: usize,
        example: usize,
        what: String,
    },

    /// A finite-difference probe hit a non-finite function value.
    #[error("non-finite function value while differencing coordinate {coordinate}")]
    NonFinite { coordinate: usize },

    /// Malformed input file.
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    /// Invalid run configuration.
    #[error("config error: {0}")]
    Config(String),

    /// A run aborted part-way through.
    #[error("run aborted at epoch {epoch}, step {step}: {source}")]
    Run {
        epoch: usize,
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    /// Wraps an I/O error with the path that caused it.
    pub(crate) fn io_at(path: &std::path::Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
        move |e| {
            Error::Io(std::io::Error::new(
                e.kind(),
                format!("{}: {e}", path.display()),
            ))
        }
    }

    /// Process exit code category used by the command-line runner.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Parse { .. } => 2,
            Error::Io(_) | Error::Csv(_) => 3,
            Error::StepFailure { .. } => 4,
            Error::Run { source, .. } => source.exit_code(),
            Error::Domain(_) | Error::Evaluator { .. } | Error::NonFinite { .. } => 5,
            Error::Contract(_) => 6,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
