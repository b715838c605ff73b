use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("integration failed at t = {t_last}: {reason}")]
    Integration { t_last: f64, reason: String },

    #[error("power iteration did not converge after {iterations} iterations (best estimate {best})")]
    NoConvergence { iterations: usize, best: f64 },

    #[error("recurrent matrix has zero spectral radius after {attempts} draws")]
    DegenerateReservoir { attempts: usize },

    #[error("ridge system is not positive definite; use a ridge parameter > 0")]
    SingularRidge,

    #[error("model has no trained readout")]
    Untrained,

    #[error("autonomous prediction diverged after {steps} steps (|y| > {bound})")]
    Diverged { steps: usize, bound: f64 },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("sample entropy undefined: {0}")]
    UndefinedEntropy(&'static str),

    #[error("degenerate series: {0}")]
    Degenerate(&'static str),

    #[error("{path}: line {line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("unsupported model format version {found} (expected {expected})")]
    FormatVersion { found: u32, expected: u32 },

    #[error("malformed document: {0}")]
    Format(String),

    #[error("configuration: {0}")]
    Config(String),

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn at_stage(self, stage: &'static str) -> Error {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// Process exit code used by the command-line tool.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Argument(_) | Error::FormatVersion { .. } => 2,
            Error::Stage { source, .. } => source.exit_code(),
            Error::Io(_) | Error::Json(_) | Error::Parse { .. } | Error::Format(_) => 2,
            _ => 3,
        }
    }
}
