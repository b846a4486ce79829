use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Every failure the library can report. Variants are grouped by the stage
/// that raises them so that the runner can map them to exit codes.
#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("coverage error: missing (age, year) cells {missing:?}")]
    Coverage { missing: Vec<(u32, i32)> },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("range error: {0}")]
    Range(String),

    #[error("insufficient data: need at least {needed} observations, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("sign error: {0}")]
    Sign(String),

    #[error("input error: {0}")]
    Input(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("conditioning error: {0}")]
    Conditioning(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("comparison error: {0}")]
    Comparison(String),

    #[error("training aborted at epoch {epoch}: {msg}")]
    Aborted { epoch: usize, msg: String },

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("i/o error on {path:?}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Wraps the error with the name of the pipeline stage that produced it.
    pub fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// The innermost error, looking through stage wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            other => other,
        }
    }

    pub fn is_numerical(&self) -> bool {
        matches!(
            self.root(),
            Error::Numerical(_) | Error::Aborted { .. } | Error::Conditioning(_)
        )
    }

    pub fn is_config(&self) -> bool {
        matches!(self.root(), Error::Config(_))
    }
}
