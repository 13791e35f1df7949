use std::path::PathBuf;

use thiserror::Error;

/// Errors produced across the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid data: {0}")]
    Data(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("non-finite loss at depth {depth}, epoch {epoch} (data {data_loss}, physics {physics_loss})")]
    NonFiniteLoss {
        depth: usize,
        epoch: usize,
        data_loss: f64,
        physics_loss: f64,
    },

    #[error("strain energy exponent {0} exceeds the overflow guard")]
    Overflow(f64),

    #[error("newton divergence at load factor {failed_at} (last converged {last_converged}): {reason}")]
    NewtonDivergence {
        last_converged: f64,
        failed_at: f64,
        reason: String,
    },

    #[error("study stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// Process exit code for the command-line tool.
    ///
    /// 2 = configuration, 3 = data, 4 = numerical, 5 = i/o.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Shape(_) | Error::Data(_) | Error::Csv(_) => 3,
            Error::Json(_) => 2,
            Error::Numerical(_)
            | Error::NonFiniteLoss { .. }
            | Error::Overflow(_)
            | Error::NewtonDivergence { .. } => 4,
            Error::Io { .. } => 5,
            Error::Stage { source, .. } => source.exit_code(),
        }
    }
}
