use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("validation error: {0}")]
    Validation(String),

    #[error("regions `{first}` and `{second}` overlap with conflicting materials")]
    RegionConflict { first: String, second: String },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("planning error: {0}")]
    Planning(String),

    #[error("geometry error: {0}")]
    Geometry(String),

    #[error("synchronization error: plane {plane} is off-phase by {residual:.3e} s")]
    Synchronization { plane: usize, residual: f64 },

    #[error("parameter error: {0}")]
    Parameter(String),

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("ill-conditioned design (condition number {condition_number:.3e})")]
    Conditioning { condition_number: f64 },

    #[error("quality error: {0}")]
    Quality(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
        written: Vec<PathBuf>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Name of the failing pipeline stage, when the error came out of a run.
    pub fn stage(&self) -> Option<&str> {
        match self {
            Error::Stage { stage, .. } => Some(stage),
            _ => None,
        }
    }

    /// Innermost error with stage wrappers removed.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            other => other,
        }
    }
}
