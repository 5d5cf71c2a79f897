use thiserror::Error;

use crate::dyadic::DyadicInterval;

#[derive(Debug, Error)]
pub enum LabError {
    #[error("empty range: max level {max_level} is above the start level {level}")]
    EmptyRange { level: u32, max_level: u32 },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("singular matrix (det = {det:e}){}", .at.map(|i| format!(" at interval {i}")).unwrap_or_default())]
    Singular { det: f64, at: Option<DyadicInterval> },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("range error: {0}")]
    Range(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("resource limit: {0}")]
    Resource(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl LabError {
    /// Attaches an interval to a singularity raised by a context-free kernel.
    pub fn at(self, interval: DyadicInterval) -> Self {
        match self {
            LabError::Singular { det, .. } => LabError::Singular { det, at: Some(interval) },
            other => other,
        }
    }
}

pub type Result<T, E = LabError> = std::result::Result<T, E>;
