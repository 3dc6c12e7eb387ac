use nalgebra::DVector;
use thiserror::Error;

use crate::game::ValidationReport;
use crate::orchestrator::RunTrace;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Declared dimensions disagree with the data (block shapes, vector lengths).
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// A game that is structurally sound but fails the symmetry requirements.
    #[error("inadmissible game: {0}")]
    Inadmissible(ValidationReport),

    #[error("agent index {index} out of range for a game with {num_agents} agents")]
    AgentIndex { index: usize, num_agents: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Numerical(#[from] NumericalFailure),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed document: {0}")]
    Format(String),

    /// An outer-loop run that stopped early; carries the rounds completed so far.
    #[error("run aborted in round {}: {}", .0.round, .0.cause)]
    Aborted(Box<AbortedRun>),
}

#[derive(Debug)]
pub struct AbortedRun {
    pub round: usize,
    pub cause: Error,
    pub partial: RunTrace,
}

impl Error {
    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    /// True for failures caused by the numerics rather than the input.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::Numerical(_) => true,
            Error::Aborted(a) => a.cause.is_numerical(),
            _ => false,
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Format(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Format(e.to_string())
    }
}

/// An iterative method that stopped before meeting its tolerance.
#[derive(Debug, Clone, Error)]
#[error("{method} did not converge after {iterations} iterations (residual {residual:.3e})")]
pub struct NumericalFailure {
    pub method: &'static str,
    pub iterations: usize,
    pub residual: f64,
    /// Last iterate, when the method has one.
    pub last_iterate: Option<DVector<f64>>,
}

impl NumericalFailure {
    pub(crate) fn new(method: &'static str, iterations: usize, residual: f64) -> Self {
        NumericalFailure {
            method,
            iterations,
            residual,
            last_iterate: None,
        }
    }

    pub(crate) fn with_iterate(mut self, x: DVector<f64>) -> Self {
        self.last_iterate = Some(x);
        self
    }
}
