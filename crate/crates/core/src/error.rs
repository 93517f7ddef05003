use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("sample count {samples} is smaller than decision dimension {dimension}")]
    TooFewSamples { samples: u64, dimension: u64 },

    #[error("probability {name} = {value} is outside [{lo}, {hi}]")]
    ProbabilityOutOfRange {
        name: &'static str,
        value: f64,
        lo: f64,
        hi: f64,
    },

    #[error("empty distribution")]
    EmptyDistribution,

    #[error("input (v = {v}, omega = {omega}) lies outside the admissible input box")]
    InputOutOfBounds { v: f64, omega: f64 },

    #[error("waypoint ({x}, {y}) lies outside the model workspace")]
    WaypointOutOfBounds { x: f64, y: f64 },

    #[error("waypoint not reached within {budget} plant steps (final distance {distance:.4} m)")]
    WaypointTimeout { budget: usize, distance: f64 },

    #[error("disturbance norm {norm} exceeds the set radius {radius}")]
    DisturbanceTooLarge { norm: f64, radius: f64 },

    #[error("scenario sampling gave up after {attempts} rejected draws")]
    RejectionBudget { attempts: usize },

    #[error("scenario has no feasible path from start to any goal")]
    Infeasible,

    #[error("trajectory does not match the scenario: {0}")]
    Mismatch(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("refusing to deploy a controller whose verification failed (s* = {min_safety})")]
    UnverifiedController { min_safety: f64 },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: malformed record: {message}")]
    Format { path: PathBuf, message: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors raised while running simulations, as opposed to bad
    /// input or configuration.
    pub fn is_simulation(&self) -> bool {
        matches!(
            self,
            Error::WaypointTimeout { .. }
                | Error::RejectionBudget { .. }
                | Error::Infeasible
                | Error::DisturbanceTooLarge { .. }
                | Error::InputOutOfBounds { .. }
        )
    }
}
