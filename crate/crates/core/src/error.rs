use std::fmt;

use thiserror::Error;

use crate::estimators::EstimatorKind;
use crate::seqmodel::SamplingMode;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// A single problem found while validating a Markov model description.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    EmptyModel,
    Shape { expected: usize, found: usize },
    RowLength { row: usize, expected: usize, found: usize },
    RowSum { row: usize, sum: f64 },
    OutOfRange { row: usize, col: usize, value: f64 },
    StateIndex { field: &'static str, index: usize, n_states: usize },
    Horizon(String),
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::EmptyModel => write!(f, "model has no states"),
            Violation::Shape { expected, found } => {
                write!(f, "transition has {found} rows, expected {expected}")
            }
            Violation::RowLength { row, expected, found } => {
                write!(f, "row {row}: has {found} entries, expected {expected}")
            }
            Violation::RowSum { row, sum } => write!(f, "row {row}: sums to {sum}, expected 1"),
            Violation::OutOfRange { row, col, value } => {
                write!(f, "row {row}: entry {col} = {value} is outside [0, 1]")
            }
            Violation::StateIndex { field, index, n_states } => {
                write!(f, "{field} = {index} is not a state index (n_states = {n_states})")
            }
            Violation::Horizon(msg) => write!(f, "horizon: {msg}"),
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("token {token} is outside the vocabulary of size {size}")]
    InvalidToken { token: usize, size: usize },

    #[error("outcome hazard {hazard} leaves no mass for the outcome-excluded distribution")]
    DegenerateHazard { hazard: f64 },

    #[error("invalid model: {}", join_violations(.0))]
    InvalidModel(Vec<Violation>),

    #[error("{kind:?} needs {expected:?} trajectories, got {found:?}")]
    ModeMismatch {
        kind: EstimatorKind,
        expected: SamplingMode,
        found: SamplingMode,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("enumeration exceeds {limit} leaves")]
    InstanceTooLarge { limit: usize },

    #[error(
        "target probability {target} is not achievable; achievable interval is [{low}, {high}]"
    )]
    CalibrationFailure { target: f64, low: f64, high: f64 },

    #[error("metric undefined: {0}")]
    UndefinedMetric(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

fn join_violations(v: &[Violation]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("; ")
}

pub(crate) fn invalid_arg(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
