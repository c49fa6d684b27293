use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::panel::Group;

pub type Result<T> = std::result::Result<T, Error>;

/// Pipeline stage an error was raised in. Serialized into the CLI error JSON.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Validation,
    Transform,
    Instruments,
    Moments,
    InitialEstimator,
    WeightMatrix,
    TwoStep,
    Inference,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Validation => "validation",
            Stage::Transform => "transform",
            Stage::Instruments => "instruments",
            Stage::Moments => "moments",
            Stage::InitialEstimator => "initial_estimator",
            Stage::WeightMatrix => "weight_matrix",
            Stage::TwoStep => "two_step",
            Stage::Inference => "inference",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("unknown unit id {0}")]
    UnknownUnit(usize),

    #[error("horizon T = {0} is too short; at least T = 2 is required")]
    HorizonTooShort(usize),

    #[error("dataset failed validation: {0}")]
    Validation(String),

    #[error(
        "instrument Gram matrix is singular at period {period} (condition estimate {condition:.3e})"
    )]
    SingularGram { period: usize, condition: f64 },

    #[error("moment matrix B is rank deficient; deficient columns {columns:?}")]
    RankDeficient { columns: Vec<usize> },

    #[error(
        "weight matrix is ill-conditioned (condition estimate {condition:.3e}); \
         use more time periods or fewer instruments"
    )]
    SingularWeight { condition: f64 },

    #[error("group {group} has {n_units} units but {d_w} regressors; the moments cannot identify its coefficients")]
    DegenerateGroup { group: Group, n_units: usize, d_w: usize },

    #[error("zero or non-finite variance for {0}")]
    ZeroVariance(String),

    #[error("probability {0} is outside (0, 1)")]
    InvalidProbability(f64),

    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("{stage} failed{}: {source}", group.map(|g| format!(" for group {g}")).unwrap_or_default())]
    Stage {
        stage: Stage,
        group: Option<Group>,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Wraps `self` with a stage label unless it already carries one.
    pub fn at(self, stage: Stage, group: Option<Group>) -> Error {
        match self {
            e @ Error::Stage { .. } => e,
            e => Error::Stage {
                stage,
                group,
                source: Box::new(e),
            },
        }
    }

    pub fn stage(&self) -> Option<Stage> {
        match self {
            Error::Stage { stage, .. } => Some(*stage),
            _ => None,
        }
    }

    pub fn group(&self) -> Option<Group> {
        match self {
            Error::Stage { group, .. } => *group,
            _ => None,
        }
    }

    /// Innermost error, with stage wrappers peeled off.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            e => e,
        }
    }
}

pub(crate) trait StageExt<T> {
    fn at(self, stage: Stage, group: Option<Group>) -> Result<T>;
}

impl<T> StageExt<T> for Result<T> {
    fn at(self, stage: Stage, group: Option<Group>) -> Result<T> {
        self.map_err(|e| e.at(stage, group))
    }
}
