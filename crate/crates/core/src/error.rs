use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("trajectory {patient}: {reason}")]
    InvalidTrajectory { patient: String, reason: String },

    #[error("action {action} out of range for {action_count} actions")]
    ActionOutOfRange { action: usize, action_count: usize },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("dataset has no transitions")]
    EmptyDataset,

    #[error("state component {index} out of range for state dimension {dim}")]
    ComponentOutOfRange { index: usize, dim: usize },

    #[error("tabular basis needs a small discrete state space ({distinct} distinct states, limit {limit})")]
    NotDiscrete { distinct: usize, limit: usize },

    #[error("non-finite {0}")]
    NonFinite(&'static str),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("{0} is numerically singular; reduce the basis or add data")]
    Singular(&'static str),

    #[error("objective was not finite at any probe")]
    ObjectiveNotFinite,

    #[error("need at least two distinct observed actions")]
    SingleAction,

    #[error("transition {index} has no logged behavior probability")]
    MissingLoggedProbability { index: usize },
}

