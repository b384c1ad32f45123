use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("network is disconnected: bus {0} is unreachable from the slack bus")]
    Disconnected(u32),
    #[error("network is not radial: {0}")]
    NotRadial(String),
    #[error("branch {0} has zero impedance")]
    ZeroImpedance(String),
    #[error("unknown bus {0}")]
    UnknownBus(u32),
    #[error("dispatch does not match portfolio: {0}")]
    DispatchMismatch(String),
    #[error("learning set is empty")]
    EmptyLearningSet,
    #[error("test set is empty")]
    EmptyTestSet,
    #[error("cost list is empty")]
    EmptyCosts,
    #[error("sample is missing attribute {0}")]
    MissingAttribute(String),
    #[error("no controllable flexibility available for the requested balancing")]
    NoFlexibility,
    #[error("insufficient flexibility: requirement {required:.1} kW exceeds available {available:.1} kW (shortfall {shortfall:.1} kW)")]
    Shortfall {
        required: f64,
        available: f64,
        shortfall: f64,
    },
    #[error("{skipped} of {attempted} samples were infeasible; scenario is likely misconfigured")]
    SkipBudget { attempted: usize, skipped: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("scenario validation failed: {0}")]
    Validation(String),
    #[error("scenario parse error: {0}")]
    Parse(String),
    #[error("malformed learning-set file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
