use thiserror::Error;

/// Broad class of a failure, used by drivers to pick an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Data,
    Estimation,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("unknown unit {0}")]
    UnknownUnit(u64),

    #[error("duplicate unit id {0}")]
    DuplicateUnit(u64),

    #[error("self-loop on unit {0} in input")]
    SelfLoop(u64),

    #[error("strata must form a contiguous range 1..K: {0}")]
    NonContiguousStrata(String),

    #[error("invalid data: {0}")]
    Data(String),

    #[error("infeasible degree targets: {0}")]
    InfeasibleDegree(String),

    #[error("role assignment does not match the sample: {0}")]
    RoleMismatch(String),

    #[error("division by zero in stratum {stratum}: no links observed within the initial sample (stabilize the estimator)")]
    DivisionByZero { stratum: usize },

    #[error("stratum {stratum} has {size} initial units, need at least {required}")]
    StratumTooSmall {
        stratum: usize,
        size: usize,
        required: usize,
    },

    #[error("degenerate estimate: {0}")]
    Degenerate(String),

    #[error("inconsistent reordering: {0}")]
    Inconsistent(String),

    #[error("enumeration would visit {count} reorderings, above the cap of {cap}")]
    EnumerationCap { count: u128, cap: u128 },

    #[error("within-chain variance is zero")]
    ZeroWithinVariance,

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Config(_) => ErrorClass::Config,
            Error::UnknownUnit(_)
            | Error::DuplicateUnit(_)
            | Error::SelfLoop(_)
            | Error::NonContiguousStrata(_)
            | Error::Data(_)
            | Error::InfeasibleDegree(_)
            | Error::RoleMismatch(_)
            | Error::Io(_)
            | Error::Csv(_)
            | Error::Json(_) => ErrorClass::Data,
            Error::DivisionByZero { .. }
            | Error::StratumTooSmall { .. }
            | Error::Degenerate(_)
            | Error::Inconsistent(_)
            | Error::EnumerationCap { .. }
            | Error::ZeroWithinVariance => ErrorClass::Estimation,
        }
    }

    /// Short machine-readable tag.
    pub fn tag(&self) -> &'static str {
        match self {
            Error::Config(_) => "config",
            Error::UnknownUnit(_) => "unknown_unit",
            Error::DuplicateUnit(_) => "duplicate_unit",
            Error::SelfLoop(_) => "self_loop",
            Error::NonContiguousStrata(_) => "non_contiguous_strata",
            Error::Data(_) => "data",
            Error::InfeasibleDegree(_) => "infeasible_degree",
            Error::RoleMismatch(_) => "role_mismatch",
            Error::DivisionByZero { .. } => "division_by_zero",
            Error::StratumTooSmall { .. } => "stratum_too_small",
            Error::Degenerate(_) => "degenerate",
            Error::Inconsistent(_) => "inconsistent",
            Error::EnumerationCap { .. } => "enumeration_cap",
            Error::ZeroWithinVariance => "zero_within_variance",
            Error::Io(_) => "io",
            Error::Csv(_) => "csv",
            Error::Json(_) => "json",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
