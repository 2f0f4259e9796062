//! Crate-wide error type with CLI exit-code classes.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parent map is not a tree rooted at 0: {0}")]
    Cycle(String),

    #[error("capacity pattern violated at node {node}: children capacities sum to {children_total}, link capacity is {capacity}")]
    Capacity {
        node: usize,
        children_total: String,
        capacity: String,
    },

    #[error("invalid value: {0}")]
    Value(String),

    #[error("demand mismatch for origin {origin}: inflow integrates to {got}, demand is {want}")]
    Demand {
        origin: usize,
        got: String,
        want: String,
    },

    #[error("inflow outside horizon: {0}")]
    Domain(String),

    #[error("bottleneck arrival times not strictly increasing: {0}")]
    NonMonotone(String),

    #[error("transform input infeasible: {0}")]
    InfeasibleInput(String),

    #[error("horizon too short for transform: {0}")]
    Horizon(String),

    #[error("sampling failed: {0}")]
    Sampling(String),

    #[error("demand cannot be routed: {0}")]
    Infeasible(String),

    #[error("instance too large for exhaustive enumeration: {0}")]
    TooLarge(String),

    #[error("unknown node {0}")]
    Index(usize),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// CLI exit code class: 2 parse, 3 validation, 4 infeasible, 5 check failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Parse(_) | Error::Io(_) => 2,
            Error::Cycle(_)
            | Error::Capacity { .. }
            | Error::Value(_)
            | Error::Demand { .. }
            | Error::Domain(_)
            | Error::Index(_)
            | Error::NonMonotone(_)
            | Error::InfeasibleInput(_) => 3,
            Error::Infeasible(_) | Error::Horizon(_) | Error::TooLarge(_) | Error::Sampling(_) => 4,
        }
    }

    /// Short machine-readable class name for structured error output.
    pub fn class(&self) -> &'static str {
        match self {
            Error::Cycle(_) => "cycle",
            Error::Capacity { .. } => "capacity",
            Error::Value(_) => "value",
            Error::Demand { .. } => "demand",
            Error::Domain(_) => "domain",
            Error::NonMonotone(_) => "non_monotone",
            Error::InfeasibleInput(_) => "infeasible_input",
            Error::Horizon(_) => "horizon",
            Error::Sampling(_) => "sampling",
            Error::Infeasible(_) => "infeasible",
            Error::TooLarge(_) => "too_large",
            Error::Index(_) => "index",
            Error::Parse(_) => "parse",
            Error::Io(_) => "io",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
