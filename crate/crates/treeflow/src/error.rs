use thiserror::Error;

/// Unified error type for the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("infeasible energy spec: {0}")]
    InfeasibleSpec(String),
    #[error("fixed-point solve did not converge: {0}")]
    NoConvergence(String),
    #[error("enumeration budget exceeded: {0}")]
    BudgetExceeded(String),
    #[error("invalid partition cuts: {0}")]
    InvalidCuts(String),
    #[error("invalid monotone graph: {0}")]
    InvalidGraph(String),
    #[error("graph domains do not match for composition: z1(first)={left}, z0(second)={right}")]
    DomainMismatch { left: f64, right: f64 },
    #[error("time span out of range: {0}")]
    OutOfRange(String),
    #[error("query point outside the flow domain: {0}")]
    OutOfDomain(String),
    #[error("profile hit zero during integration at step {step}")]
    DegenerateRun { step: usize },
    #[error("empty sample")]
    EmptySample,
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
