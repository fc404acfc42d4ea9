use alloc::string::String;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid spec: {0}")]
    InvalidSpec(String),
    #[error("non-metric input: {0}")]
    NonMetric(String),
    #[error("invalid exponent: {0}")]
    InvalidExponent(String),
    #[error("mixing weights sum to {0}, expected 1")]
    WeightsNotNormalized(f64),
    #[error("jump graph is not connected")]
    DisconnectedKernel,
    #[error("singular linear system: {0}")]
    SingularSystem(String),
    #[error("size {n} exceeds the configured cap {cap}")]
    SizeExceeded { n: usize, cap: usize },
    #[error("time stepping did not converge")]
    NonconvergentStepping,
    #[error("only {0} scales available, need at least 3")]
    InsufficientScales(usize),
    #[error("degenerate input: {0}")]
    Degenerate(String),
}

pub type Result<T> = core::result::Result<T, Error>;
