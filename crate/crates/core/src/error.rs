use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    /// Trace drifted beyond tolerance during integration.
    #[error("integration accuracy lost (trace deviation {deviation:.3e} with step {step:.3e} s); try a smaller step")]
    IntegrationAccuracy { deviation: f64, step: f64 },

    /// Population reached the top of the Fock truncation.
    #[error("fock truncation overflow: top-two level population {population:.3e} at fock_dim={fock_dim}")]
    FockOverflow { population: f64, fock_dim: usize },

    #[error("target excitation {target} unreachable (maximum {max_reachable:.4})")]
    UnreachableTarget { target: f64, max_reachable: f64 },

    #[error("scaling undefined: {0}")]
    ScalingUndefined(String),

    #[error("underdetermined fit: {points} points for {levels} levels")]
    Underdetermined { points: usize, levels: usize },

    #[error("fit failed: {0}")]
    FitFailure(String),
}
