//! Energy-dissipation-rate guided adaptive sampling (EDRAS) for physics-informed
//! neural network solvers of Allen-Cahn systems, with residual-based baselines
//! (RAR, RAD, RAR-D), finite-difference reference solvers, and diagnostics.

pub mod config;
pub mod diagnostics;
pub mod fdm;
pub mod geometry;
pub mod model;
pub mod network;
pub mod sampling;
pub mod seed;
pub mod training;

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("non-finite point")]
    NonFinitePoint,
    #[error("degenerate domain")]
    DegenerateDomain,
    #[error("bracket invalid")]
    BracketInvalid,
    #[error("no closed-form parameterization")]
    NoParameterization,
    #[error("incomplete sample")]
    IncompleteSample,
    #[error("wrong regime")]
    WrongRegime,
    #[error("time out of range")]
    TimeOutOfRange,
    #[error("instability, reduce dt")]
    Instability,
    #[error("empty set: {0}")]
    EmptySet(&'static str),
    #[error("non-finite loss at segment {segment}, epoch {epoch}")]
    NonFiniteLoss { segment: usize, epoch: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("serialization error: {0}")]
    Serde(String),
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serde(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
