use thiserror::Error;

use crate::model::Quadrature;

/// Errors produced by the simulation, filtering, and reconstruction layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("inconsistent state: {0}")]
    InvalidState(String),

    #[error("quadrature mismatch: expected {expected:?}, found {found:?}")]
    QuadratureMismatch {
        expected: Quadrature,
        found: Quadrature,
    },

    #[error("time off the record grid: {0}")]
    OffGrid(String),

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    #[error("empty tomography partition: {0}")]
    EmptyBin(String),

    #[error("reconstruction starved: {0}")]
    Starved(String),

    #[error("resource cap exceeded: requested {requested} steps, cap {cap}")]
    ResourceCap { requested: u64, cap: u64 },

    #[error("numerical integration did not stabilize: {0}")]
    IntegrationDiverged(String),
}

pub type Result<T> = std::result::Result<T, Error>;
