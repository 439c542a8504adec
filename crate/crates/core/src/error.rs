use thiserror::Error;

/// Errors raised by the numerical routines and the experiment driver.
#[derive(Debug, Error)]
pub enum Error {
    #[error("argument out of domain: {0}")]
    Domain(String),

    #[error("shape function is singular: {0}")]
    Singularity(String),

    #[error("invalid pmf: {0}")]
    InvalidPmf(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("family produced an invalid law at generation {generation}: {reason}")]
    Construction { generation: usize, reason: String },

    #[error("environment has no immigration family")]
    NoImmigration,

    #[error("truncation loss {lost_mass:.3e} exceeds {limit:.3e} at generation {generation}; increase the cap")]
    CapExceeded {
        generation: usize,
        lost_mass: f64,
        limit: f64,
    },

    #[error("survival probability {0:.3e} too small to condition on")]
    Extinct(f64),

    #[error(
        "recovered q_{index} = {value:.3e} is negative; lambda is not realizable by a finite q"
    )]
    Negativity { index: usize, value: f64 },

    #[error("exact integer range exceeded: {0}")]
    Overflow(String),

    #[error("conditional law requested but no replicate survived")]
    EmptyConditional,

    #[error("population {population} exceeded cap {cap} in replicate {replicate} at generation {generation}")]
    PopulationCap {
        replicate: u64,
        generation: usize,
        population: u64,
        cap: u64,
    },

    #[error("series did not converge: {0}")]
    NoConvergence(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
