//! Nearly critical branching processes in varying environment.
//!
//! * [`pmf`] and [`pgf`]: truncated laws, generating functions, the shape
//!   function and backward compositions.
//! * [`environment`]: offspring and immigration families, condition checks.
//! * [`engine`]: exact forward evolution of `X_n` and `Y_n`.
//! * [`limits`]: the geometric Yaglom limit and the compound-Poisson
//!   immigration limit, plus Stirling-number conversions.
//! * [`oracles`]: exact-rational identity checks and numerical diagnostics.
//! * [`montecarlo`]: seeded, thread-count-independent simulation.
//! * [`experiment`]: config-driven experiments with CSV/JSON reports.

pub mod engine;
pub mod environment;
pub mod error;
pub mod experiment;
pub mod limits;
pub mod montecarlo;
pub mod oracles;
pub mod pgf;
pub mod pmf;

pub use engine::{
    conditional_law, conditional_mean, evolve_x, evolve_y, tv_distance, Evolution, EvolutionResult,
    Truncation, TvDistance,
};
pub use environment::{EnvironmentSpec, ImmigrationFamily, OffspringFamily, QuadraticFamily};
pub use error::{Error, Result};
pub use pgf::{shape_function, OffspringLaw};
pub use pmf::Pmf;
