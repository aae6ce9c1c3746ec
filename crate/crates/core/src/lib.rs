//! Multi-species Sherrington–Kirkpatrick model: disorder sampling, the
//! replica-symmetric order parameter, exact and Monte Carlo Gibbs averages,
//! and numerical checks of the TAP equations.

pub mod error;
pub mod linalg;
pub mod mcmc;
pub mod model;
pub mod oracle;
pub mod order_params;
pub mod presets;
pub mod quadrature;
pub mod rng;
pub mod stats;
pub mod tap;

pub use error::{Error, Result};
pub use linalg::SymMatrix;
pub use model::{hamiltonian, local_field, Instance, ModelSpec, SpeciesLayout, SpinConfig};
pub use order_params::{critical_temperatures, solve_q, OrderParams, SolveOptions};
pub use presets::Preset;
pub use quadrature::QuadratureRule;
