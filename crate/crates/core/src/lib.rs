//! Echo state networks for forecasting chaotic flows from partial
//! observations, with the trajectory and attractor metrics used to judge
//! them.
//!
//! Modules:
//! - [`systems`]: Lorenz 63 and Chua vector fields, adaptive integration,
//!   noisy and perturbed trajectories.
//! - [`reservoir`]: network construction, ridge readout, closed-loop
//!   prediction.
//! - [`metrics`]: prediction horizon, Lyapunov exponent, 0-1 test, sample
//!   entropy, kernel densities.
//! - [`data`]: CSV ingestion, splitting, model files.
//! - [`harness`]: experiment configuration, ensembles and sweeps.

pub mod data;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod reservoir;
pub mod series;
pub mod systems;

pub use error::{Error, Result};
pub use series::TimeSeries;
