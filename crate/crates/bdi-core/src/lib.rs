//! Analytics and exact simulation of time-varying birth-death processes
//! with immigration.
//!
//! The library is organized around [`rate_model::IntegralTables`], a dense
//! precomputation of the cumulative rate integrals that the closed forms in
//! [`pgf`] and [`analytic`] consume. [`simulator`] draws exact sample paths
//! of the same process by thinning, and [`validation`] ties the two sides
//! together with goodness-of-fit and moment checks.

pub mod analytic;
pub mod error;
pub mod pgf;
mod quad;
pub mod rate_model;
pub mod simulator;
pub mod validation;

pub use error::{Error, Result};
pub use pgf::PmfVector;
pub use rate_model::{IntegralTables, ModelParams, NuMode, RateSchedule, TablePoint};
pub use simulator::{EnsembleSummary, SimConfig, Trajectory};
