//! Multivariate log-GARCH with dynamic conditional correlations.
//!
//! Everything numeric is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix the scalar to `f64`.

pub mod corrfilter;
pub mod error;
pub mod inference;
pub mod likelihood;
pub mod linalg;
pub mod params;
pub mod riskcast;
pub mod scalar;
pub mod selection;
pub mod simulate;
pub mod stationarity;
pub mod volfilter;

pub use error::{Error, Result};

/// Crate version, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
pub use likelihood::{fit, fit_general, fit_lowrank, Estimator, FitOptions};
pub use params::ModelOrder;
pub use scalar::Scalar;
pub use simulate::{Dgp, Innovation, SimulateOptions};

pub type GeneralParams = params::GeneralParams<f64>;
pub type LowRankParams = params::LowRankParams<f64>;
pub type FitReport = likelihood::FitReport<f64>;
pub type CovReport = inference::CovReport<f64>;
pub type Selection = selection::Selection<f64>;
pub type Simulation = simulate::Simulation<f64>;
pub type Panel = nalgebra::DMatrix<f64>;
