//! Mean-field simulation of a superradiant NV-center maser.

pub mod analytics;
pub mod config;
pub mod error;
pub mod fixtures;
pub mod meanfield;
pub mod model;
pub mod newton;
pub mod ode;
pub mod oracle;
pub mod spectrum;
pub mod subensemble;

pub use error::{Error, Result};
pub use meanfield::MeanFieldState;
pub use model::{DerivedRates, SystemParams};
