//! Approximate Bayesian calibration of a spatially explicit central-place
//! foraging model for bumble bees.

pub mod abc;
pub mod cpf;
pub mod error;
pub mod eval;
pub mod landscape;
pub mod mlkit;
pub mod model;
pub mod obsmodel;
pub mod rng;
pub mod stats;
pub mod study;
pub mod sumstats;

pub use error::{Error, Result};
