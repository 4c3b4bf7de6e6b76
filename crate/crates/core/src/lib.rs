//! Weighted empirical risk minimization: data generators, models, the
//! two-step estimator, selective-risk evaluation and theory diagnostics.

pub mod dgp;
pub mod diagnostics;
pub mod error;
pub mod exec;
pub mod models;
pub mod pipeline;
pub mod risk;
pub mod rng;
pub mod table;

pub use error::{Error, Result};
