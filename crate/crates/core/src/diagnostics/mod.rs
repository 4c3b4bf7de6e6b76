//! Bernstein-condition probes, the ERM versus wERM separation experiment and
//! excess-risk rate fits.

pub mod bernstein;
pub mod enumeration;
pub mod lowerbound;
pub mod rates;

pub use bernstein::{
    bernstein_probe, bernstein_probe_exact, bernstein_probe_monte_carlo, bernstein_table, BernsteinCheckSpec,
    BernsteinReport, BernsteinRow, ProbeMethod,
};
pub use lowerbound::{lowerbound_experiment, sign_test_p, LowerboundResult, LowerboundTrial};
pub use rates::{rate_experiment, Estimator, RateCell, RateFit, RateResult};
