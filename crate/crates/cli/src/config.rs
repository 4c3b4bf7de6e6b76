//! JSON experiment configuration.
//!
//! ```json
//! {
//!   "command": "sweep",
//!   "dgp": { "kind": "regression" },
//!   "fit": { "steps": 5000 },
//!   "eval": { "n_seeds": 10 },
//!   "output_dir": "out/regression",
//!   "base_seed": 1
//! }
//! ```
//!
//! Unknown keys are rejected at every level. `fit` and `eval` may be omitted.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use wermlab::dgp::DgpSpec;
use wermlab::diagnostics::Estimator;
use wermlab::pipeline::FitConfig;
use wermlab::risk::Selection;
use wermlab::rng::fnv1a64;

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub command: String,
    pub dgp: Option<DgpSpec>,
    #[serde(default)]
    pub fit: FitConfig,
    #[serde(default)]
    pub eval: EvalConfig,
    pub output_dir: Option<PathBuf>,
    pub base_seed: u64,
}

/// Per-command evaluation settings. Each command reads the fields it needs
/// and falls back to the defaults documented on each accessor.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    /// `gen`: rows to draw. `lowerbound`: sample size per trial.
    pub n: Option<usize>,
    /// `sweep` coverage levels.
    pub alphas: Option<Vec<f64>>,
    /// `sweep` and `rates`: number of seeds derived from `base_seed`.
    pub n_seeds: Option<usize>,
    /// `fit` and `sweep` training rows; validation and test default to 15/70 of it.
    pub n_train: Option<usize>,
    pub n_val: Option<usize>,
    pub n_test: Option<usize>,
    /// `sweep`: select on estimated (default) or oracle weights.
    pub selection: Option<Selection>,
    /// `bernstein`: random thresholds on the basis generator.
    pub n_thresholds: Option<usize>,
    /// `bernstein`: Monte Carlo draws per probe.
    pub n_mc: Option<usize>,
    /// `bernstein`: offsets of the probed hypotheses (regression: `f* + s`;
    /// classification: the boundary `x_0 = s`).
    pub shifts: Option<Vec<f64>>,
    /// `rates` sample sizes.
    pub n_grid: Option<Vec<usize>>,
    pub estimators: Option<Vec<Estimator>>,
    /// `lowerbound`.
    pub trials: Option<usize>,
    pub weight_eps: Option<f64>,
}

impl EvalConfig {
    pub fn alphas(&self) -> Vec<f64> {
        self.alphas.clone().unwrap_or_else(|| (1..=10).map(|i| i as f64 / 10.0).collect())
    }

    pub fn selection(&self) -> Selection {
        self.selection.unwrap_or(Selection::Estimated)
    }

    pub fn n_grid(&self) -> Vec<usize> {
        self.n_grid.clone().unwrap_or_else(|| vec![250, 500, 1000, 2000, 4000, 8000, 16000])
    }

    pub fn estimators(&self) -> Vec<Estimator> {
        self.estimators.clone().unwrap_or_else(|| vec![Estimator::Erm, Estimator::Werm])
    }
}

impl ExperimentConfig {
    /// Parse, reporting syntax and schema errors with line and column.
    pub fn parse(text: &str, origin: &Path) -> Result<Self, CliError> {
        serde_json::from_str(text)
            .map_err(|e| CliError::Validation(format!("{}:{}:{}: {e}", origin.display(), e.line(), e.column())))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Validation(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text, path)
    }

    pub fn dgp(&self) -> Result<&DgpSpec, CliError> {
        let dgp =
            self.dgp.as_ref().ok_or_else(|| CliError::Validation(format!("command '{}' needs a dgp", self.command)))?;
        dgp.validate()?;
        Ok(dgp)
    }

    pub fn output_dir(&self) -> Result<&Path, CliError> {
        self.output_dir.as_deref().ok_or_else(|| CliError::Validation("no output_dir in config and no --out".into()))
    }

    /// FNV-1a of the resolved config as JSON. The output directory is left
    /// out so the same run written elsewhere carries the same provenance.
    pub fn digest(&self) -> u64 {
        let located = Self { output_dir: None, ..self.clone() };
        fnv1a64(serde_json::to_string(&located).expect("config serializes").as_bytes())
    }
}
