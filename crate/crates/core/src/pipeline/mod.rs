//! Fitting procedures and the two-step weighted ERM estimator.
//!
//! Regression: fit the mean by squared loss, the variance by the Gaussian
//! likelihood with the mean frozen, then refit the mean with precision
//! weights `1 / sigma2_hat`. Classification: fit `eta_hat`, then refit with
//! margin weights `|eta_hat - 1/2|` under weighted cross-entropy.
//!
//! With `sample_split` on, the training rows are shuffled with a seeded
//! permutation; even positions train the first stage (ERM and weights), odd
//! positions the weighted refit.

mod gd;
mod threshold;
mod weights;

pub use gd::{gd_fit, gd_fit_joint, gd_fit_weighted, GdFit};
pub use threshold::{
    exact_basis_erm, exact_basis_erm_weighted, exact_threshold_erm, threshold_loss, ThresholdFit, ThresholdPoint,
};
pub use weights::{MarginConvention, WeightKind, WeightModel};

use serde::{Deserialize, Serialize};

use crate::dgp::{Dataset, DgpFamily};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::models::{mlp_init, Head, Hypothesis, LossKind, MlpParams, DEFAULT_VAR_CEIL, DEFAULT_VAR_FLOOR};
use crate::rng::{derive_seed, fnv1a64, permutation, stream};

pub const DEFAULT_HIDDEN_REGRESSION: usize = 64;
pub const DEFAULT_HIDDEN_CLASSIFICATION: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Regression,
    Classification,
}

impl Task {
    pub fn default_hidden(self) -> usize {
        match self {
            Task::Regression => DEFAULT_HIDDEN_REGRESSION,
            Task::Classification => DEFAULT_HIDDEN_CLASSIFICATION,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    pub steps: usize,
    pub step_size: f64,
    /// Hidden units; `None` picks the task default (64 regression, 16 classification).
    pub hidden: Option<usize>,
    pub seed: u64,
    pub sample_split: bool,
    pub weight_floor: f64,
    /// `None` means no cap.
    pub weight_cap: Option<f64>,
    /// `squared` or `cross_entropy`.
    pub loss_choice_for_eta: LossKind,
    pub var_floor: f64,
    pub var_ceil: f64,
    /// Fit mean and variance jointly in the first regression stage instead
    /// of freezing the mean.
    pub joint_nll: bool,
    pub execution: Execution,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            steps: 5000,
            step_size: 1e-2,
            hidden: None,
            seed: 0,
            sample_split: true,
            weight_floor: 0.0,
            weight_cap: None,
            loss_choice_for_eta: LossKind::CrossEntropy,
            var_floor: DEFAULT_VAR_FLOOR,
            var_ceil: DEFAULT_VAR_CEIL,
            joint_nll: false,
            execution: Execution::default(),
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidSpec(m));
        if self.steps == 0 {
            return bad("steps must be >= 1".into());
        }
        if !(self.step_size.is_finite() && self.step_size > 0.0) {
            return bad(format!("step_size must be > 0, got {}", self.step_size));
        }
        if self.hidden == Some(0) {
            return bad("hidden must be >= 1".into());
        }
        if !(self.weight_floor.is_finite() && self.weight_floor >= 0.0) {
            return bad(format!("weight_floor must be >= 0, got {}", self.weight_floor));
        }
        if let Some(cap) = self.weight_cap {
            if cap.is_nan() || cap < self.weight_floor {
                return bad(format!("weight_cap {cap} is below weight_floor {}", self.weight_floor));
            }
        }
        if !matches!(self.loss_choice_for_eta, LossKind::Squared | LossKind::CrossEntropy) {
            return bad(format!(
                "loss_choice_for_eta must be squared or cross_entropy, got {:?}",
                self.loss_choice_for_eta
            ));
        }
        if !(self.var_floor > 0.0 && self.var_ceil >= self.var_floor && self.var_ceil.is_finite()) {
            return bad(format!("need 0 < var_floor <= var_ceil < inf, got [{}, {}]", self.var_floor, self.var_ceil));
        }
        Ok(())
    }

    pub fn hidden_for(&self, task: Task) -> usize {
        self.hidden.unwrap_or(task.default_hidden())
    }
}

/// Rows used by each stage, as indices into the training set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitIndices {
    pub weight_stage: Vec<usize>,
    pub werm_stage: Vec<usize>,
}

impl SplitIndices {
    pub fn new(n: usize, sample_split: bool, seed: u64) -> Self {
        if !sample_split {
            return Self { weight_stage: (0..n).collect(), werm_stage: (0..n).collect() };
        }
        let perm = permutation(n, &mut stream(seed));
        let weight_stage = perm.iter().step_by(2).copied().collect();
        let werm_stage = perm.iter().skip(1).step_by(2).copied().collect();
        Self { weight_stage, werm_stage }
    }

    pub fn digest(&self) -> u64 {
        let bytes: Vec<u8> = self
            .weight_stage
            .iter()
            .chain(&[usize::MAX])
            .chain(&self.werm_stage)
            .flat_map(|i| (*i as u64).to_le_bytes())
            .collect();
        fnv1a64(&bytes)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StageLosses {
    pub erm: f64,
    pub weight: f64,
    pub werm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoStepResult {
    pub task: Task,
    pub erm_model: Hypothesis,
    pub weight_model: WeightModel,
    pub werm_model: Hypothesis,
    /// The regression variance network (`None` for classification).
    pub variance_model: Option<MlpParams>,
    pub split_indices: SplitIndices,
    pub fit_config: FitConfig,
    pub final_losses: StageLosses,
}

impl TwoStepResult {
    /// Config echo, split digest and final losses.
    pub fn provenance_json(&self) -> serde_json::Value {
        serde_json::json!({
            "tool": concat!("wermlab ", env!("CARGO_PKG_VERSION")),
            "task": self.task,
            "fit_config": self.fit_config,
            "split_digest": format!("{:016x}", self.split_indices.digest()),
            "weight_stage_rows": self.split_indices.weight_stage.len(),
            "werm_stage_rows": self.split_indices.werm_stage.len(),
            "final_losses": self.final_losses,
        })
    }
}

fn check_task(data: &Dataset, task: Task) -> Result<()> {
    let ok = matches!(
        (data.provenance().family, task),
        (DgpFamily::External, _)
            | (DgpFamily::Regression, Task::Regression)
            | (DgpFamily::Classification | DgpFamily::Basis, Task::Classification)
    );
    if !ok {
        return Err(Error::InvalidArgument(format!(
            "{task:?} task does not match {:?} data",
            data.provenance().family
        )));
    }
    if data.len() < 2 && !data.is_empty() {
        return Err(Error::InvalidArgument("two-step fitting needs at least two rows".into()));
    }
    if data.is_empty() {
        return Err(Error::Empty("training set"));
    }
    Ok(())
}

/// ERM, weight estimation and weighted refit.
pub fn two_step(data: &Dataset, task: Task, cfg: &FitConfig) -> Result<TwoStepResult> {
    cfg.validate()?;
    check_task(data, task)?;
    let split = SplitIndices::new(data.len(), cfg.sample_split, derive_seed(cfg.seed, 2));
    let first = data.subset(&split.weight_stage);
    let second = data.subset(&split.werm_stage);
    let hidden = cfg.hidden_for(task);
    let init_seed = derive_seed(cfg.seed, 0);
    let ones = |n: usize| vec![1.0; n];

    match task {
        Task::Regression => {
            let mean_init = mlp_init(data.dim(), hidden, Head::Identity, init_seed)?;
            let var_init = mlp_init(data.dim(), hidden, Head::Variance, derive_seed(cfg.seed, 1))?
                .with_variance_bounds(cfg.var_floor, cfg.var_ceil)?;
            let (erm, var) = if cfg.joint_nll {
                gd_fit_joint(&mean_init, &var_init, &first, &ones(first.len()), cfg)?
            } else {
                let erm = gd_fit_weighted(&mean_init, &first, LossKind::Squared, &ones(first.len()), cfg, None)?;
                let var = gd_fit_weighted(
                    &var_init,
                    &first,
                    LossKind::NllFrozenMean,
                    &ones(first.len()),
                    cfg,
                    Some(&erm.params),
                )?;
                (erm, var)
            };
            let weight_model = WeightModel::new(WeightKind::EstimatedPrecision { variance: var.params.clone() })
                .with_clamp(cfg.weight_floor, cfg.weight_cap);
            let werm = gd_fit(&mean_init, &second, LossKind::WeightedSquared, &weight_model, cfg, None)?;
            Ok(TwoStepResult {
                task,
                erm_model: Hypothesis::Mlp(erm.params),
                weight_model,
                werm_model: Hypothesis::Mlp(werm.params),
                variance_model: Some(var.params),
                split_indices: split,
                fit_config: cfg.clone(),
                final_losses: StageLosses { erm: erm.final_loss, weight: var.final_loss, werm: werm.final_loss },
            })
        }
        Task::Classification => {
            let init = mlp_init(data.dim(), hidden, Head::Sigmoid, init_seed)?;
            let eta = gd_fit_weighted(&init, &first, cfg.loss_choice_for_eta, &ones(first.len()), cfg, None)?;
            let weight_model = WeightModel::new(WeightKind::EstimatedMargin { eta: eta.params.clone() })
                .with_clamp(cfg.weight_floor, cfg.weight_cap);
            let werm = gd_fit(&init, &second, LossKind::WeightedCrossEntropy, &weight_model, cfg, None)?;
            Ok(TwoStepResult {
                task,
                erm_model: Hypothesis::Mlp(eta.params),
                weight_model,
                werm_model: Hypothesis::Mlp(werm.params),
                variance_model: None,
                split_indices: split,
                fit_config: cfg.clone(),
                final_losses: StageLosses { erm: eta.final_loss, weight: eta.final_loss, werm: werm.final_loss },
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dgp::{ClassificationDgpSpec, DgpSpec, RegressionDgpSpec};

    fn small_cfg() -> FitConfig {
        FitConfig { steps: 40, hidden: Some(4), seed: 9, ..FitConfig::default() }
    }

    #[test]
    fn config_validation() {
        assert!(FitConfig { steps: 0, ..FitConfig::default() }.validate().is_err());
        assert!(FitConfig { step_size: 0.0, ..FitConfig::default() }.validate().is_err());
        assert!(FitConfig { weight_floor: 2.0, weight_cap: Some(1.0), ..FitConfig::default() }.validate().is_err());
        assert!(FitConfig { loss_choice_for_eta: LossKind::ZeroOne, ..FitConfig::default() }.validate().is_err());
        assert!(FitConfig::default().validate().is_ok());
        let text = serde_json::to_string(&FitConfig::default()).unwrap();
        assert_eq!(serde_json::from_str::<FitConfig>(&text).unwrap(), FitConfig::default());
        assert!(serde_json::from_str::<FitConfig>("{\"stepz\": 3}").is_err());
        let partial: FitConfig = serde_json::from_str("{\"steps\": 3}").unwrap();
        assert_eq!(partial.steps, 3);
    }

    #[test]
    fn split_is_a_disjoint_cover() {
        for n in [2, 3, 10, 101] {
            let s = SplitIndices::new(n, true, 4);
            let mut all: Vec<usize> = s.weight_stage.iter().chain(&s.werm_stage).copied().collect();
            all.sort_unstable();
            assert_eq!(all, (0..n).collect::<Vec<_>>());
            assert_eq!(s.weight_stage.len(), n.div_ceil(2));
        }
        let off = SplitIndices::new(5, false, 4);
        assert_eq!(off.weight_stage, off.werm_stage);
    }

    #[test]
    fn task_must_match_family() {
        let ds = DgpSpec::Regression(RegressionDgpSpec::default()).sample(20, 1).unwrap();
        assert!(two_step(&ds, Task::Classification, &small_cfg()).is_err());
    }

    #[test]
    fn unit_clamp_without_split_reproduces_erm() {
        let cfg = FitConfig { sample_split: false, weight_floor: 1.0, weight_cap: Some(1.0), ..small_cfg() };
        let ds = DgpSpec::Regression(RegressionDgpSpec::default()).sample(64, 2).unwrap();
        let r = two_step(&ds, Task::Regression, &cfg).unwrap();
        assert_eq!(r.erm_model, r.werm_model);
        let ds = DgpSpec::Classification(ClassificationDgpSpec::section52()).sample(64, 2).unwrap();
        let r = two_step(&ds, Task::Classification, &cfg).unwrap();
        assert_eq!(r.erm_model, r.werm_model);
    }

    #[test]
    fn two_step_is_deterministic_and_split() {
        let ds = DgpSpec::Classification(ClassificationDgpSpec::section52()).sample(50, 3).unwrap();
        let a = two_step(&ds, Task::Classification, &small_cfg()).unwrap();
        let b = two_step(&ds, Task::Classification, &small_cfg()).unwrap();
        assert_eq!(a, b);
        let w: std::collections::HashSet<_> = a.split_indices.weight_stage.iter().collect();
        assert!(a.split_indices.werm_stage.iter().all(|i| !w.contains(i)));
        let p = a.provenance_json();
        assert_eq!(p["fit_config"]["steps"], 40);
        assert_eq!(p["weight_stage_rows"], 25);
    }

    #[test]
    fn joint_variant_runs() {
        let cfg = FitConfig { joint_nll: true, ..small_cfg() };
        let ds = DgpSpec::Regression(RegressionDgpSpec::default()).sample(40, 2).unwrap();
        let r = two_step(&ds, Task::Regression, &cfg).unwrap();
        assert!(r.final_losses.weight.is_finite());
    }
}
