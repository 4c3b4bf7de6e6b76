//! ERM versus weighted ERM on the basis generator's large-margin region.
//!
//! Each trial fits thresholds twice on the same sample: with unit weights,
//! and with a perturbed oracle margin `w_hat` whose mean squared deviation
//! from `omega* = |2 eta* - 1|` is at most `weight_eps`. Both fits are scored
//! by `P(f != f* | omega* > gamma)`, computed exactly.

use serde::{Deserialize, Serialize};
use statrs::distribution::{Binomial, DiscreteCDF};

use crate::dgp::{BasisDgpSpec, DgpSpec};
use crate::diagnostics::enumeration::conditional_error_above;
use crate::error::{Error, Result};
use crate::exec::{map_indexed, Execution};
use crate::pipeline::{exact_basis_erm, MarginConvention, WeightModel};
use crate::risk::empirical_quantile;
use crate::rng::derive_seed;
use crate::table::Table;

pub const MIN_TRIALS: usize = 50;
/// ERM counts as failing when its conditional error reaches this level.
pub const ERM_FAIL_LEVEL: f64 = 0.015;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LowerboundTrial {
    pub trial: usize,
    pub n: usize,
    pub beta_erm: Vec<f64>,
    pub beta_werm: Vec<f64>,
    pub err_erm: f64,
    pub err_werm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LowerboundResult {
    pub trials: Vec<LowerboundTrial>,
    /// Fraction of trials with ERM conditional error `>= 0.015`.
    pub erm_fail_freq: f64,
    /// wERM conditional error at levels 0.5, 0.9 and 0.95.
    pub werm_err_quantiles: [f64; 3],
    pub mean_err_erm: f64,
    pub mean_err_werm: f64,
    /// Trials where wERM beats ERM, and the reverse; ties are dropped.
    pub wins: usize,
    pub losses: usize,
    /// Two-sided sign-test p-value of `wins` against `losses`.
    pub sign_test_p: f64,
}

impl LowerboundResult {
    /// Fraction of trials with wERM conditional error `<= level`.
    pub fn werm_within(&self, level: f64) -> f64 {
        self.trials.iter().filter(|t| t.err_werm <= level).count() as f64 / self.trials.len() as f64
    }

    pub fn table(&self) -> Table {
        let mut t = Table::new(&["trial", "n", "beta_erm", "beta_werm", "err_erm", "err_werm"]);
        let join = |b: &[f64]| b.iter().map(f64::to_string).collect::<Vec<_>>().join(";");
        for r in &self.trials {
            t.push(vec![
                r.trial.to_string(),
                r.n.to_string(),
                join(&r.beta_erm),
                join(&r.beta_werm),
                r.err_erm.to_string(),
                r.err_werm.to_string(),
            ]);
        }
        t
    }
}

/// Two-sided exact sign test; 1 when there are no untied pairs.
pub fn sign_test_p(wins: usize, losses: usize) -> f64 {
    let m = wins + losses;
    if m == 0 {
        return 1.0;
    }
    let k = wins.min(losses) as u64;
    let tail = Binomial::new(0.5, m as u64).expect("valid binomial").cdf(k);
    (2.0 * tail).min(1.0)
}

pub fn lowerbound_experiment(
    spec: &BasisDgpSpec,
    n: usize,
    trials: usize,
    weight_eps: f64,
    seed: u64,
    exec: Execution,
) -> Result<LowerboundResult> {
    spec.validate()?;
    if trials < MIN_TRIALS {
        return Err(Error::InvalidArgument(format!("need at least {MIN_TRIALS} trials, got {trials}")));
    }
    if n == 0 {
        return Err(Error::InvalidArgument("trials need at least one sample".into()));
    }
    if !(weight_eps.is_finite() && weight_eps >= 0.0) {
        return Err(Error::InvalidArgument(format!("weight_eps must be >= 0, got {weight_eps}")));
    }
    let dgp = DgpSpec::Basis(spec.clone());
    let erm_weights = WeightModel::constant(1.0);
    let results = map_indexed(trials, exec, |t| -> Result<LowerboundTrial> {
        let trial_seed = derive_seed(seed, t as u64);
        let data = dgp.sample(n, derive_seed(trial_seed, 0))?;
        let w_hat =
            WeightModel::perturbed_margin(dgp.clone(), MarginConvention::Raw, weight_eps, derive_seed(trial_seed, 1));
        let erm = exact_basis_erm(&data, &erm_weights)?;
        let werm = exact_basis_erm(&data, &w_hat)?;
        let region = |h| conditional_error_above(spec, h, spec.gamma).map(|e| e.unwrap_or(0.0));
        Ok(LowerboundTrial {
            trial: t,
            n,
            err_erm: region(&erm)?,
            err_werm: region(&werm)?,
            beta_erm: erm.beta,
            beta_werm: werm.beta,
        })
    });
    let trials: Vec<LowerboundTrial> = results.into_iter().collect::<Result<_>>()?;
    let count = trials.len() as f64;
    let werm_errs: Vec<f64> = trials.iter().map(|t| t.err_werm).collect();
    let wins = trials.iter().filter(|t| t.err_werm < t.err_erm).count();
    let losses = trials.iter().filter(|t| t.err_werm > t.err_erm).count();
    Ok(LowerboundResult {
        erm_fail_freq: trials.iter().filter(|t| t.err_erm >= ERM_FAIL_LEVEL).count() as f64 / count,
        werm_err_quantiles: [
            empirical_quantile(&werm_errs, 0.5)?,
            empirical_quantile(&werm_errs, 0.9)?,
            empirical_quantile(&werm_errs, 0.95)?,
        ],
        mean_err_erm: trials.iter().map(|t| t.err_erm).sum::<f64>() / count,
        mean_err_werm: werm_errs.iter().sum::<f64>() / count,
        wins,
        losses,
        sign_test_p: sign_test_p(wins, losses),
        trials,
    })
}
