//! Empirical checks of `Var[w dl] <= B E[w dl] + eps`.

use serde::{Deserialize, Serialize};

use crate::dgp::{oracle_eval, DgpSpec};
use crate::diagnostics::enumeration;
use crate::error::{Error, Result};
use crate::models::{Hypothesis, LossKind, Predictor};
use crate::pipeline::WeightModel;
use crate::table::Table;

/// Tolerance on the slack for exact enumeration.
pub const EXACT_TOLERANCE: f64 = 1e-12;

/// Claimed constants. Only `b` and `additive_eps` enter the checked
/// predicate; the rest document the setting the claim was derived under.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BernsteinCheckSpec {
    pub b: f64,
    #[serde(default)]
    pub additive_eps: f64,
    pub loss_bound_a: f64,
    pub lipschitz_l: f64,
    pub weight_bound_c1: f64,
    pub noise_bound_c2: f64,
    pub variance_floor_c3: f64,
    pub gamma: f64,
}

impl BernsteinCheckSpec {
    /// A spec that only states `B`; the descriptive constants are set to 1.
    pub fn with_b(b: f64) -> Self {
        Self {
            b,
            additive_eps: 0.0,
            loss_bound_a: 1.0,
            lipschitz_l: 1.0,
            weight_bound_c1: 1.0,
            noise_bound_c2: 1.0,
            variance_floor_c3: 1.0,
            gamma: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let named = [
            ("B", self.b),
            ("loss_bound_a", self.loss_bound_a),
            ("lipschitz_L", self.lipschitz_l),
            ("weight_bound_c1", self.weight_bound_c1),
            ("noise_bound_c2", self.noise_bound_c2),
            ("variance_floor_c3", self.variance_floor_c3),
            ("gamma", self.gamma),
        ];
        for (name, v) in named {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidSpec(format!("{name} must be finite and positive, got {v}")));
            }
        }
        if !(self.additive_eps.is_finite() && self.additive_eps >= 0.0) {
            return Err(Error::InvalidSpec(format!("additive_eps must be >= 0, got {}", self.additive_eps)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ProbeMethod {
    MonteCarlo { n: usize },
    ExactEnumeration,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BernsteinReport {
    pub mean_hat: f64,
    pub var_hat: f64,
    pub stderr_mean: f64,
    pub stderr_var: f64,
    pub b: f64,
    pub additive_eps: f64,
    /// `B mean_hat + eps - var_hat`.
    pub slack: f64,
    pub method: ProbeMethod,
    pub pass: bool,
}

impl BernsteinReport {
    fn new(mean: f64, var: f64, se_mean: f64, se_var: f64, spec: &BernsteinCheckSpec, method: ProbeMethod) -> Self {
        let slack = spec.b * mean + spec.additive_eps - var;
        let tolerance = match method {
            ProbeMethod::ExactEnumeration => EXACT_TOLERANCE,
            ProbeMethod::MonteCarlo { .. } => 4.0 * (spec.b * se_mean + se_var),
        };
        BernsteinReport {
            mean_hat: mean,
            var_hat: var,
            stderr_mean: se_mean,
            stderr_var: se_var,
            b: spec.b,
            additive_eps: spec.additive_eps,
            slack,
            method,
            pass: slack >= -tolerance,
        }
    }

    pub fn tolerance(&self) -> f64 {
        match self.method {
            ProbeMethod::ExactEnumeration => EXACT_TOLERANCE,
            ProbeMethod::MonteCarlo { .. } => 4.0 * (self.b * self.stderr_mean + self.stderr_var),
        }
    }
}

fn check_loss(dgp: &DgpSpec, loss: LossKind) -> Result<()> {
    match (dgp, loss) {
        (DgpSpec::Regression(_), LossKind::Squared) => Ok(()),
        (DgpSpec::Classification(_) | DgpSpec::Basis(_), LossKind::ZeroOne) => Ok(()),
        _ => Err(Error::Unsupported(format!(
            "Bernstein probes support squared loss for regression and 0-1 loss for classes, got {loss:?}"
        ))),
    }
}

/// Exact on the basis generator with a threshold hypothesis and
/// segment-constant weights; Monte Carlo otherwise.
pub fn bernstein_probe(
    dgp: &DgpSpec,
    f: &Hypothesis,
    weight: &WeightModel,
    loss: LossKind,
    spec: &BernsteinCheckSpec,
    n_mc: usize,
    seed: u64,
) -> Result<BernsteinReport> {
    if let (DgpSpec::Basis(_), Hypothesis::Threshold(_)) = (dgp, f) {
        match bernstein_probe_exact(dgp, f, weight, loss, spec) {
            Err(Error::Unsupported(_)) => {}
            other => return other,
        }
    }
    bernstein_probe_monte_carlo(dgp, f, weight, loss, spec, n_mc, seed)
}

pub fn bernstein_probe_exact(
    dgp: &DgpSpec,
    f: &Hypothesis,
    weight: &WeightModel,
    loss: LossKind,
    spec: &BernsteinCheckSpec,
) -> Result<BernsteinReport> {
    spec.validate()?;
    check_loss(dgp, loss)?;
    let (DgpSpec::Basis(basis), Hypothesis::Threshold(h)) = (dgp, f) else {
        return Err(Error::Unsupported(
            "exact enumeration needs the basis generator and a threshold hypothesis".into(),
        ));
    };
    let (first, second) = enumeration::weighted_moments(basis, h, weight)?;
    Ok(BernsteinReport::new(first, second - first * first, 0.0, 0.0, spec, ProbeMethod::ExactEnumeration))
}

pub fn bernstein_probe_monte_carlo(
    dgp: &DgpSpec,
    f: &dyn Predictor,
    weight: &WeightModel,
    loss: LossKind,
    spec: &BernsteinCheckSpec,
    n_mc: usize,
    seed: u64,
) -> Result<BernsteinReport> {
    spec.validate()?;
    check_loss(dgp, loss)?;
    weight.validate()?;
    if n_mc < 2 {
        return Err(Error::InvalidArgument(format!("need at least two Monte Carlo draws, got {n_mc}")));
    }
    if f.input_dim() != dgp.dim() {
        return Err(Error::DimensionMismatch { expected: dgp.dim(), got: f.input_dim() });
    }
    let data = dgp.sample(n_mc, seed)?;
    let mut v = Vec::with_capacity(n_mc);
    for i in 0..n_mc {
        let x = data.x(i);
        let latent = data.latent_at(i);
        let o = oracle_eval(dgp, x, latent)?;
        let y = data.y(i);
        let dl = match loss {
            LossKind::Squared => {
                let fs = o.f_star.expect("regression oracle");
                (f.value(x) - y).powi(2) - (fs - y).powi(2)
            }
            _ => {
                let fs = o.bayes_label.expect("class oracle");
                f64::from(u8::from(f.label(x) != y)) - f64::from(u8::from(fs != y))
            }
        };
        v.push(weight.weight(x, latent)? * dl);
    }
    let n = n_mc as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let m4 = v.iter().map(|t| (t - mean).powi(4)).sum::<f64>() / n;
    let se_mean = (var / n).sqrt();
    let se_var = ((m4 - var * var).max(0.0) / n).sqrt();
    Ok(BernsteinReport::new(mean, var, se_mean, se_var, spec, ProbeMethod::MonteCarlo { n: n_mc }))
}

/// One row of `bernstein.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BernsteinRow {
    pub dgp: String,
    pub hypothesis_id: String,
    pub report: BernsteinReport,
}

pub fn bernstein_table(rows: &[BernsteinRow]) -> Table {
    let mut t = Table::new(&[
        "dgp",
        "hypothesis_id",
        "method",
        "n_mc",
        "mean_hat",
        "var_hat",
        "B",
        "additive_eps",
        "slack",
        "pass",
    ]);
    for r in rows {
        let (method, n) = match r.report.method {
            ProbeMethod::MonteCarlo { n } => ("monte_carlo", n),
            ProbeMethod::ExactEnumeration => ("exact_enumeration", 0),
        };
        t.push(vec![
            r.dgp.clone(),
            r.hypothesis_id.clone(),
            method.into(),
            n.to_string(),
            r.report.mean_hat.to_string(),
            r.report.var_hat.to_string(),
            r.report.b.to_string(),
            r.report.additive_eps.to_string(),
            r.report.slack.to_string(),
            r.report.pass.to_string(),
        ]);
    }
    t
}
