//! Selective risk, coverage sweeps and the excess-risk decomposition.
//!
//! Coverage `alpha` is always the retained fraction. Regression keeps the
//! low-variance tail (`sigma2_hat(x) <= q_alpha`), classification the
//! high-margin tail (`w_hat(x) >= q_{1 - alpha}`), with cut-offs taken on a
//! validation set. At `alpha = 1` nothing is dropped, so the selective risk is
//! the unconditional one. Empty selections are reported as absent.

use serde::{Deserialize, Serialize};

use crate::dgp::{oracle_eval, BasisDgpSpec, Dataset, DgpSpec};
use crate::diagnostics::enumeration;
use crate::error::{Error, Result};
use crate::exec::{map_indexed, Execution};
use crate::models::{Predictor, ThresholdHypothesis};
use crate::pipeline::{two_step, FitConfig, MarginConvention, Task, WeightKind, WeightModel};
use crate::rng::{derive_seed, stream, uniform};
use crate::table::{fmt_opt, Table};

/// Type-1 empirical quantile: the smallest sorted value `v` with
/// `#{values <= v} / n >= alpha`.
pub fn empirical_quantile(values: &[f64], alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::InvalidArgument(format!("quantile level must lie in (0, 1], got {alpha}")));
    }
    if values.is_empty() {
        return Err(Error::Empty("quantile input"));
    }
    if values.iter().any(|v| v.is_nan()) {
        return Err(Error::InvalidArgument("quantile input contains NaN".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    // Start from ceil(alpha n) and correct for rounding in either direction.
    let mut k = ((alpha * n as f64).ceil() as usize).clamp(1, n);
    while k > 1 && (k - 1) as f64 / n as f64 >= alpha {
        k -= 1;
    }
    while k < n && (k as f64 / n as f64) < alpha {
        k += 1;
    }
    Ok(sorted[k - 1])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectiveRisk {
    pub risk: f64,
    pub n_selected: usize,
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha <= 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("coverage must lie in (0, 1], got {alpha}")))
    }
}

/// Rows of `test` whose score passes the coverage cut, as indices.
fn select(test_scores: &[f64], source_scores: &[f64], alpha: f64, keep_low: bool) -> Result<Vec<usize>> {
    check_alpha(alpha)?;
    if alpha == 1.0 {
        return Ok((0..test_scores.len()).collect());
    }
    Ok(if keep_low {
        let q = empirical_quantile(source_scores, alpha)?;
        (0..test_scores.len()).filter(|&i| test_scores[i] <= q).collect()
    } else {
        let q = empirical_quantile(source_scores, 1.0 - alpha)?;
        (0..test_scores.len()).filter(|&i| test_scores[i] >= q).collect()
    })
}

fn mean_over(rows: &[usize], f: impl Fn(usize) -> f64) -> Option<SelectiveRisk> {
    if rows.is_empty() {
        return None;
    }
    let risk = rows.iter().map(|&i| f(i)).sum::<f64>() / rows.len() as f64;
    Some(SelectiveRisk { risk, n_selected: rows.len() })
}

fn f_star_values(dgp: &DgpSpec, test: &Dataset) -> Result<Vec<f64>> {
    (0..test.len())
        .map(|i| {
            let o = oracle_eval(dgp, test.x(i), test.latent_at(i))?;
            o.f_star.or(o.bayes_label).ok_or_else(|| Error::InvalidArgument("generator has no oracle predictor".into()))
        })
        .collect()
}

/// `E[(f*(x) - f(x))^2 | variance(x) <= q_alpha]`.
pub fn selective_risk_regression(
    model: &dyn Predictor,
    test: &Dataset,
    dgp: &DgpSpec,
    variance: &dyn Predictor,
    alpha: f64,
    quantile_source: &Dataset,
) -> Result<Option<SelectiveRisk>> {
    if !matches!(dgp, DgpSpec::Regression(_)) {
        return Err(Error::InvalidArgument("regression selective risk needs a regression generator".into()));
    }
    let f_star = f_star_values(dgp, test)?;
    let scores = |d: &Dataset| -> Vec<f64> { (0..d.len()).map(|i| variance.value(d.x(i))).collect() };
    let rows = select(&scores(test), &scores(quantile_source), alpha, true)?;
    Ok(mean_over(&rows, |i| (f_star[i] - model.value(test.x(i))).powi(2)))
}

/// `P(f(x) != f*(x) | margin(x) >= q_{1 - alpha})`.
pub fn selective_risk_classification(
    model: &dyn Predictor,
    test: &Dataset,
    dgp: &DgpSpec,
    margin: &WeightModel,
    alpha: f64,
    quantile_source: &Dataset,
) -> Result<Option<SelectiveRisk>> {
    if matches!(dgp, DgpSpec::Regression(_)) {
        return Err(Error::InvalidArgument("classification selective risk needs a labelled-class generator".into()));
    }
    let f_star = f_star_values(dgp, test)?;
    let rows = select(&margin.weights_for(test)?, &margin.weights_for(quantile_source)?, alpha, false)?;
    Ok(mean_over(&rows, |i| if model.label(test.x(i)) != f_star[i] { 1.0 } else { 0.0 }))
}

/// Both sides of `E[dl] <= c P(omega < c) + E[omega^2 1{f != f*}] / c`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Decomposition {
    pub lhs: f64,
    pub bound: f64,
    pub lhs_se: f64,
    pub bound_se: f64,
}

fn mean_se(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

pub const MIN_DECOMPOSITION_DRAWS: usize = 10_000;

/// Monte Carlo estimate of both sides, with `omega = |2 eta* - 1|`.
pub fn conditional_excess_decomposition(
    dgp: &DgpSpec,
    model: &dyn Predictor,
    c: f64,
    mc_n: usize,
    seed: u64,
) -> Result<Decomposition> {
    if matches!(dgp, DgpSpec::Regression(_)) {
        return Err(Error::InvalidArgument("the decomposition needs a labelled-class generator".into()));
    }
    if mc_n < MIN_DECOMPOSITION_DRAWS {
        return Err(Error::InvalidArgument(format!(
            "need at least {MIN_DECOMPOSITION_DRAWS} draws to certify the decomposition, got {mc_n}"
        )));
    }
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::InvalidArgument(format!("c must be positive, got {c}")));
    }
    let data = dgp.sample(mc_n, seed)?;
    let mut lhs = Vec::with_capacity(mc_n);
    let mut bound = Vec::with_capacity(mc_n);
    for i in 0..mc_n {
        let x = data.x(i);
        let o = oracle_eval(dgp, x, data.latent_at(i))?;
        let (f_star, omega) = (o.bayes_label.expect("class oracle"), o.margin_raw.expect("class oracle"));
        let f = model.label(x);
        let y = data.y(i);
        lhs.push(f64::from(u8::from(f != y)) - f64::from(u8::from(f_star != y)));
        let wrong = if f != f_star { 1.0 } else { 0.0 };
        bound.push(if omega < c { c } else { 0.0 } + omega * omega * wrong / c);
    }
    let (lhs, lhs_se) = mean_se(&lhs);
    let (bound, bound_se) = mean_se(&bound);
    Ok(Decomposition { lhs, bound, lhs_se, bound_se })
}

/// The same decomposition by exact enumeration on the basis generator.
pub fn basis_excess_decomposition(spec: &BasisDgpSpec, h: &ThresholdHypothesis, c: f64) -> Result<Decomposition> {
    let lhs = enumeration::excess_risk_from_eta(spec, h)?;
    let eps = enumeration::margin_moment(spec, h, 2)?;
    let bound = c * enumeration::low_margin_mass(spec, c) + eps / c;
    Ok(Decomposition { lhs, bound, lhs_se: 0.0, bound_se: 0.0 })
}

/// How the selection score is obtained at evaluation time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selection {
    /// Variance or margin estimated in the first stage.
    #[default]
    Estimated,
    /// The generator's own variance or margin.
    Oracle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepOptions {
    pub n_train: usize,
    /// Validation and test sizes; `None` gives the 70/15/15 split.
    pub n_val: Option<usize>,
    pub n_test: Option<usize>,
    pub selection: Selection,
    pub execution: Execution,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self {
            n_train: 20_000,
            n_val: None,
            n_test: None,
            selection: Selection::Estimated,
            execution: Execution::default(),
        }
    }
}

impl SweepOptions {
    pub fn holdout(&self) -> usize {
        ((self.n_train as f64) * 15.0 / 70.0).round() as usize
    }

    pub fn sizes(&self) -> (usize, usize, usize) {
        (self.n_train, self.n_val.unwrap_or(self.holdout()), self.n_test.unwrap_or(self.holdout()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveCell {
    pub seed: u64,
    pub alpha: f64,
    pub n_selected: usize,
    pub risk_erm: Option<f64>,
    pub risk_werm: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub alpha: f64,
    pub mean_erm: f64,
    pub std_erm: f64,
    pub mean_werm: f64,
    pub std_werm: f64,
    /// Seeds with a non-empty selection.
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectiveRiskCurve {
    pub task: Task,
    pub alphas: Vec<f64>,
    pub seeds: Vec<u64>,
    pub cells: Vec<CurveCell>,
    pub aggregate: Vec<CurvePoint>,
}

/// Sample mean and standard deviation (divisor `n - 1`; 0 for one value).
pub fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let m = v.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (m, 0.0);
    }
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1) as f64;
    (m, var.sqrt())
}

impl SelectiveRiskCurve {
    pub fn task_name(&self) -> &'static str {
        match self.task {
            Task::Regression => "regression",
            Task::Classification => "classification",
        }
    }

    pub fn cells_table(&self) -> Table {
        let mut t = Table::new(&["task", "seed", "alpha", "n_selected", "risk_erm", "risk_werm"]);
        for c in &self.cells {
            t.push(vec![
                self.task_name().into(),
                c.seed.to_string(),
                c.alpha.to_string(),
                c.n_selected.to_string(),
                fmt_opt(c.risk_erm),
                fmt_opt(c.risk_werm),
            ]);
        }
        t
    }

    pub fn aggregate_table(&self) -> Table {
        let mut t = Table::new(&["alpha", "mean_erm", "std_erm", "mean_werm", "std_werm"]);
        let finite = |v: f64| fmt_opt(v.is_finite().then_some(v));
        for p in &self.aggregate {
            t.push(vec![
                p.alpha.to_string(),
                finite(p.mean_erm),
                finite(p.std_erm),
                finite(p.mean_werm),
                finite(p.std_werm),
            ]);
        }
        t
    }
}

fn task_of(dgp: &DgpSpec) -> Task {
    match dgp {
        DgpSpec::Regression(_) => Task::Regression,
        _ => Task::Classification,
    }
}

/// Per seed: draw train/validation/test, run the two-step fit and score both
/// models at every coverage level.
pub fn sweep(
    dgp: &DgpSpec,
    alphas: &[f64],
    seeds: &[u64],
    cfg: &FitConfig,
    opts: &SweepOptions,
) -> Result<SelectiveRiskCurve> {
    dgp.validate()?;
    cfg.validate()?;
    if alphas.is_empty() || seeds.is_empty() {
        return Err(Error::InvalidArgument("sweep needs at least one coverage level and one seed".into()));
    }
    for &a in alphas {
        check_alpha(a)?;
    }
    let (n_train, n_val, n_test) = opts.sizes();
    if n_train < 2 || n_val == 0 || n_test == 0 {
        return Err(Error::InvalidArgument(format!("split sizes too small: {n_train}/{n_val}/{n_test}")));
    }
    let task = task_of(dgp);

    let per_seed = map_indexed(seeds.len(), opts.execution, |k| -> Result<Vec<CurveCell>> {
        let seed = seeds[k];
        let train = dgp.sample(n_train, derive_seed(seed, 0))?;
        let val = dgp.sample(n_val, derive_seed(seed, 1))?;
        let test = dgp.sample(n_test, derive_seed(seed, 2))?;
        let fit_cfg = FitConfig { seed: derive_seed(seed, 3), ..cfg.clone() };
        let fit = two_step(&train, task, &fit_cfg)?;
        alphas
            .iter()
            .map(|&alpha| {
                let (erm, werm) = match task {
                    Task::Regression => {
                        let variance: Box<dyn Predictor> = match opts.selection {
                            Selection::Estimated => Box::new(fit.variance_model.clone().expect("regression fit")),
                            Selection::Oracle => Box::new(OracleVariance(dgp)),
                        };
                        (
                            selective_risk_regression(&fit.erm_model, &test, dgp, variance.as_ref(), alpha, &val)?,
                            selective_risk_regression(&fit.werm_model, &test, dgp, variance.as_ref(), alpha, &val)?,
                        )
                    }
                    Task::Classification => {
                        let margin = match opts.selection {
                            Selection::Estimated => match &fit.weight_model.kind {
                                WeightKind::EstimatedMargin { eta } => {
                                    WeightModel::new(WeightKind::EstimatedMargin { eta: eta.clone() })
                                }
                                _ => unreachable!("classification fits estimate a margin"),
                            },
                            Selection::Oracle => WeightModel::oracle_margin(dgp.clone(), MarginConvention::Half),
                        };
                        (
                            selective_risk_classification(&fit.erm_model, &test, dgp, &margin, alpha, &val)?,
                            selective_risk_classification(&fit.werm_model, &test, dgp, &margin, alpha, &val)?,
                        )
                    }
                };
                Ok(CurveCell {
                    seed,
                    alpha,
                    n_selected: erm.map_or(0, |r| r.n_selected),
                    risk_erm: erm.map(|r| r.risk),
                    risk_werm: werm.map(|r| r.risk),
                })
            })
            .collect()
    });
    let mut cells = Vec::with_capacity(seeds.len() * alphas.len());
    for r in per_seed {
        cells.extend(r?);
    }
    let aggregate = alphas
        .iter()
        .enumerate()
        .map(|(a, &alpha)| {
            let at: Vec<&CurveCell> = cells.iter().skip(a).step_by(alphas.len()).collect();
            let erm: Vec<f64> = at.iter().filter_map(|c| c.risk_erm).collect();
            let werm: Vec<f64> = at.iter().filter_map(|c| c.risk_werm).collect();
            let (mean_erm, std_erm) = mean_std(&erm);
            let (mean_werm, std_werm) = mean_std(&werm);
            CurvePoint { alpha, mean_erm, std_erm, mean_werm, std_werm, count: erm.len() }
        })
        .collect();
    Ok(SelectiveRiskCurve { task, alphas: alphas.to_vec(), seeds: seeds.to_vec(), cells, aggregate })
}

struct OracleVariance<'a>(&'a DgpSpec);

impl Predictor for OracleVariance<'_> {
    fn input_dim(&self) -> usize {
        self.0.dim()
    }

    fn value(&self, x: &[f64]) -> f64 {
        oracle_eval(self.0, x, None).ok().and_then(|o| o.sigma2_star).unwrap_or(f64::NAN)
    }
}

/// Thresholds drawn uniformly from `[lo, hi]^d`.
pub fn random_thresholds(d: usize, lo: f64, hi: f64, seed: u64) -> ThresholdHypothesis {
    let mut rng = stream(seed);
    ThresholdHypothesis { beta: (0..d).map(|_| lo + (hi - lo) * uniform(&mut rng)).collect() }
}
