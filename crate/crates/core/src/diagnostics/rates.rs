//! Excess-risk decay over a grid of sample sizes.
//!
//! On the basis generator every fit is the exact threshold minimizer, so the
//! measured risk carries no optimization error. wERM is scored by
//! `E[omega* dl]`, ERM by the plain `E[dl]`; both in closed form. The slope is
//! the least-squares fit of `log median risk` against `log n`, skipping grid
//! points whose median over seeds is zero.

use serde::{Deserialize, Serialize};

use crate::dgp::DgpSpec;
use crate::diagnostics::enumeration::{excess_risk_from_eta, weighted_moments};
use crate::error::{Error, Result};
use crate::exec::map_indexed;
use crate::pipeline::{exact_basis_erm, FitConfig, MarginConvention, WeightModel};
use crate::rng::derive_seed;
use crate::table::Table;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    Erm,
    Werm,
}

impl Estimator {
    pub fn name(self) -> &'static str {
        match self {
            Estimator::Erm => "erm",
            Estimator::Werm => "werm",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateCell {
    pub n: usize,
    pub seed: u64,
    pub estimator: Estimator,
    pub excess_risk: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum RateFit {
    Line {
        slope: f64,
        intercept: f64,
    },
    /// Every median was zero.
    Degenerate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateResult {
    pub estimator: Estimator,
    pub cells: Vec<RateCell>,
    /// `(n, median risk over seeds)` in grid order.
    pub medians: Vec<(usize, f64)>,
    /// Grid sizes left out of the fit because their median was zero.
    pub excluded: Vec<usize>,
    pub fit: RateFit,
}

impl RateResult {
    pub fn slope(&self) -> Option<f64> {
        match self.fit {
            RateFit::Line { slope, .. } => Some(slope),
            RateFit::Degenerate => None,
        }
    }

    pub fn intercept(&self) -> Option<f64> {
        match self.fit {
            RateFit::Line { intercept, .. } => Some(intercept),
            RateFit::Degenerate => None,
        }
    }

    pub fn table(&self) -> Table {
        let mut t = Table::new(&["n", "seed", "estimator", "excess_risk"]);
        for c in &self.cells {
            t.push(vec![c.n.to_string(), c.seed.to_string(), c.estimator.name().into(), c.excess_risk.to_string()]);
        }
        t
    }
}

pub fn median(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Empty("median of no values"));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Ok(if v.len() % 2 == 1 { v[m] } else { 0.5 * (v[m - 1] + v[m]) })
}

/// Ordinary least squares `y = intercept + slope x`.
pub fn least_squares(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

fn check_grid(n_grid: &[usize]) -> Result<()> {
    let mut distinct = n_grid.to_vec();
    distinct.sort_unstable();
    distinct.dedup();
    if distinct.len() < 4 {
        return Err(Error::InvalidArgument(format!("n_grid needs at least 4 distinct sizes, got {}", distinct.len())));
    }
    if distinct[0] == 0 || distinct[distinct.len() - 1] < 10 * distinct[0] {
        return Err(Error::InvalidArgument("n_grid must be positive and span at least one decade".into()));
    }
    Ok(())
}

/// Runs `estimator` on every `(n, seed)` pair. The sample for a pair depends
/// only on `(seed, n)`, so ERM and wERM runs see the same data.
///
/// wERM uses oracle raw-margin weights clamped to `cfg.weight_floor` and
/// `cfg.weight_cap`; only those fields and `cfg.execution` are read.
pub fn rate_experiment(
    dgp: &DgpSpec,
    n_grid: &[usize],
    seeds: &[u64],
    estimator: Estimator,
    cfg: &FitConfig,
) -> Result<RateResult> {
    let DgpSpec::Basis(spec) = dgp else {
        return Err(Error::Unsupported("rate experiments need the basis generator".into()));
    };
    spec.validate()?;
    cfg.validate()?;
    check_grid(n_grid)?;
    if seeds.is_empty() {
        return Err(Error::Empty("rate experiment seeds"));
    }
    let weights = match estimator {
        Estimator::Erm => WeightModel::constant(1.0),
        Estimator::Werm => {
            WeightModel::oracle_margin(dgp.clone(), MarginConvention::Raw).with_clamp(cfg.weight_floor, cfg.weight_cap)
        }
    };
    weights.validate()?;
    let score_weights = WeightModel::oracle_margin(dgp.clone(), MarginConvention::Raw);
    let pairs: Vec<(usize, u64)> = n_grid.iter().flat_map(|&n| seeds.iter().map(move |&s| (n, s))).collect();
    let cells = map_indexed(pairs.len(), cfg.execution, |i| -> Result<RateCell> {
        let (n, seed) = pairs[i];
        let data = dgp.sample(n, derive_seed(seed, n as u64))?;
        let h = exact_basis_erm(&data, &weights)?;
        let excess_risk = match estimator {
            Estimator::Erm => excess_risk_from_eta(spec, &h)?,
            Estimator::Werm => weighted_moments(spec, &h, &score_weights)?.0,
        };
        Ok(RateCell { n, seed, estimator, excess_risk })
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    summarize(estimator, cells, n_grid)
}

fn summarize(estimator: Estimator, cells: Vec<RateCell>, n_grid: &[usize]) -> Result<RateResult> {
    let mut medians = Vec::with_capacity(n_grid.len());
    for &n in n_grid {
        let risks: Vec<f64> = cells.iter().filter(|c| c.n == n).map(|c| c.excess_risk).collect();
        medians.push((n, median(&risks)?));
    }
    let (usable, zero): (Vec<_>, Vec<_>) = medians.iter().partition(|(_, m)| *m > 0.0);
    let excluded: Vec<usize> = zero.iter().map(|(n, _)| *n).collect();
    let fit = if usable.is_empty() {
        RateFit::Degenerate
    } else if usable.len() < 3 {
        return Err(Error::InsufficientGrid { usable: usable.len() });
    } else {
        let xs: Vec<f64> = usable.iter().map(|(n, _)| (*n as f64).ln()).collect();
        let ys: Vec<f64> = usable.iter().map(|(_, m)| m.ln()).collect();
        let (slope, intercept) = least_squares(&xs, &ys);
        RateFit::Line { slope, intercept }
    };
    Ok(RateResult { estimator, cells, medians, excluded, fit })
}

/// Sample-size grid `n_0, 2 n_0, ..., 2^(k-1) n_0`.
pub fn doubling_grid(n0: usize, k: usize) -> Vec<usize> {
    (0..k).map(|i| n0 << i).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dgp::BasisDgpSpec;
    use crate::exec::Execution;

    fn cfg(exec: Execution) -> FitConfig {
        FitConfig { execution: exec, ..FitConfig::default() }
    }

    #[test]
    fn median_and_least_squares() {
        assert_eq!(median(&[3.0, 1.0, 2.0]).unwrap(), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]).unwrap(), 2.5);
        let xs = [0.0, 1.0, 2.0, 3.0];
        let ys: Vec<f64> = xs.iter().map(|x| 1.5 - 0.75 * x).collect();
        let (s, i) = least_squares(&xs, &ys);
        assert!((s + 0.75).abs() < 1e-14 && (i - 1.5).abs() < 1e-14);
    }

    #[test]
    fn noiseless_case_is_degenerate() {
        // gamma = 0: all mass on the band with eta = 1/2, so every threshold is Bayes-optimal.
        let dgp = DgpSpec::Basis(BasisDgpSpec::new(1, 0.0));
        for est in [Estimator::Erm, Estimator::Werm] {
            let r = rate_experiment(&dgp, &[50, 100, 200, 500], &[1, 2, 3], est, &cfg(Execution::Sequential)).unwrap();
            assert_eq!(r.fit, RateFit::Degenerate);
            assert_eq!(r.excluded, vec![50, 100, 200, 500]);
            assert!(r.cells.iter().all(|c| c.excess_risk == 0.0));
        }
    }

    #[test]
    fn grid_preconditions() {
        let dgp = DgpSpec::Basis(BasisDgpSpec::new(1, 0.2));
        let c = cfg(Execution::Sequential);
        assert!(rate_experiment(&dgp, &[100, 200, 400], &[1], Estimator::Erm, &c).is_err());
        assert!(rate_experiment(&dgp, &[100, 200, 400, 800], &[1], Estimator::Erm, &c).is_err());
        assert!(rate_experiment(&dgp, &[100, 100, 400, 1000], &[1], Estimator::Erm, &c).is_err());
        let reg = DgpSpec::Regression(Default::default());
        assert!(matches!(
            rate_experiment(&reg, &[10, 20, 40, 100], &[1], Estimator::Erm, &c),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn too_few_nonzero_medians() {
        let cells = [(10, 0.0), (20, 0.0), (40, 0.1), (100, 0.05)]
            .iter()
            .map(|&(n, r)| RateCell { n, seed: 0, estimator: Estimator::Erm, excess_risk: r })
            .collect();
        assert!(matches!(
            summarize(Estimator::Erm, cells, &[10, 20, 40, 100]),
            Err(Error::InsufficientGrid { usable: 2 })
        ));
    }

    #[test]
    fn parallel_matches_sequential_and_pairs_data() {
        let dgp = DgpSpec::Basis(BasisDgpSpec::new(2, 0.2));
        let grid = doubling_grid(50, 5);
        let a = rate_experiment(&dgp, &grid, &[1, 2, 3, 4, 5], Estimator::Werm, &cfg(Execution::Parallel)).unwrap();
        let b = rate_experiment(&dgp, &grid, &[1, 2, 3, 4, 5], Estimator::Werm, &cfg(Execution::Sequential)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.table().rows.len(), 25);
        assert!(a.cells.iter().all(|c| c.excess_risk >= 0.0));
    }
}
