use crate::dgp::Dataset;
use crate::error::{Error, Result};
use crate::models::{precompute_frozen, prepared_loss_and_grad, LossKind, MlpParams, Predictor};
use crate::pipeline::{FitConfig, WeightModel};

/// Parameters after the last step and the loss they attain.
#[derive(Debug, Clone, PartialEq)]
pub struct GdFit {
    pub params: MlpParams,
    pub final_loss: f64,
}

/// Full-batch gradient descent at a fixed step size.
pub fn gd_fit(
    init: &MlpParams,
    data: &Dataset,
    kind: LossKind,
    weights: &WeightModel,
    cfg: &FitConfig,
    frozen_mean: Option<&dyn Predictor>,
) -> Result<GdFit> {
    weights.validate()?;
    let w = weights.weights_for(data)?;
    gd_fit_weighted(init, data, kind, &w, cfg, frozen_mean)
}

/// [`gd_fit`] with precomputed per-row weights.
pub fn gd_fit_weighted(
    init: &MlpParams,
    data: &Dataset,
    kind: LossKind,
    weights: &[f64],
    cfg: &FitConfig,
    frozen_mean: Option<&dyn Predictor>,
) -> Result<GdFit> {
    cfg.validate()?;
    if !kind.is_differentiable() {
        return Err(Error::UnsupportedGradient(kind));
    }
    let frozen = precompute_frozen(data, frozen_mean)?;
    let mut params = init.clone();
    for step in 0..cfg.steps {
        let lg = prepared_loss_and_grad(&params, data, kind, weights, frozen.as_deref(), cfg.execution)?;
        if !lg.loss.is_finite() {
            return Err(Error::Divergence { step });
        }
        for (p, g) in params.params_mut().iter_mut().zip(&lg.grad) {
            *p -= cfg.step_size * g;
        }
    }
    let lg = prepared_loss_and_grad(&params, data, kind, weights, frozen.as_deref(), cfg.execution)?;
    if !lg.loss.is_finite() || !params.params().iter().all(|p| p.is_finite()) {
        return Err(Error::Divergence { step: cfg.steps });
    }
    Ok(GdFit { params, final_loss: lg.loss })
}

/// Joint mean/variance fit of `log s(x) + (y - m(x))^2 / s(x)`.
///
/// Both networks take a simultaneous gradient step: the mean network sees
/// the squared loss weighted by `1 / s(x)`, the variance network the
/// likelihood with the current mean held fixed.
pub fn gd_fit_joint(
    mean_init: &MlpParams,
    var_init: &MlpParams,
    data: &Dataset,
    weights: &[f64],
    cfg: &FitConfig,
) -> Result<(GdFit, GdFit)> {
    cfg.validate()?;
    let mut mean = mean_init.clone();
    let mut var = var_init.clone();
    let scaled = |var: &MlpParams| -> Vec<f64> { (0..data.len()).map(|i| weights[i] / var.value(data.x(i))).collect() };
    let eval = |mean: &MlpParams, var: &MlpParams| -> Result<(f64, Vec<f64>, f64, Vec<f64>)> {
        let m = mean.clone();
        let frozen = precompute_frozen(data, Some(&m as &dyn Predictor))?;
        let lv = prepared_loss_and_grad(var, data, LossKind::NllFrozenMean, weights, frozen.as_deref(), cfg.execution)?;
        let lm = prepared_loss_and_grad(mean, data, LossKind::WeightedSquared, &scaled(var), None, cfg.execution)?;
        Ok((lm.loss, lm.grad, lv.loss, lv.grad))
    };
    for step in 0..cfg.steps {
        let (_, gm, lv, gv) = eval(&mean, &var)?;
        if !lv.is_finite() {
            return Err(Error::Divergence { step });
        }
        for (p, g) in mean.params_mut().iter_mut().zip(&gm) {
            *p -= cfg.step_size * g;
        }
        for (p, g) in var.params_mut().iter_mut().zip(&gv) {
            *p -= cfg.step_size * g;
        }
    }
    let (lm, _, lv, _) = eval(&mean, &var)?;
    if !lv.is_finite() {
        return Err(Error::Divergence { step: cfg.steps });
    }
    Ok((GdFit { params: mean, final_loss: lm }, GdFit { params: var, final_loss: lv }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{mlp_init, Head};

    fn line() -> Dataset {
        Dataset::external(1, vec![1.0, 2.0, 3.0], vec![2.0, 4.0, 6.0]).unwrap()
    }

    #[test]
    fn fits_a_line() {
        let cfg = FitConfig { steps: 5000, hidden: Some(1), ..FitConfig::default() };
        let mut init = mlp_init(1, 1, Head::Identity, 3).unwrap();
        // Start in the near-linear regime of tanh.
        init.params_mut().copy_from_slice(&[0.1, 0.0, 0.1, 0.0]);
        let fit = gd_fit(&init, &line(), LossKind::Squared, &WeightModel::constant(1.0), &cfg, None).unwrap();
        for (x, y) in [(1.0, 2.0), (2.0, 4.0), (3.0, 6.0)] {
            let p = fit.params.value(&[x]);
            assert!((p - y).abs() < 1e-2, "f({x}) = {p}");
        }
    }

    #[test]
    fn weight_scale_trades_against_step_size() {
        let cfg = FitConfig { steps: 200, ..FitConfig::default() };
        let init = mlp_init(1, 4, Head::Identity, 1).unwrap();
        let run = |c: f64, step: f64| {
            let cfg = FitConfig { step_size: step, ..cfg.clone() };
            gd_fit(&init, &line(), LossKind::WeightedSquared, &WeightModel::constant(c), &cfg, None).unwrap().params
        };
        let base = run(1.0, 1e-2);
        // Powers of two scale exactly.
        assert_eq!(base, run(8.0, 1e-2 / 8.0));
        let seven = run(7.0, 1e-2 / 7.0);
        for (a, b) in base.params().iter().zip(seven.params()) {
            assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0));
        }
    }

    #[test]
    fn divergence_names_the_step() {
        let cfg = FitConfig { steps: 500, step_size: 10.0, ..FitConfig::default() };
        let ds = Dataset::external(1, vec![1.0, 200.0, 300.0], vec![1e3, -4e3, 6e3]).unwrap();
        let init = mlp_init(1, 8, Head::Identity, 1).unwrap();
        let err = gd_fit(&init, &ds, LossKind::Squared, &WeightModel::constant(1.0), &cfg, None).unwrap_err();
        assert!(matches!(err, Error::Divergence { .. }), "{err:?}");
    }

    #[test]
    fn zero_one_cannot_be_fitted() {
        let init = mlp_init(1, 2, Head::Sigmoid, 1).unwrap();
        let ds = Dataset::external(1, vec![1.0], vec![1.0]).unwrap();
        let err = gd_fit(&init, &ds, LossKind::ZeroOne, &WeightModel::constant(1.0), &FitConfig::default(), None)
            .unwrap_err();
        assert!(matches!(err, Error::UnsupportedGradient(LossKind::ZeroOne)));
    }
}
