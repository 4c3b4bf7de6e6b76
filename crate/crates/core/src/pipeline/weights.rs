use serde::{Deserialize, Serialize};

use crate::dgp::{oracle_eval, Dataset, DgpSpec, Latent};
use crate::error::{Error, Result};
use crate::models::{MlpParams, Predictor};
use crate::rng::{fnv1a64, splitmix64};

/// Which scale the margin is reported on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MarginConvention {
    /// `|2 eta - 1|`, in `[0, 1]`.
    #[default]
    Raw,
    /// `|eta - 1/2|`, in `[0, 1/2]`.
    Half,
}

impl MarginConvention {
    pub fn of_eta(self, eta: f64) -> f64 {
        match self {
            MarginConvention::Raw => (2.0 * eta - 1.0).abs(),
            MarginConvention::Half => (eta - 0.5).abs(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum WeightKind {
    Constant {
        c: f64,
    },
    OracleMargin {
        dgp: DgpSpec,
        #[serde(default)]
        convention: MarginConvention,
    },
    /// `|eta_hat - 1/2|` from a probability network.
    EstimatedMargin {
        eta: MlpParams,
    },
    OraclePrecision {
        dgp: DgpSpec,
    },
    /// `1 / sigma2_hat` from a variance network.
    EstimatedPrecision {
        variance: MlpParams,
    },
    /// `max(0, omega*(x) + a u(x))` with `u(x)` uniform on `[-1, 1]`, a fixed
    /// pseudo-random function of `x`. With `a = sqrt(3 eps)` the mean squared
    /// deviation from the oracle margin is at most `eps`.
    PerturbedMargin {
        dgp: DgpSpec,
        #[serde(default)]
        convention: MarginConvention,
        amplitude: f64,
        seed: u64,
    },
}

/// A weight function `x -> omega(x)` with an optional clamp.
///
/// The value is `scale * raw(x)` clamped into `[floor, cap]`; with
/// `floor = 0` and no cap the raw scaled value is used as is.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightModel {
    pub kind: WeightKind,
    #[serde(default = "one")]
    pub scale: f64,
    #[serde(default)]
    pub floor: f64,
    #[serde(default)]
    pub cap: Option<f64>,
}

fn one() -> f64 {
    1.0
}

impl WeightModel {
    pub fn new(kind: WeightKind) -> Self {
        Self { kind, scale: 1.0, floor: 0.0, cap: None }
    }

    pub fn constant(c: f64) -> Self {
        Self::new(WeightKind::Constant { c })
    }

    pub fn oracle_margin(dgp: DgpSpec, convention: MarginConvention) -> Self {
        Self::new(WeightKind::OracleMargin { dgp, convention })
    }

    /// Perturbation whose mean squared deviation from the oracle is at most `eps`.
    pub fn perturbed_margin(dgp: DgpSpec, convention: MarginConvention, eps: f64, seed: u64) -> Self {
        Self::new(WeightKind::PerturbedMargin { dgp, convention, amplitude: (3.0 * eps).sqrt(), seed })
    }

    pub fn with_scale(mut self, scale: f64) -> Self {
        self.scale = scale;
        self
    }

    pub fn with_clamp(mut self, floor: f64, cap: Option<f64>) -> Self {
        self.floor = floor;
        self.cap = cap;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.scale.is_finite() && self.scale > 0.0) {
            return Err(Error::InvalidArgument(format!("weight scale must be positive, got {}", self.scale)));
        }
        if !(self.floor.is_finite() && self.floor >= 0.0) {
            return Err(Error::InvalidArgument(format!("weight floor must be >= 0, got {}", self.floor)));
        }
        if let Some(cap) = self.cap {
            if cap.is_nan() || cap < self.floor {
                return Err(Error::InvalidArgument(format!("weight cap {cap} is below floor {}", self.floor)));
            }
        }
        match &self.kind {
            WeightKind::Constant { c } if !(c.is_finite() && *c > 0.0) => {
                Err(Error::InvalidArgument(format!("constant weight must be positive, got {c}")))
            }
            WeightKind::OraclePrecision { dgp } if !matches!(dgp, DgpSpec::Regression(_)) => {
                Err(Error::InvalidArgument("oracle precision needs a regression generator".into()))
            }
            WeightKind::OracleMargin { dgp, .. } | WeightKind::PerturbedMargin { dgp, .. }
                if matches!(dgp, DgpSpec::Regression(_)) =>
            {
                Err(Error::InvalidArgument("oracle margin needs a classification generator".into()))
            }
            WeightKind::PerturbedMargin { amplitude, .. } if !(amplitude.is_finite() && *amplitude >= 0.0) => {
                Err(Error::InvalidArgument(format!("perturbation amplitude must be >= 0, got {amplitude}")))
            }
            WeightKind::OracleMargin { dgp, .. }
            | WeightKind::OraclePrecision { dgp }
            | WeightKind::PerturbedMargin { dgp, .. } => dgp.validate(),
            WeightKind::EstimatedMargin { eta } => eta.validate(),
            WeightKind::EstimatedPrecision { variance } => variance.validate(),
            WeightKind::Constant { .. } => Ok(()),
        }
    }

    /// Unclamped, unscaled weight.
    pub fn raw(&self, x: &[f64], latent: Option<&Latent>) -> Result<f64> {
        let w = match &self.kind {
            WeightKind::Constant { c } => *c,
            WeightKind::OracleMargin { dgp, convention } => oracle_margin(dgp, *convention, x, latent)?,
            WeightKind::EstimatedMargin { eta } => (eta.predict(x)? - 0.5).abs(),
            WeightKind::OraclePrecision { dgp } => {
                1.0 / oracle_eval(dgp, x, latent)?.sigma2_star.expect("regression oracle")
            }
            WeightKind::EstimatedPrecision { variance } => 1.0 / variance.predict(x)?,
            WeightKind::PerturbedMargin { dgp, convention, amplitude, seed } => {
                (oracle_margin(dgp, *convention, x, latent)? + amplitude * hash_uniform(*seed, x)).max(0.0)
            }
        };
        Ok(w)
    }

    pub fn weight(&self, x: &[f64], latent: Option<&Latent>) -> Result<f64> {
        let w = self.scale * self.raw(x, latent)?;
        let w = w.max(self.floor);
        let w = match self.cap {
            Some(cap) => w.min(cap),
            None => w,
        };
        if !w.is_finite() {
            return Err(Error::Domain(format!("weight is not finite at {x:?}")));
        }
        Ok(w)
    }

    /// Weights for every row of `data`, using its latent labels when present.
    pub fn weights_for(&self, data: &Dataset) -> Result<Vec<f64>> {
        (0..data.len()).map(|i| self.weight(data.x(i), data.latent_at(i))).collect()
    }
}

fn oracle_margin(dgp: &DgpSpec, convention: MarginConvention, x: &[f64], latent: Option<&Latent>) -> Result<f64> {
    let o = oracle_eval(dgp, x, latent)?;
    let m = match convention {
        MarginConvention::Raw => o.margin_raw,
        MarginConvention::Half => o.margin_half,
    };
    Ok(m.expect("classification oracle"))
}

/// Deterministic `x -> [-1, 1]` mixing the seed with the bit patterns of `x`.
fn hash_uniform(seed: u64, x: &[f64]) -> f64 {
    let bytes: Vec<u8> = x.iter().flat_map(|v| v.to_bits().to_le_bytes()).collect();
    let h = splitmix64(seed ^ fnv1a64(&bytes));
    2.0 * ((h >> 11) as f64 / (1u64 << 53) as f64) - 1.0
}
