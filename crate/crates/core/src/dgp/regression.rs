use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{stream, uniform_range, Gaussian};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum NoiseKind {
    #[default]
    Gaussian,
    /// Standard normal truncated to `(-c2, c2)`, then rescaled to unit
    /// variance. The rescaled noise is bounded by [`RegressionDgpSpec::noise_bound`].
    TruncatedGaussian { c2: f64 },
}

/// Conditional variance law. The heteroscedastic law is the default; the
/// constant law exists for homoscedastic control experiments.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum VarianceLaw {
    /// `0.09 (1 + x^2)`
    #[default]
    Heteroscedastic,
    Constant {
        sigma2: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegressionDgpSpec {
    #[serde(default = "default_low")]
    pub x_low: f64,
    #[serde(default = "default_high")]
    pub x_high: f64,
    #[serde(default)]
    pub noise_kind: NoiseKind,
    #[serde(default)]
    pub variance_law: VarianceLaw,
}

fn default_low() -> f64 {
    0.0
}

fn default_high() -> f64 {
    10.0
}

impl Default for RegressionDgpSpec {
    fn default() -> Self {
        Self { x_low: 0.0, x_high: 10.0, noise_kind: NoiseKind::Gaussian, variance_law: VarianceLaw::Heteroscedastic }
    }
}

const VARIANCE_SCALE: f64 = 0.09;

impl RegressionDgpSpec {
    pub fn truncated(c2: f64) -> Self {
        Self { noise_kind: NoiseKind::TruncatedGaussian { c2 }, ..Self::default() }
    }

    pub fn homoscedastic(sigma2: f64) -> Self {
        Self { variance_law: VarianceLaw::Constant { sigma2 }, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.x_low.is_finite() && self.x_high.is_finite() && self.x_low < self.x_high) {
            return Err(Error::InvalidSpec(format!(
                "need finite x_low < x_high, got [{}, {}]",
                self.x_low, self.x_high
            )));
        }
        if let NoiseKind::TruncatedGaussian { c2 } = self.noise_kind {
            if !(c2.is_finite() && c2 >= 0.1) {
                return Err(Error::InvalidSpec(format!("truncation c2 must be >= 0.1, got {c2}")));
            }
        }
        if let VarianceLaw::Constant { sigma2 } = self.variance_law {
            if !(sigma2.is_finite() && sigma2 > 0.0) {
                return Err(Error::InvalidSpec(format!("sigma2 must be positive, got {sigma2}")));
            }
        }
        Ok(())
    }

    /// `f*(x) = x sin x`
    #[inline]
    pub fn mean(x: f64) -> f64 {
        x * x.sin()
    }

    #[inline]
    pub fn variance(&self, x: f64) -> f64 {
        match self.variance_law {
            VarianceLaw::Heteroscedastic => VARIANCE_SCALE * (1.0 + x * x),
            VarianceLaw::Constant { sigma2 } => sigma2,
        }
    }

    /// Largest conditional variance over `[x_low, x_high]`.
    pub fn max_variance(&self) -> f64 {
        self.variance(self.x_low).max(self.variance(self.x_high))
    }

    /// Smallest conditional variance over `[x_low, x_high]`.
    pub fn min_variance(&self) -> f64 {
        let closest = 0.0_f64.clamp(self.x_low, self.x_high);
        self.variance(closest)
    }

    /// Standard deviation of a standard normal truncated to `(-c, c)`.
    pub fn truncated_sd(c: f64) -> f64 {
        let mass = statrs::function::erf::erf(c / std::f64::consts::SQRT_2);
        let pdf = (-0.5 * c * c).exp() / (std::f64::consts::TAU).sqrt();
        (1.0 - 2.0 * c * pdf / mass).sqrt()
    }

    /// Almost-sure bound on `|xi|`; infinite for Gaussian noise.
    pub fn noise_bound(&self) -> f64 {
        match self.noise_kind {
            NoiseKind::Gaussian => f64::INFINITY,
            NoiseKind::TruncatedGaussian { c2 } => c2 / Self::truncated_sd(c2),
        }
    }

    pub(crate) fn draw(&self, n: usize, seed: u64) -> (Vec<f64>, Vec<f64>) {
        let mut rng = stream(seed);
        let mut gauss = Gaussian::new();
        let scale = match self.noise_kind {
            NoiseKind::Gaussian => 1.0,
            NoiseKind::TruncatedGaussian { c2 } => 1.0 / Self::truncated_sd(c2),
        };
        let mut xs = Vec::with_capacity(n);
        let mut ys = Vec::with_capacity(n);
        for _ in 0..n {
            let x = uniform_range(&mut rng, self.x_low, self.x_high);
            let xi = match self.noise_kind {
                NoiseKind::Gaussian => gauss.sample(&mut rng),
                NoiseKind::TruncatedGaussian { c2 } => loop {
                    let z = gauss.sample(&mut rng);
                    if z.abs() < c2 {
                        break z * scale;
                    }
                },
            };
            xs.push(x);
            ys.push(Self::mean(x) + self.variance(x).sqrt() * xi);
        }
        (xs, ys)
    }
}
