use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{stream, uniform, Gaussian};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ClusterId {
    #[serde(rename = "0")]
    Zero,
    /// The label-noise cluster.
    #[serde(rename = "0'")]
    ZeroPrime,
    #[serde(rename = "1")]
    One,
    #[serde(rename = "1'")]
    OnePrime,
}

impl ClusterId {
    pub fn is_positive(self) -> bool {
        matches!(self, ClusterId::One | ClusterId::OnePrime)
    }
}

impl std::fmt::Display for ClusterId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ClusterId::Zero => "0",
            ClusterId::ZeroPrime => "0'",
            ClusterId::One => "1",
            ClusterId::OnePrime => "1'",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Cluster {
    pub id: ClusterId,
    pub prior: f64,
    pub mean: [f64; 2],
}

/// Gaussian mixture with shared covariance. Labels start as the Bayes
/// decision of the cluster posterior `phi*(x) = P(cluster in {1, 1'} | x)`
/// and are flipped with probability `p_flip` inside cluster `0'`.
///
/// Omitted JSON fields take their [`ClassificationDgpSpec::section52`] values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassificationDgpSpec {
    pub clusters: Vec<Cluster>,
    /// Row-major 2x2 covariance.
    pub covariance: [f64; 4],
    pub p_flip: f64,
}

pub(crate) struct ClassificationDraw {
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    pub clusters: Vec<ClusterId>,
}

impl Default for ClassificationDgpSpec {
    fn default() -> Self {
        Self::section52()
    }
}

impl ClassificationDgpSpec {
    /// Four clusters on the horizontal axis with the noisy `0'` cluster
    /// holding half of the mass, `p_flip = 0.49`.
    pub fn section52() -> Self {
        Self {
            clusters: vec![
                Cluster { id: ClusterId::ZeroPrime, prior: 0.5, mean: [-10.0, 0.0] },
                Cluster { id: ClusterId::Zero, prior: 0.25, mean: [-3.0, 0.0] },
                Cluster { id: ClusterId::One, prior: 0.20, mean: [3.0, 0.0] },
                Cluster { id: ClusterId::OnePrime, prior: 0.05, mean: [12.0, 0.0] },
            ],
            covariance: [2.0, 0.5, 0.5, 2.0],
            p_flip: 0.49,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.clusters.is_empty() {
            return Err(Error::InvalidSpec("no clusters".into()));
        }
        let mut seen = Vec::new();
        for c in &self.clusters {
            if seen.contains(&c.id) {
                return Err(Error::InvalidSpec(format!("duplicate cluster {}", c.id)));
            }
            seen.push(c.id);
            if !(c.prior.is_finite() && (0.0..=1.0).contains(&c.prior)) {
                return Err(Error::InvalidSpec(format!("prior of {} not in [0, 1]", c.id)));
            }
            if !c.mean.iter().all(|m| m.is_finite()) {
                return Err(Error::InvalidSpec(format!("mean of {} not finite", c.id)));
            }
        }
        let total: f64 = self.clusters.iter().map(|c| c.prior).sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidSpec(format!("priors sum to {total}, not 1")));
        }
        let [a, b, c, d] = self.covariance;
        if !self.covariance.iter().all(|v| v.is_finite()) || b != c {
            return Err(Error::InvalidSpec("covariance must be finite and symmetric".into()));
        }
        // Both eigenvalues positive iff trace > 0 and det > 0 for a symmetric 2x2.
        if !(a + d > 0.0 && a * d - b * c > 0.0) {
            return Err(Error::InvalidSpec("covariance is not positive definite".into()));
        }
        if !(0.0..0.5).contains(&self.p_flip) {
            return Err(Error::InvalidSpec(format!("p_flip {} not in [0, 0.5)", self.p_flip)));
        }
        Ok(())
    }

    fn precision(&self) -> [f64; 3] {
        let [a, b, _, d] = self.covariance;
        let det = a * d - b * b;
        [d / det, -b / det, a / det]
    }

    /// Lower Cholesky factor `[l11, l21, l22]`.
    fn cholesky(&self) -> [f64; 3] {
        let [a, b, _, d] = self.covariance;
        let l11 = a.sqrt();
        let l21 = b / l11;
        [l11, l21, (d - l21 * l21).sqrt()]
    }

    /// `phi*(x) = P(cluster in {1, 1'} | x)` by Bayes' rule; the shared
    /// normalizing constant cancels.
    pub fn phi_star(&self, x: &[f64]) -> f64 {
        let [p11, p12, p22] = self.precision();
        let logs: Vec<(bool, f64)> = self
            .clusters
            .iter()
            .filter(|c| c.prior > 0.0)
            .map(|c| {
                let dx = x[0] - c.mean[0];
                let dy = x[1] - c.mean[1];
                let q = p11 * dx * dx + 2.0 * p12 * dx * dy + p22 * dy * dy;
                (c.id.is_positive(), c.prior.ln() - 0.5 * q)
            })
            .collect();
        let top = logs.iter().map(|&(_, l)| l).fold(f64::NEG_INFINITY, f64::max);
        let (mut pos, mut all) = (0.0, 0.0);
        for (positive, l) in logs {
            let w = (l - top).exp();
            all += w;
            if positive {
                pos += w;
            }
        }
        pos / all
    }

    /// Label before noise injection, in `{-1, +1}`.
    pub fn initial_label(&self, x: &[f64]) -> f64 {
        if self.phi_star(x) > 0.5 {
            1.0
        } else {
            -1.0
        }
    }

    /// `P(y = +1 | x, cluster)`: the noiseless label outside `0'`; inside
    /// `0'` the noiseless label keeps probability `1 - p_flip`.
    pub fn eta_star(&self, x: &[f64], cluster: ClusterId) -> f64 {
        let positive = self.phi_star(x) > 0.5;
        match (cluster, positive) {
            (ClusterId::ZeroPrime, false) => self.p_flip,
            (ClusterId::ZeroPrime, true) => 1.0 - self.p_flip,
            (_, true) => 1.0,
            (_, false) => 0.0,
        }
    }

    pub(crate) fn draw(&self, n: usize, seed: u64) -> ClassificationDraw {
        let mut rng = stream(seed);
        let mut gauss = Gaussian::new();
        let [l11, l21, l22] = self.cholesky();
        let mut xs = Vec::with_capacity(2 * n);
        let mut ys = Vec::with_capacity(n);
        let mut clusters = Vec::with_capacity(n);
        for _ in 0..n {
            let u = uniform(&mut rng);
            let mut acc = 0.0;
            let mut chosen = self.clusters.last().expect("validated non-empty");
            for c in &self.clusters {
                acc += c.prior;
                if u < acc {
                    chosen = c;
                    break;
                }
            }
            let z1 = gauss.sample(&mut rng);
            let z2 = gauss.sample(&mut rng);
            let x = [chosen.mean[0] + l11 * z1, chosen.mean[1] + l21 * z1 + l22 * z2];
            let mut y = self.initial_label(&x);
            let flip = uniform(&mut rng);
            if chosen.id == ClusterId::ZeroPrime && flip < self.p_flip {
                y = -y;
            }
            xs.extend_from_slice(&x);
            ys.push(y);
            clusters.push(chosen.id);
        }
        ClassificationDraw { xs, ys, clusters }
    }
}
