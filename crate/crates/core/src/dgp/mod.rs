//! Synthetic data-generating processes and their oracles.
//!
//! Three families are provided:
//!
//! * [`RegressionDgpSpec`]: `x ~ U[x_low, x_high]`, `y = x sin x + sqrt(s(x)) * xi`
//!   with `s(x) = 0.09 (1 + x^2)` and unit-variance noise `xi`.
//! * [`ClassificationDgpSpec`]: a four-cluster Gaussian mixture with shared
//!   covariance whose `0'` cluster carries label noise.
//! * [`BasisDgpSpec`]: the axis-supported lower-bound construction used for
//!   exact enumeration of risks.
//!
//! Margins are exposed under two names. `margin_raw = |2 eta - 1|` is the
//! probability gap `2 P(y = f*(x) | x) - 1`; `margin_half = |eta - 1/2|` is
//! half of it. Consumers state which one they use.

mod basis;
mod classification;
mod regression;

pub use basis::{BasisDgpSpec, BasisSegment, SegmentInfo, ATOM_AMPLITUDE};
pub use classification::{ClassificationDgpSpec, Cluster, ClusterId};
pub use regression::{NoiseKind, RegressionDgpSpec, VarianceLaw};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::fnv1a64;

/// Any of the supported generators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DgpSpec {
    Regression(RegressionDgpSpec),
    Classification(ClassificationDgpSpec),
    Basis(BasisDgpSpec),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DgpFamily {
    Regression,
    Classification,
    Basis,
    /// Data assembled by hand rather than drawn from a generator.
    External,
}

/// Per-sample latent variable retained by the generators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Latent {
    Cluster(ClusterId),
    /// Zero-based coordinate `j` of a basis sample `x = alpha e^j`.
    Axis(usize),
}

impl std::fmt::Display for Latent {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Latent::Cluster(c) => write!(f, "{c}"),
            Latent::Axis(j) => write!(f, "{j}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub family: DgpFamily,
    pub spec_digest: u64,
    pub seed: u64,
    pub n: usize,
}

/// An immutable labelled sample, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    dim: usize,
    xs: Vec<f64>,
    ys: Vec<f64>,
    latent: Option<Vec<Latent>>,
    provenance: Provenance,
}

impl Dataset {
    /// Assemble a dataset from flat row-major features.
    pub fn from_parts(
        dim: usize,
        xs: Vec<f64>,
        ys: Vec<f64>,
        latent: Option<Vec<Latent>>,
        provenance: Provenance,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument("feature dimension must be >= 1".into()));
        }
        if xs.len() != ys.len() * dim {
            return Err(Error::DimensionMismatch { expected: ys.len() * dim, got: xs.len() });
        }
        if let Some(l) = &latent {
            if l.len() != ys.len() {
                return Err(Error::DimensionMismatch { expected: ys.len(), got: l.len() });
            }
        }
        if matches!(provenance.family, DgpFamily::Classification | DgpFamily::Basis)
            && ys.iter().any(|&y| y != 1.0 && y != -1.0)
        {
            return Err(Error::InvalidArgument("classification labels must be -1 or +1".into()));
        }
        Ok(Self { dim, xs, ys, latent, provenance })
    }

    /// Hand-built dataset with `External` provenance.
    pub fn external(dim: usize, xs: Vec<f64>, ys: Vec<f64>) -> Result<Self> {
        let n = ys.len();
        Self::from_parts(dim, xs, ys, None, Provenance { family: DgpFamily::External, spec_digest: 0, seed: 0, n })
    }

    pub fn len(&self) -> usize {
        self.ys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ys.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn x(&self, i: usize) -> &[f64] {
        &self.xs[i * self.dim..(i + 1) * self.dim]
    }

    #[inline]
    pub fn y(&self, i: usize) -> f64 {
        self.ys[i]
    }

    pub fn xs(&self) -> &[f64] {
        &self.xs
    }

    pub fn ys(&self) -> &[f64] {
        &self.ys
    }

    pub fn latent(&self) -> Option<&[Latent]> {
        self.latent.as_deref()
    }

    pub fn latent_at(&self, i: usize) -> Option<&Latent> {
        self.latent.as_ref().map(|l| &l[i])
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    /// New dataset holding the given rows, in the given order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let mut xs = Vec::with_capacity(indices.len() * self.dim);
        let mut ys = Vec::with_capacity(indices.len());
        for &i in indices {
            xs.extend_from_slice(self.x(i));
            ys.push(self.ys[i]);
        }
        let latent = self.latent.as_ref().map(|l| indices.iter().map(|&i| l[i]).collect());
        Dataset { dim: self.dim, xs, ys, latent, provenance: self.provenance }
    }
}

/// Oracle quantities at a point. Fields that do not apply to the generator
/// family are `None`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct OracleEval {
    pub f_star: Option<f64>,
    pub sigma2_star: Option<f64>,
    pub eta_star: Option<f64>,
    pub margin_raw: Option<f64>,
    pub margin_half: Option<f64>,
    pub bayes_label: Option<f64>,
}

impl OracleEval {
    pub(crate) fn from_eta(eta: f64) -> Self {
        OracleEval {
            eta_star: Some(eta),
            margin_raw: Some((2.0 * eta - 1.0).abs()),
            margin_half: Some((eta - 0.5).abs()),
            bayes_label: Some(sign(eta - 0.5)),
            ..Default::default()
        }
    }
}

/// `+1` if `t >= 0`, else `-1`.
#[inline]
pub fn sign(t: f64) -> f64 {
    if t >= 0.0 {
        1.0
    } else {
        -1.0
    }
}

impl DgpSpec {
    pub fn family(&self) -> DgpFamily {
        match self {
            DgpSpec::Regression(_) => DgpFamily::Regression,
            DgpSpec::Classification(_) => DgpFamily::Classification,
            DgpSpec::Basis(_) => DgpFamily::Basis,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            DgpSpec::Regression(_) => 1,
            DgpSpec::Classification(_) => 2,
            DgpSpec::Basis(b) => b.d,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            DgpSpec::Regression(s) => s.validate(),
            DgpSpec::Classification(s) => s.validate(),
            DgpSpec::Basis(s) => s.validate(),
        }
    }

    /// Canonical JSON: field order follows the type definitions.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("spec serialization is infallible")
    }

    /// FNV-1a hash of the canonical JSON.
    pub fn digest(&self) -> u64 {
        fnv1a64(self.canonical_json().as_bytes())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: DgpSpec = serde_json::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn sample(&self, n: usize, seed: u64) -> Result<Dataset> {
        match self {
            DgpSpec::Regression(s) => sample_regression(s, n, seed),
            DgpSpec::Classification(s) => sample_classification(s, n, seed),
            DgpSpec::Basis(s) => sample_basis(s, n, seed),
        }
    }

    pub fn oracle(&self, x: &[f64], latent: Option<&Latent>) -> Result<OracleEval> {
        oracle_eval(self, x, latent)
    }
}

fn check_n(n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::InvalidArgument("sample size must be >= 1".into()));
    }
    Ok(())
}

pub fn sample_regression(spec: &RegressionDgpSpec, n: usize, seed: u64) -> Result<Dataset> {
    spec.validate()?;
    check_n(n)?;
    let (xs, ys) = spec.draw(n, seed);
    let digest = DgpSpec::Regression(spec.clone()).digest();
    Dataset::from_parts(1, xs, ys, None, Provenance { family: DgpFamily::Regression, spec_digest: digest, seed, n })
}

pub fn sample_classification(spec: &ClassificationDgpSpec, n: usize, seed: u64) -> Result<Dataset> {
    spec.validate()?;
    check_n(n)?;
    let draw = spec.draw(n, seed);
    let digest = DgpSpec::Classification(spec.clone()).digest();
    let latent = draw.clusters.into_iter().map(Latent::Cluster).collect();
    Dataset::from_parts(
        2,
        draw.xs,
        draw.ys,
        Some(latent),
        Provenance { family: DgpFamily::Classification, spec_digest: digest, seed, n },
    )
}

pub fn sample_basis(spec: &BasisDgpSpec, n: usize, seed: u64) -> Result<Dataset> {
    spec.validate()?;
    check_n(n)?;
    let (xs, ys, axes) = spec.draw(n, seed);
    let digest = DgpSpec::Basis(spec.clone()).digest();
    Dataset::from_parts(
        spec.d,
        xs,
        ys,
        Some(axes.into_iter().map(Latent::Axis).collect()),
        Provenance { family: DgpFamily::Basis, spec_digest: digest, seed, n },
    )
}

pub fn oracle_eval(spec: &DgpSpec, x: &[f64], latent: Option<&Latent>) -> Result<OracleEval> {
    if x.len() != spec.dim() {
        return Err(Error::DimensionMismatch { expected: spec.dim(), got: x.len() });
    }
    match spec {
        DgpSpec::Regression(s) => Ok(OracleEval {
            f_star: Some(RegressionDgpSpec::mean(x[0])),
            sigma2_star: Some(s.variance(x[0])),
            ..Default::default()
        }),
        DgpSpec::Classification(s) => {
            let cluster = match latent {
                Some(Latent::Cluster(c)) => *c,
                Some(Latent::Axis(_)) => {
                    return Err(Error::InvalidArgument("axis latent given to a cluster mixture".into()))
                }
                None => return Err(Error::MissingLatent),
            };
            Ok(OracleEval::from_eta(s.eta_star(x, cluster)))
        }
        DgpSpec::Basis(s) => {
            let (_, alpha) = s.locate(x)?;
            let seg = s.segment_info(s.segment_of(alpha)?);
            Ok(OracleEval {
                margin_raw: Some(seg.margin_raw),
                margin_half: Some(0.5 * seg.margin_raw),
                ..OracleEval::from_eta(seg.eta)
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spec_json_round_trip_and_digest() {
        let spec = DgpSpec::Classification(ClassificationDgpSpec::section52());
        let text = spec.canonical_json();
        let back = DgpSpec::from_json(&text).unwrap();
        assert_eq!(back, spec);
        assert_eq!(back.digest(), spec.digest());
        assert!(text.contains("\"covariance\":[2.0,0.5,0.5,2.0]"));
        assert_eq!(DgpSpec::from_json(r#"{"kind":"classification"}"#).unwrap(), spec);
        let noisier = DgpSpec::from_json(r#"{"kind":"classification","p_flip":0.4}"#).unwrap();
        assert!(matches!(noisier, DgpSpec::Classification(c) if c.p_flip == 0.4 && c.clusters.len() == 4));
    }

    #[test]
    fn unknown_spec_keys_rejected() {
        let bad = r#"{"kind":"basis","d":1,"gamma":0.05,"extra":1}"#;
        assert!(DgpSpec::from_json(bad).is_err());
    }

    #[test]
    fn subset_keeps_rows() {
        let ds = DgpSpec::Basis(BasisDgpSpec::new(2, 0.05)).sample(10, 1).unwrap();
        let sub = ds.subset(&[3, 1]);
        assert_eq!(sub.x(0), ds.x(3));
        assert_eq!(sub.y(1), ds.y(1));
        assert_eq!(sub.latent_at(0), ds.latent_at(3));
    }

    #[test]
    fn zero_samples_rejected() {
        let spec = DgpSpec::Regression(RegressionDgpSpec::default());
        assert!(matches!(spec.sample(0, 1), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn oracle_dimension_checked() {
        let spec = DgpSpec::Regression(RegressionDgpSpec::default());
        assert!(matches!(oracle_eval(&spec, &[1.0, 2.0], None), Err(Error::DimensionMismatch { .. })));
    }
}
