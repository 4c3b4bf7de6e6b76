//! Axis-supported lower-bound construction.
//!
//! A sample picks a coordinate `j` uniformly from `0..d` and an amplitude
//! `alpha` from four segments, then sets `x = alpha e^j`:
//!
//! | segment      | alpha          | mass           | eta*(x)       | margin_raw |
//! |--------------|----------------|----------------|---------------|------------|
//! | `PosAtom`    | `0.1`          | `g/32`         | `1`           | `1`        |
//! | `NegAtom`    | `-0.1`         | `g/32`         | `0`           | `1`        |
//! | `PosBand`    | `U(1, 2)`      | `1 - 3g/32`    | `(1 + g)/2`   | `g`        |
//! | `NegBand`    | `U(-2, -1)`    | `g/32`         | `0`           | `1`        |
//!
//! Labels are `+1` with probability `eta*(x)`. The Bayes classifier is
//! `sign(alpha)`, so the minimum raw margin is `g` and it is attained on the
//! heavy, nearly pure-noise band `[1, 2]`.
//!
//! Threshold predictors `sign(alpha - beta_j)` are piecewise constant in
//! `beta_j`, so every risk functional reduces to a finite sum over segments:
//! an atom contributes its mass when it is misclassified, a band contributes
//! its mass times the misclassified fraction of its length.

use num_bigint::BigInt;
use num_rational::BigRational;
use serde::{Deserialize, Serialize};

use super::sign;
use crate::error::{Error, Result};
use crate::rng::{stream, uniform, uniform_range};

pub const ATOM_AMPLITUDE: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BasisDgpSpec {
    pub d: usize,
    pub gamma: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BasisSegment {
    PosAtom,
    NegAtom,
    PosBand,
    NegBand,
}

/// Closed-form description of one segment of a single coordinate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentInfo {
    pub segment: BasisSegment,
    /// Probability of the segment given the coordinate.
    pub mass: f64,
    pub low: f64,
    pub high: f64,
    pub eta: f64,
    pub bayes_label: f64,
    pub margin_raw: f64,
}

impl SegmentInfo {
    pub fn is_atom(&self) -> bool {
        self.low == self.high
    }

    /// Fraction of this segment's mass on which `sign(alpha - beta)`
    /// disagrees with the Bayes label.
    pub fn disagreement(&self, beta: f64) -> f64 {
        // Fraction of the segment with alpha < beta (predicted -1).
        let below = if self.is_atom() {
            if self.low < beta {
                1.0
            } else {
                0.0
            }
        } else {
            ((beta - self.low) / (self.high - self.low)).clamp(0.0, 1.0)
        };
        if self.bayes_label > 0.0 {
            below
        } else {
            1.0 - below
        }
    }
}

impl BasisDgpSpec {
    pub fn new(d: usize, gamma: f64) -> Self {
        Self { d, gamma }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return Err(Error::InvalidSpec("basis dimension d must be >= 1".into()));
        }
        // Masses and eta* stay valid on [0, 1]; the ERM failure mechanism
        // needs gamma < 1/12 but the enumeration experiments use larger values.
        if !(self.gamma.is_finite() && (0.0..=1.0).contains(&self.gamma)) {
            return Err(Error::InvalidSpec(format!("gamma {} not in [0, 1]", self.gamma)));
        }
        let total: BigRational = self.masses_exact().into_iter().sum();
        assert_eq!(total, BigRational::from_integer(BigInt::from(1)), "segment masses must sum to 1");
        Ok(())
    }

    /// Segment masses in exact rational arithmetic, in
    /// `[PosAtom, NegAtom, PosBand, NegBand]` order.
    pub fn masses_exact(&self) -> [BigRational; 4] {
        let g = BigRational::from_float(self.gamma).expect("finite gamma");
        let one = BigRational::from_integer(BigInt::from(1));
        let small = &g / BigRational::from_integer(BigInt::from(32));
        let three = BigRational::from_integer(BigInt::from(3));
        [small.clone(), small.clone(), one - three * &small, small]
    }

    pub fn segments(&self) -> [SegmentInfo; 4] {
        let g = self.gamma;
        let small = g / 32.0;
        let band_eta = (1.0 + g) / 2.0;
        // Margins are stated exactly; `|2 eta - 1|` would round the band's.
        let info = |segment, mass, low, high, eta: f64, margin_raw| SegmentInfo {
            segment,
            mass,
            low,
            high,
            eta,
            bayes_label: sign(eta - 0.5),
            margin_raw,
        };
        [
            info(BasisSegment::PosAtom, small, ATOM_AMPLITUDE, ATOM_AMPLITUDE, 1.0, 1.0),
            info(BasisSegment::NegAtom, small, -ATOM_AMPLITUDE, -ATOM_AMPLITUDE, 0.0, 1.0),
            info(BasisSegment::PosBand, 1.0 - 3.0 * small, 1.0, 2.0, band_eta, g),
            info(BasisSegment::NegBand, small, -2.0, -1.0, 0.0, 1.0),
        ]
    }

    pub fn segment_info(&self, segment: BasisSegment) -> SegmentInfo {
        self.segments().into_iter().find(|s| s.segment == segment).expect("all segments listed")
    }

    /// Segment containing amplitude `alpha`.
    pub fn segment_of(&self, alpha: f64) -> Result<BasisSegment> {
        let a = alpha.abs();
        let seg = if a == ATOM_AMPLITUDE {
            if alpha > 0.0 {
                BasisSegment::PosAtom
            } else {
                BasisSegment::NegAtom
            }
        } else if (1.0..=2.0).contains(&a) {
            if alpha > 0.0 {
                BasisSegment::PosBand
            } else {
                BasisSegment::NegBand
            }
        } else {
            return Err(Error::Domain(format!("amplitude {alpha} is not on the basis support")));
        };
        Ok(seg)
    }

    /// Coordinate and amplitude of a support point `alpha e^j`.
    pub fn locate(&self, x: &[f64]) -> Result<(usize, f64)> {
        if x.len() != self.d {
            return Err(Error::DimensionMismatch { expected: self.d, got: x.len() });
        }
        let mut found = None;
        for (j, &v) in x.iter().enumerate() {
            if v != 0.0 {
                if found.is_some() {
                    return Err(Error::Domain("point is not on a coordinate axis".into()));
                }
                found = Some((j, v));
            }
        }
        let (j, alpha) = found.ok_or_else(|| Error::Domain("origin is not on the support".into()))?;
        self.segment_of(alpha)?;
        Ok((j, alpha))
    }

    pub fn eta_at(&self, alpha: f64) -> Result<f64> {
        Ok(self.segment_info(self.segment_of(alpha)?).eta)
    }

    pub fn margin_raw_at(&self, alpha: f64) -> Result<f64> {
        Ok(self.segment_info(self.segment_of(alpha)?).margin_raw)
    }

    pub(crate) fn draw(&self, n: usize, seed: u64) -> (Vec<f64>, Vec<f64>, Vec<usize>) {
        let mut rng = stream(seed);
        let segs = self.segments();
        let mut xs = vec![0.0; n * self.d];
        let mut ys = Vec::with_capacity(n);
        let mut axes = Vec::with_capacity(n);
        for i in 0..n {
            let j = (uniform(&mut rng) * self.d as f64) as usize;
            let j = j.min(self.d - 1);
            let u = uniform(&mut rng);
            let mut acc = 0.0;
            let mut seg = &segs[2];
            for s in &segs {
                acc += s.mass;
                if u < acc {
                    seg = s;
                    break;
                }
            }
            let alpha = if seg.is_atom() { seg.low } else { uniform_range(&mut rng, seg.low, seg.high) };
            let y = if uniform(&mut rng) < seg.eta { 1.0 } else { -1.0 };
            xs[i * self.d + j] = alpha;
            ys.push(y);
            axes.push(j);
        }
        (xs, ys, axes)
    }
}
