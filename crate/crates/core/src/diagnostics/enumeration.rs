//! Closed-form expectations on the basis generator.
//!
//! A point is `x = alpha e^j` with `j` uniform over the `d` axes and `alpha`
//! drawn from four segments `s` of mass `m_s`. For thresholds `beta`, let
//! `q_{j,s}` be the fraction of segment `s` on which `sign(alpha - beta_j)`
//! differs from the Bayes label (0 or 1 on atoms, linear in `beta_j` on the
//! uniform bands). On that set the excess loss
//! `dl = 1{f(x) != y} - 1{f*(x) != y}` is `+1` with probability
//! `(1 + omega(x)) / 2` and `-1` otherwise, with `omega = |2 eta - 1|`;
//! elsewhere it is 0. For a weight `w` constant on each segment:
//!
//! ```text
//! E[w dl]     = (1/d) sum_j sum_s m_s q_{j,s} w_s omega_s
//! E[(w dl)^2] = (1/d) sum_j sum_s m_s q_{j,s} w_s^2
//! ```
//!
//! [`excess_risk_from_eta`] computes `E[dl]` from `P(y = +1 | x) = eta`
//! directly rather than through the stored margin, which makes the
//! label-noise identity `E[dl] = E[omega 1{f != f*}]` a real check.

use crate::dgp::{BasisDgpSpec, SegmentInfo, ATOM_AMPLITUDE};
use crate::error::{Error, Result};
use crate::models::ThresholdHypothesis;
use crate::pipeline::{WeightKind, WeightModel};

/// One segment on one axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentTerm {
    pub axis: usize,
    pub info: SegmentInfo,
    /// `m_s / d`.
    pub prob: f64,
    /// `q_{j,s}`.
    pub disagree: f64,
}

pub fn segment_terms(spec: &BasisDgpSpec, h: &ThresholdHypothesis) -> Result<Vec<SegmentTerm>> {
    spec.validate()?;
    if h.beta.len() != spec.d {
        return Err(Error::DimensionMismatch { expected: spec.d, got: h.beta.len() });
    }
    let d = spec.d as f64;
    let segs = spec.segments();
    Ok(h.beta
        .iter()
        .enumerate()
        .flat_map(|(axis, &b)| {
            segs.iter().map(move |&info| SegmentTerm {
                axis,
                info,
                prob: info.mass / d,
                disagree: info.disagreement(b),
            })
        })
        .collect())
}

/// Weight of a segment, for weight models that are constant on segments.
pub fn segment_weight(spec: &BasisDgpSpec, weight: &WeightModel, term: &SegmentTerm) -> Result<f64> {
    match weight.kind {
        WeightKind::Constant { .. } | WeightKind::OracleMargin { .. } => {}
        _ => {
            return Err(Error::Unsupported("exact enumeration needs weights that are constant on each segment".into()))
        }
    }
    let alpha = if term.info.is_atom() {
        term.info.low.signum() * ATOM_AMPLITUDE
    } else {
        0.5 * (term.info.low + term.info.high)
    };
    let mut x = vec![0.0; spec.d];
    x[term.axis] = alpha;
    weight.weight(&x, None)
}

/// `(E[w dl], E[(w dl)^2])`.
pub fn weighted_moments(spec: &BasisDgpSpec, h: &ThresholdHypothesis, weight: &WeightModel) -> Result<(f64, f64)> {
    let mut first = 0.0;
    let mut second = 0.0;
    for t in segment_terms(spec, h)? {
        let w = segment_weight(spec, weight, &t)?;
        let p = t.prob * t.disagree;
        first += p * w * t.info.margin_raw;
        second += p * w * w;
    }
    Ok((first, second))
}

/// `E[omega^power 1{f != f*}]` with `omega = |2 eta - 1|`.
pub fn margin_moment(spec: &BasisDgpSpec, h: &ThresholdHypothesis, power: i32) -> Result<f64> {
    Ok(segment_terms(spec, h)?.iter().map(|t| t.prob * t.disagree * t.info.margin_raw.powi(power)).sum())
}

/// `E[dl]`, from the label probabilities.
pub fn excess_risk_from_eta(spec: &BasisDgpSpec, h: &ThresholdHypothesis) -> Result<f64> {
    Ok(segment_terms(spec, h)?
        .iter()
        .map(|t| {
            let p_right = if t.info.bayes_label > 0.0 { t.info.eta } else { 1.0 - t.info.eta };
            t.prob * t.disagree * (p_right - (1.0 - p_right))
        })
        .sum())
}

/// `P(f != f*)`.
pub fn disagreement(spec: &BasisDgpSpec, h: &ThresholdHypothesis) -> Result<f64> {
    margin_moment(spec, h, 0)
}

/// `P(f != f* | omega > threshold)`, `None` if the region has no mass.
pub fn conditional_error_above(spec: &BasisDgpSpec, h: &ThresholdHypothesis, threshold: f64) -> Result<Option<f64>> {
    let mut num = 0.0;
    let mut den = 0.0;
    for t in segment_terms(spec, h)? {
        if t.info.margin_raw > threshold {
            num += t.prob * t.disagree;
            den += t.prob;
        }
    }
    Ok((den > 0.0).then(|| num / den))
}

/// `P(omega < c)`.
pub fn low_margin_mass(spec: &BasisDgpSpec, c: f64) -> f64 {
    spec.segments().iter().filter(|s| s.margin_raw < c).map(|s| s.mass).sum()
}
