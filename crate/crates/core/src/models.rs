//! Hypotheses and differentiable losses.
//!
//! [`MlpParams`] is a one-hidden-layer tanh network `in_dim -> hidden -> 1`
//! with one of three output heads; gradients are computed by hand. The
//! parameters live in one flat vector laid out as
//! `[W1 (hidden x in_dim, row-major), b1 (hidden), w2 (hidden), b2]`.
//!
//! [`ThresholdHypothesis`] is the finite-VC class `sign(alpha - beta_j)` used
//! with the basis generator.

use serde::{Deserialize, Serialize};

use crate::dgp::{sign, Dataset};
use crate::error::{Error, Result};
use crate::exec::{map_chunks, Execution};
#[cfg(test)]
use crate::rng::uniform;
use crate::rng::{stream, uniform_range};

const CHUNK: usize = 256;
/// Probability head outputs are kept inside `[P_EPS, 1 - P_EPS]`.
const P_EPS: f64 = 1e-12;

pub const DEFAULT_VAR_FLOOR: f64 = 1e-3;
pub const DEFAULT_VAR_CEIL: f64 = 1e3;

/// Anything that maps a feature vector to a scalar.
pub trait Predictor: Sync {
    fn input_dim(&self) -> usize;

    /// Head-transformed output. No dimension check.
    fn value(&self, x: &[f64]) -> f64;

    /// Predicted class in `{-1, +1}`.
    fn label(&self, x: &[f64]) -> f64 {
        sign(self.value(x))
    }

    fn predict(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.input_dim() {
            return Err(Error::DimensionMismatch { expected: self.input_dim(), got: x.len() });
        }
        Ok(self.value(x))
    }
}

/// Closure adapter, handy for oracles and shifted oracles.
pub struct FnPredictor<F> {
    dim: usize,
    f: F,
}

impl<F: Fn(&[f64]) -> f64 + Sync> FnPredictor<F> {
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, f }
    }
}

impl<F: Fn(&[f64]) -> f64 + Sync> Predictor for FnPredictor<F> {
    fn input_dim(&self) -> usize {
        self.dim
    }

    fn value(&self, x: &[f64]) -> f64 {
        (self.f)(x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Head {
    /// Mean regression.
    Identity,
    /// Probability `eta(x)` in `(0, 1)`.
    Sigmoid,
    /// Variance `clamp(exp(o), var_floor, var_ceil)`.
    Variance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    Squared,
    WeightedSquared,
    CrossEntropy,
    WeightedCrossEntropy,
    /// `log s(x) + (y - m(x))^2 / s(x)` with the mean `m` frozen.
    NllFrozenMean,
    /// Evaluation only.
    ZeroOne,
}

impl LossKind {
    pub const DIFFERENTIABLE: [LossKind; 5] = [
        LossKind::Squared,
        LossKind::WeightedSquared,
        LossKind::CrossEntropy,
        LossKind::WeightedCrossEntropy,
        LossKind::NllFrozenMean,
    ];

    pub fn is_differentiable(self) -> bool {
        self != LossKind::ZeroOne
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MlpRecord", into = "MlpRecord")]
pub struct MlpParams {
    in_dim: usize,
    hidden: usize,
    head: Head,
    var_floor: f64,
    var_ceil: f64,
    params: Vec<f64>,
}

/// Serialized form: architecture header plus the flat parameter array.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MlpRecord {
    in_dim: usize,
    hidden: usize,
    head: Head,
    var_floor: f64,
    var_ceil: f64,
    params: Vec<f64>,
}

impl From<MlpParams> for MlpRecord {
    fn from(p: MlpParams) -> Self {
        MlpRecord {
            in_dim: p.in_dim,
            hidden: p.hidden,
            head: p.head,
            var_floor: p.var_floor,
            var_ceil: p.var_ceil,
            params: p.params,
        }
    }
}

impl TryFrom<MlpRecord> for MlpParams {
    type Error = Error;

    fn try_from(r: MlpRecord) -> Result<Self> {
        let p = MlpParams {
            in_dim: r.in_dim,
            hidden: r.hidden,
            head: r.head,
            var_floor: r.var_floor,
            var_ceil: r.var_ceil,
            params: r.params,
        };
        p.validate()?;
        Ok(p)
    }
}

/// Glorot-uniform weights, zero biases.
pub fn mlp_init(in_dim: usize, hidden: usize, head: Head, seed: u64) -> Result<MlpParams> {
    if in_dim == 0 || hidden == 0 {
        return Err(Error::InvalidArgument(format!(
            "network needs in_dim >= 1 and hidden >= 1, got {in_dim} and {hidden}"
        )));
    }
    let mut rng = stream(seed);
    let n = hidden * in_dim + 2 * hidden + 1;
    let mut params = vec![0.0; n];
    let s1 = (6.0 / (in_dim + hidden) as f64).sqrt();
    for w in &mut params[..hidden * in_dim] {
        *w = uniform_range(&mut rng, -s1, s1);
    }
    let s2 = (6.0 / (hidden + 1) as f64).sqrt();
    let w2 = hidden * in_dim + hidden;
    for w in &mut params[w2..w2 + hidden] {
        *w = uniform_range(&mut rng, -s2, s2);
    }
    Ok(MlpParams { in_dim, hidden, head, var_floor: DEFAULT_VAR_FLOOR, var_ceil: DEFAULT_VAR_CEIL, params })
}

/// `tanh` through a single `exp`: absolute error below 1e-15 and about twice
/// as fast as the libm routine, which dominates training time.
#[inline]
fn fast_tanh(z: f64) -> f64 {
    if z > 20.0 {
        return 1.0;
    }
    1.0 - 2.0 / ((2.0 * z).exp() + 1.0)
}

#[inline]
fn sigmoid(o: f64) -> f64 {
    if o >= 0.0 {
        1.0 / (1.0 + (-o).exp())
    } else {
        let e = o.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + e^o)` without overflow.
#[inline]
fn softplus(o: f64) -> f64 {
    o.max(0.0) + (-o.abs()).exp().ln_1p()
}

impl MlpParams {
    pub fn with_variance_bounds(mut self, floor: f64, ceil: f64) -> Result<Self> {
        self.var_floor = floor;
        self.var_ceil = ceil;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.in_dim == 0 || self.hidden == 0 {
            return Err(Error::InvalidArgument("in_dim and hidden must be >= 1".into()));
        }
        let expected = self.hidden * self.in_dim + 2 * self.hidden + 1;
        if self.params.len() != expected {
            return Err(Error::DimensionMismatch { expected, got: self.params.len() });
        }
        if !self.params.iter().all(|p| p.is_finite()) {
            return Err(Error::InvalidArgument("non-finite network parameter".into()));
        }
        if self.head == Head::Variance
            && !(self.var_floor > 0.0 && self.var_ceil >= self.var_floor && self.var_ceil.is_finite())
        {
            return Err(Error::InvalidArgument(format!(
                "variance head needs 0 < var_floor <= var_ceil < inf, got [{}, {}]",
                self.var_floor, self.var_ceil
            )));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("params serialize")
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn head(&self) -> Head {
        self.head
    }

    pub fn var_bounds(&self) -> (f64, f64) {
        (self.var_floor, self.var_ceil)
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    #[inline]
    fn offsets(&self) -> (usize, usize, usize) {
        let b1 = self.hidden * self.in_dim;
        (b1, b1 + self.hidden, b1 + 2 * self.hidden)
    }

    /// Pre-head output `o(x)`, writing hidden activations into `act`.
    #[inline]
    fn forward_into(&self, x: &[f64], act: &mut [f64]) -> f64 {
        let (b1, w2, b2) = self.offsets();
        let p = &self.params;
        let mut o = p[b2];
        for k in 0..self.hidden {
            let row = &p[k * self.in_dim..(k + 1) * self.in_dim];
            let mut z = p[b1 + k];
            for (w, xi) in row.iter().zip(x) {
                z += w * xi;
            }
            let a = fast_tanh(z);
            act[k] = a;
            o += p[w2 + k] * a;
        }
        o
    }

    /// Pre-head output for one input.
    pub fn raw_output(&self, x: &[f64]) -> f64 {
        let mut act = vec![0.0; self.hidden];
        self.forward_into(x, &mut act)
    }

    /// Head transform and its derivative with respect to the pre-head output.
    #[inline]
    fn head_with_slope(&self, o: f64) -> (f64, f64) {
        match self.head {
            Head::Identity => (o, 1.0),
            Head::Sigmoid => {
                let p = sigmoid(o);
                if p < P_EPS {
                    (P_EPS, 0.0)
                } else if p > 1.0 - P_EPS {
                    (1.0 - P_EPS, 0.0)
                } else {
                    (p, p * (1.0 - p))
                }
            }
            Head::Variance => {
                let s = o.exp();
                if s < self.var_floor {
                    (self.var_floor, 0.0)
                } else if s > self.var_ceil {
                    (self.var_ceil, 0.0)
                } else {
                    (s, s)
                }
            }
        }
    }

    pub fn apply_head(&self, o: f64) -> f64 {
        self.head_with_slope(o).0
    }

    /// Per-sample loss and its derivative with respect to the pre-head output.
    #[inline]
    fn sample_loss(&self, kind: LossKind, o: f64, y: f64, frozen: f64) -> (f64, f64) {
        match kind {
            LossKind::Squared | LossKind::WeightedSquared => {
                let (h, slope) = self.head_with_slope(o);
                let target = if self.head == Head::Sigmoid { 0.5 * (y + 1.0) } else { y };
                let r = h - target;
                (r * r, 2.0 * r * slope)
            }
            LossKind::CrossEntropy | LossKind::WeightedCrossEntropy => {
                let t = 0.5 * (y + 1.0);
                (softplus(o) - t * o, sigmoid(o) - t)
            }
            LossKind::NllFrozenMean => {
                let (s, slope) = self.head_with_slope(o);
                let r = y - frozen;
                let q = r * r / s;
                (s.ln() + q, (1.0 / s - q / s) * slope)
            }
            LossKind::ZeroOne => {
                let predicted = sign(self.head_with_slope(o).0 - self.label_cut());
                (if predicted != y { 1.0 } else { 0.0 }, 0.0)
            }
        }
    }

    fn label_cut(&self) -> f64 {
        match self.head {
            Head::Sigmoid => 0.5,
            _ => 0.0,
        }
    }

    fn check_kind(&self, kind: LossKind, frozen: bool) -> Result<()> {
        match kind {
            LossKind::CrossEntropy | LossKind::WeightedCrossEntropy if self.head != Head::Sigmoid => {
                Err(Error::Unsupported("cross-entropy needs the sigmoid head".into()))
            }
            LossKind::NllFrozenMean if self.head != Head::Variance => {
                Err(Error::Unsupported("the likelihood loss needs the variance head".into()))
            }
            LossKind::NllFrozenMean if !frozen => {
                Err(Error::InvalidArgument("the likelihood loss needs a frozen mean".into()))
            }
            _ => Ok(()),
        }
    }
}

impl Predictor for MlpParams {
    fn input_dim(&self) -> usize {
        self.in_dim
    }

    fn value(&self, x: &[f64]) -> f64 {
        self.apply_head(self.raw_output(x))
    }

    fn label(&self, x: &[f64]) -> f64 {
        sign(self.value(x) - self.label_cut())
    }
}

/// Loss value and gradient with respect to the flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct LossGrad {
    pub loss: f64,
    pub grad: Vec<f64>,
}

fn check_weights(weights: &[f64], n: usize) -> Result<()> {
    if weights.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: weights.len() });
    }
    if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w >= 0.0)) {
        return Err(Error::InvalidArgument(format!("sample weights must be finite and >= 0, got {w}")));
    }
    Ok(())
}

/// `(1/n) sum_i w_i l(h; z_i)` and its exact gradient.
///
/// Every kind honours `weights`; the unweighted kinds are meant to be run
/// with unit weights. Samples with zero weight are skipped entirely.
pub fn loss_and_grad(
    h: &MlpParams,
    batch: &Dataset,
    kind: LossKind,
    weights: &[f64],
    frozen_mean: Option<&dyn Predictor>,
) -> Result<LossGrad> {
    loss_and_grad_with(h, batch, kind, weights, frozen_mean, Execution::default())
}

pub fn loss_and_grad_with(
    h: &MlpParams,
    batch: &Dataset,
    kind: LossKind,
    weights: &[f64],
    frozen_mean: Option<&dyn Predictor>,
    exec: Execution,
) -> Result<LossGrad> {
    if !kind.is_differentiable() {
        return Err(Error::UnsupportedGradient(kind));
    }
    let frozen = precompute_frozen(batch, frozen_mean)?;
    prepared_loss_and_grad(h, batch, kind, weights, frozen.as_deref(), exec)
}

/// Frozen-mean predictions for every row, computed once per fit.
pub(crate) fn precompute_frozen(batch: &Dataset, frozen_mean: Option<&dyn Predictor>) -> Result<Option<Vec<f64>>> {
    match frozen_mean {
        None => Ok(None),
        Some(m) => {
            if m.input_dim() != batch.dim() {
                return Err(Error::DimensionMismatch { expected: batch.dim(), got: m.input_dim() });
            }
            Ok(Some((0..batch.len()).map(|i| m.value(batch.x(i))).collect()))
        }
    }
}

pub(crate) fn prepared_loss_and_grad(
    h: &MlpParams,
    batch: &Dataset,
    kind: LossKind,
    weights: &[f64],
    frozen: Option<&[f64]>,
    exec: Execution,
) -> Result<LossGrad> {
    if !kind.is_differentiable() {
        return Err(Error::UnsupportedGradient(kind));
    }
    if batch.dim() != h.in_dim {
        return Err(Error::DimensionMismatch { expected: h.in_dim, got: batch.dim() });
    }
    h.check_kind(kind, frozen.is_some())?;
    let n = batch.len();
    check_weights(weights, n)?;
    if n == 0 {
        return Err(Error::Empty("batch"));
    }

    let (b1, w2, b2) = h.offsets();
    let partials = map_chunks(n, CHUNK, exec, |start, end| {
        let mut grad = vec![0.0; h.params.len()];
        let mut act = vec![0.0; h.hidden];
        let mut loss = 0.0;
        for i in start..end {
            let w = weights[i];
            if w == 0.0 {
                continue;
            }
            let x = batch.x(i);
            let o = h.forward_into(x, &mut act);
            let m = frozen.map_or(0.0, |f| f[i]);
            let (l, dl) = h.sample_loss(kind, o, batch.y(i), m);
            loss += w * l;
            let g_o = w * dl;
            grad[b2] += g_o;
            for k in 0..h.hidden {
                let a = act[k];
                grad[w2 + k] += g_o * a;
                let g_z = g_o * h.params[w2 + k] * (1.0 - a * a);
                grad[b1 + k] += g_z;
                let row = &mut grad[k * h.in_dim..(k + 1) * h.in_dim];
                for (g, xi) in row.iter_mut().zip(x) {
                    *g += g_z * xi;
                }
            }
        }
        (loss, grad)
    });

    let inv_n = 1.0 / n as f64;
    let mut loss = 0.0;
    let mut grad = vec![0.0; h.params.len()];
    for (l, g) in partials {
        loss += l;
        for (acc, v) in grad.iter_mut().zip(&g) {
            *acc += v;
        }
    }
    grad.iter_mut().for_each(|g| *g *= inv_n);
    Ok(LossGrad { loss: loss * inv_n, grad })
}

/// `(1/n) sum_i w_i l(h; z_i)` for any kind, including `ZeroOne`.
pub fn weighted_loss(
    h: &MlpParams,
    batch: &Dataset,
    kind: LossKind,
    weights: &[f64],
    frozen_mean: Option<&dyn Predictor>,
) -> Result<f64> {
    if batch.dim() != h.in_dim {
        return Err(Error::DimensionMismatch { expected: h.in_dim, got: batch.dim() });
    }
    let frozen = precompute_frozen(batch, frozen_mean)?;
    h.check_kind(kind, frozen.is_some())?;
    check_weights(weights, batch.len())?;
    if batch.is_empty() {
        return Err(Error::Empty("batch"));
    }
    let mut act = vec![0.0; h.hidden];
    let mut total = 0.0;
    for i in 0..batch.len() {
        if weights[i] == 0.0 {
            continue;
        }
        let o = h.forward_into(batch.x(i), &mut act);
        let m = frozen.as_ref().map_or(0.0, |f| f[i]);
        total += weights[i] * h.sample_loss(kind, o, batch.y(i), m).0;
    }
    Ok(total / batch.len() as f64)
}

/// Per-coordinate threshold classifier `x = alpha e^j -> sign(alpha - beta_j)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThresholdHypothesis {
    pub beta: Vec<f64>,
}

impl ThresholdHypothesis {
    pub fn new(beta: Vec<f64>) -> Result<Self> {
        if beta.is_empty() || !beta.iter().all(|b| b.is_finite()) {
            return Err(Error::InvalidArgument("thresholds must be finite and non-empty".into()));
        }
        Ok(Self { beta })
    }

    /// Label of amplitude `alpha` on coordinate `j`.
    #[inline]
    pub fn label_on_axis(&self, j: usize, alpha: f64) -> f64 {
        if alpha >= self.beta[j] {
            1.0
        } else {
            -1.0
        }
    }
}

impl Predictor for ThresholdHypothesis {
    fn input_dim(&self) -> usize {
        self.beta.len()
    }

    /// On a coordinate axis (or in one dimension) this is
    /// `sign(alpha - beta_j)`; elsewhere it is the sign of
    /// `sum_j sign(x_j - beta_j)`.
    fn value(&self, x: &[f64]) -> f64 {
        let mut nonzero = x.iter().enumerate().filter(|(_, v)| **v != 0.0);
        match (x.len(), nonzero.next(), nonzero.next()) {
            (1, _, _) => self.label_on_axis(0, x[0]),
            (_, Some((j, &alpha)), None) => self.label_on_axis(j, alpha),
            _ => {
                let votes: f64 = x.iter().zip(&self.beta).map(|(v, b)| if v >= b { 1.0 } else { -1.0 }).sum();
                sign(votes)
            }
        }
    }
}

/// A fitted predictor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Hypothesis {
    Mlp(MlpParams),
    Threshold(ThresholdHypothesis),
}

impl Predictor for Hypothesis {
    fn input_dim(&self) -> usize {
        match self {
            Hypothesis::Mlp(m) => m.input_dim(),
            Hypothesis::Threshold(t) => t.input_dim(),
        }
    }

    fn value(&self, x: &[f64]) -> f64 {
        match self {
            Hypothesis::Mlp(m) => m.value(x),
            Hypothesis::Threshold(t) => t.value(x),
        }
    }

    fn label(&self, x: &[f64]) -> f64 {
        match self {
            Hypothesis::Mlp(m) => m.label(x),
            Hypothesis::Threshold(t) => t.label(x),
        }
    }
}
