//! Exact weighted 0-1 ERM over thresholds `x -> sign(x - beta)`.
//!
//! Candidates are `x_min - 1`, the midpoints of consecutive distinct sorted
//! values and `x_max + 1`; ties go to the smallest candidate. A single sweep
//! over the sorted points finds every candidate whose running loss is within
//! rounding of the minimum. Those are then re-scored by summing the mistaken
//! weights in input order, so the reported loss (and the tie-break) is exactly
//! what a direct evaluation of each candidate gives.

use serde::{Deserialize, Serialize};

use crate::dgp::{Dataset, Latent};
use crate::error::{Error, Result};
use crate::models::ThresholdHypothesis;
use crate::pipeline::WeightModel;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdPoint {
    pub x: f64,
    pub y: f64,
    pub w: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdFit {
    pub beta: f64,
    /// `sum_i w_i 1{sign(x_i - beta) != y_i}`, not normalized.
    pub loss: f64,
}

/// Weighted mistakes of `sign(x - beta)`, summed in input order.
pub fn threshold_loss(points: &[ThresholdPoint], beta: f64) -> f64 {
    points.iter().filter(|p| (if p.x >= beta { 1.0 } else { -1.0 }) != p.y).map(|p| p.w).sum()
}

fn validate(points: &[ThresholdPoint]) -> Result<()> {
    if points.is_empty() {
        return Err(Error::Empty("threshold ERM input"));
    }
    for p in points {
        if !p.x.is_finite() {
            return Err(Error::InvalidArgument(format!("non-finite threshold input {}", p.x)));
        }
        if p.y != 1.0 && p.y != -1.0 {
            return Err(Error::InvalidArgument(format!("labels must be -1 or +1, got {}", p.y)));
        }
        if !(p.w.is_finite() && p.w >= 0.0) {
            return Err(Error::InvalidArgument(format!("weights must be finite and >= 0, got {}", p.w)));
        }
    }
    Ok(())
}

pub fn exact_threshold_erm(points: &[ThresholdPoint]) -> Result<ThresholdFit> {
    validate(points)?;
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| points[a].x.total_cmp(&points[b].x));

    // Running loss per candidate plus whether the step into it crossed any
    // positive weight (a run of candidates joined by zero-weight groups has
    // identical direct losses).
    let total: f64 = points.iter().map(|p| p.w).sum();
    let mut running: f64 = points.iter().filter(|p| p.y < 0.0).map(|p| p.w).sum();
    let mut cands = vec![(points[order[0]].x - 1.0, running, true)];
    let mut i = 0;
    while i < order.len() {
        let x = points[order[i]].x;
        let mut moved = false;
        while i < order.len() && points[order[i]].x == x {
            let p = points[order[i]];
            if p.w > 0.0 {
                moved = true;
                running += if p.y > 0.0 { p.w } else { -p.w };
            }
            i += 1;
        }
        let beta = if i < order.len() { 0.5 * (x + points[order[i]].x) } else { x + 1.0 };
        cands.push((beta, running, moved));
    }

    let best = cands.iter().map(|c| c.1).fold(f64::INFINITY, f64::min);
    let tol = 4.0 * f64::EPSILON * (points.len() as f64 + 1.0) * total;
    let mut winner: Option<ThresholdFit> = None;
    for &(beta, loss, run_start) in &cands {
        if !run_start || loss > best + tol {
            continue;
        }
        let direct = threshold_loss(points, beta);
        if winner.is_none_or(|w| direct < w.loss) {
            winner = Some(ThresholdFit { beta, loss: direct });
        }
    }
    Ok(winner.expect("at least one candidate"))
}

/// Exact ERM on basis-generator data, one threshold per coordinate.
///
/// Returns the hypothesis and the total unnormalized weighted loss.
/// Coordinates without samples get `beta = 0`.
pub fn exact_basis_erm_weighted(data: &Dataset, weights: &[f64]) -> Result<(ThresholdHypothesis, f64)> {
    if weights.len() != data.len() {
        return Err(Error::DimensionMismatch { expected: data.len(), got: weights.len() });
    }
    let latent = data.latent().ok_or(Error::MissingLatent)?;
    let d = data.dim();
    let mut per_axis: Vec<Vec<ThresholdPoint>> = vec![Vec::new(); d];
    for (i, l) in latent.iter().enumerate() {
        let j = match l {
            Latent::Axis(j) if *j < d => *j,
            _ => return Err(Error::InvalidArgument(format!("row {i} has no coordinate label"))),
        };
        per_axis[j].push(ThresholdPoint { x: data.x(i)[j], y: data.y(i), w: weights[i] });
    }
    let mut beta = vec![0.0; d];
    let mut loss = 0.0;
    for (j, pts) in per_axis.iter().enumerate() {
        if pts.is_empty() {
            continue;
        }
        let fit = exact_threshold_erm(pts)?;
        beta[j] = fit.beta;
        loss += fit.loss;
    }
    Ok((ThresholdHypothesis::new(beta)?, loss))
}

pub fn exact_basis_erm(data: &Dataset, weights: &WeightModel) -> Result<ThresholdHypothesis> {
    weights.validate()?;
    if data.latent().is_none() {
        return Err(Error::MissingLatent);
    }
    let w = weights.weights_for(data)?;
    Ok(exact_basis_erm_weighted(data, &w)?.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dgp::{BasisDgpSpec, DgpSpec};
    use crate::rng::{stream, uniform};
    use rand::Rng;

    fn pts(v: &[(f64, f64, f64)]) -> Vec<ThresholdPoint> {
        v.iter().map(|&(x, y, w)| ThresholdPoint { x, y, w }).collect()
    }

    /// Direct scoring of every candidate, smallest beta first.
    fn brute_force(points: &[ThresholdPoint]) -> ThresholdFit {
        let mut xs: Vec<f64> = points.iter().map(|p| p.x).collect();
        xs.sort_by(f64::total_cmp);
        xs.dedup();
        let mut cands = vec![xs[0] - 1.0];
        cands.extend(xs.windows(2).map(|w| 0.5 * (w[0] + w[1])));
        cands.push(xs[xs.len() - 1] + 1.0);
        let mut best = ThresholdFit { beta: f64::NAN, loss: f64::INFINITY };
        for b in cands {
            let l = threshold_loss(points, b);
            if l < best.loss {
                best = ThresholdFit { beta: b, loss: l };
            }
        }
        best
    }

    #[test]
    fn worked_examples() {
        let f = exact_threshold_erm(&pts(&[(1.0, 1.0, 1.0), (2.0, 1.0, 1.0)])).unwrap();
        assert_eq!(f, ThresholdFit { beta: 0.0, loss: 0.0 });
        let f = exact_threshold_erm(&pts(&[(1.0, 1.0, 1.0), (2.0, -1.0, 1.0), (3.0, 1.0, 1.0)])).unwrap();
        assert_eq!(f, ThresholdFit { beta: 0.0, loss: 1.0 });
        let f = exact_threshold_erm(&pts(&[(1.0, 1.0, 0.1), (2.0, -1.0, 1.0)])).unwrap();
        assert_eq!(f, ThresholdFit { beta: 3.0, loss: 0.1 });
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(exact_threshold_erm(&[]), Err(Error::Empty(_))));
        assert!(exact_threshold_erm(&pts(&[(1.0, 0.0, 1.0)])).is_err());
        assert!(exact_threshold_erm(&pts(&[(1.0, 1.0, -1.0)])).is_err());
    }

    #[test]
    fn matches_brute_force_on_small_instances() {
        let mut rng = stream(2024);
        for case in 0..1000 {
            let n = rng.random_range(1..=12);
            let grid = case % 2 == 0;
            let points: Vec<ThresholdPoint> = (0..n)
                .map(|_| ThresholdPoint {
                    // Coarse grids force duplicate x values.
                    x: if grid { rng.random_range(-3..=3) as f64 } else { 4.0 * uniform(&mut rng) - 2.0 },
                    y: if uniform(&mut rng) < 0.5 { -1.0 } else { 1.0 },
                    w: match case % 3 {
                        0 => rng.random_range(0..=4) as f64 / 4.0,
                        _ => uniform(&mut rng),
                    },
                })
                .collect();
            let fast = exact_threshold_erm(&points).unwrap();
            let slow = brute_force(&points);
            assert_eq!(fast, slow, "case {case}: {points:?}");
        }
    }

    #[test]
    fn all_zero_weights_pick_the_lowest_candidate() {
        let f = exact_threshold_erm(&pts(&[(1.0, 1.0, 0.0), (2.0, -1.0, 0.0)])).unwrap();
        assert_eq!(f, ThresholdFit { beta: 0.0, loss: 0.0 });
    }

    #[test]
    fn separable_coordinate() {
        let spec = BasisDgpSpec::new(1, 0.0);
        let ds = DgpSpec::Basis(spec).sample(200, 5).unwrap();
        // gamma = 0 puts all mass on [1, 2] with eta = 1/2, so relabel.
        let ys = vec![1.0; ds.len()];
        let ds =
            Dataset::from_parts(1, ds.xs().to_vec(), ys, ds.latent().map(|l| l.to_vec()), *ds.provenance()).unwrap();
        let h = exact_basis_erm(&ds, &WeightModel::constant(1.0)).unwrap();
        assert!(h.beta[0] < 1.0);
    }

    #[test]
    fn zero_weight_points_cannot_move_thresholds() {
        let spec = BasisDgpSpec::new(2, 0.2);
        let ds = DgpSpec::Basis(spec.clone()).sample(400, 8).unwrap();
        let ones = vec![1.0; ds.len()];
        let (base, _) = exact_basis_erm_weighted(&ds, &ones).unwrap();
        // Append mislabelled points with zero weight.
        let mut xs = ds.xs().to_vec();
        let mut ys = ds.ys().to_vec();
        let mut lat = ds.latent().unwrap().to_vec();
        let mut w = ones.clone();
        for j in 0..2 {
            let mut x = [0.0; 2];
            x[j] = 1.5;
            xs.extend_from_slice(&x);
            ys.push(-1.0);
            lat.push(Latent::Axis(j));
            w.push(0.0);
        }
        let aug = Dataset::from_parts(2, xs, ys, Some(lat), *ds.provenance()).unwrap();
        let (moved, _) = exact_basis_erm_weighted(&aug, &w).unwrap();
        assert_eq!(base, moved);
    }

    #[test]
    fn empty_coordinate_gets_zero_threshold() {
        let spec = BasisDgpSpec::new(3, 0.2);
        let ds = DgpSpec::Basis(spec).sample(50, 1).unwrap();
        let keep: Vec<usize> = (0..ds.len()).filter(|&i| ds.latent_at(i) != Some(&Latent::Axis(2))).collect();
        let sub = ds.subset(&keep);
        let h = exact_basis_erm(&sub, &WeightModel::constant(1.0)).unwrap();
        assert_eq!(h.beta[2], 0.0);
    }

    #[test]
    fn missing_latent_is_an_error() {
        let ds = Dataset::external(1, vec![1.0, 2.0], vec![1.0, -1.0]).unwrap();
        assert!(matches!(exact_basis_erm(&ds, &WeightModel::constant(1.0)), Err(Error::MissingLatent)));
    }

    /// Cross product of per-coordinate candidates on d = 2 with dyadic
    /// weights, so every sum is exact.
    #[test]
    fn basis_erm_matches_grid_brute_force() {
        let spec = BasisDgpSpec::new(2, 0.2);
        let mut rng = stream(31);
        for trial in 0..200u64 {
            let ds = DgpSpec::Basis(spec.clone()).sample(40, 1000 + trial).unwrap();
            let w: Vec<f64> = (0..ds.len()).map(|_| rng.random_range(0..=8) as f64 / 8.0).collect();
            let (h, loss) = exact_basis_erm_weighted(&ds, &w).unwrap();
            let axis_cands = |j: usize| {
                let mut xs: Vec<f64> =
                    (0..ds.len()).filter(|&i| ds.latent_at(i) == Some(&Latent::Axis(j))).map(|i| ds.x(i)[j]).collect();
                if xs.is_empty() {
                    return vec![0.0];
                }
                xs.sort_by(f64::total_cmp);
                xs.dedup();
                let mut c = vec![xs[0] - 1.0];
                c.extend(xs.windows(2).map(|p| 0.5 * (p[0] + p[1])));
                c.push(xs[xs.len() - 1] + 1.0);
                c
            };
            let mut best = f64::INFINITY;
            for b0 in axis_cands(0) {
                for b1 in axis_cands(1) {
                    let t = ThresholdHypothesis::new(vec![b0, b1]).unwrap();
                    let l: f64 = (0..ds.len())
                        .filter(|&i| {
                            let Some(Latent::Axis(j)) = ds.latent_at(i) else { unreachable!() };
                            t.label_on_axis(*j, ds.x(i)[*j]) != ds.y(i)
                        })
                        .map(|i| w[i])
                        .sum();
                    best = best.min(l);
                }
            }
            assert_eq!(loss, best, "trial {trial}");
            let l_h: f64 = (0..ds.len())
                .filter(|&i| {
                    let Some(Latent::Axis(j)) = ds.latent_at(i) else { unreachable!() };
                    h.label_on_axis(*j, ds.x(i)[*j]) != ds.y(i)
                })
                .map(|i| w[i])
                .sum();
            assert_eq!(l_h, best);
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn weight_scale_invariance(
                raw in prop::collection::vec((-5i32..5, any::<bool>(), 0u32..16), 1..20),
                k in -6i32..6,
            ) {
                let c = 2f64.powi(k);
                let p: Vec<ThresholdPoint> = raw.iter()
                    .map(|&(x, pos, w)| ThresholdPoint { x: x as f64, y: if pos { 1.0 } else { -1.0 }, w: w as f64 / 4.0 })
                    .collect();
                let q: Vec<ThresholdPoint> = p.iter().map(|t| ThresholdPoint { w: c * t.w, ..*t }).collect();
                let a = exact_threshold_erm(&p).unwrap();
                let b = exact_threshold_erm(&q).unwrap();
                prop_assert_eq!(a.beta, b.beta);
                prop_assert_eq!(a.loss, b.loss / c);
            }
        }
    }
}
