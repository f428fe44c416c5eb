//! Bregman geometry for the two regularizers the learners use.
//!
//! The probability simplex is equipped with the weighted negative entropy
//! `ψ(p) = Σ (C_i / η) p_i ln p_i`. Its mirror step is a per-coordinate
//! exponentiated update followed by a Bregman projection back onto the simplex;
//! the projection has a single Lagrange multiplier `λ*`, bracketed in
//! `[-max_i c_i, 0]`, which is found by bisection.
//!
//! Hypothesis parameters use the Euclidean regularizer `‖w‖² / (2λ)`, whose
//! mirror step is a projected gradient step onto either an L2 ball or an
//! axis-aligned box.

use crate::error::{ensure_finite, Error, Result};

/// Target accuracy of the multiplier search on `|Σ p' - 1|`.
pub const MULTIPLIER_TOLERANCE: f64 = 1e-12;
/// Bisection iteration cap; 200 halvings exhaust double precision on any bracket.
pub const MULTIPLIER_MAX_ITERATIONS: usize = 200;
/// Smallest probability kept after a step.
pub const PROBABILITY_FLOOR: f64 = 1e-300;
/// Tolerance accepted on `Σ p = 1` for a [`SimplexPoint`].
pub const SIMPLEX_SUM_TOLERANCE: f64 = 1e-9;

/// A point in the relative interior of the probability simplex.
#[derive(Debug, Clone, PartialEq)]
pub struct SimplexPoint {
    probs: Vec<f64>,
}

impl SimplexPoint {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::Domain(
                "simplex point must have at least one coordinate".into(),
            ));
        }
        ensure_finite(&probs, "simplex point")?;
        if let Some((i, p)) = probs.iter().enumerate().find(|(_, &p)| !(p > 0.0 && p <= 1.0)) {
            return Err(Error::Domain(format!(
                "simplex coordinate {i} = {p} is outside (0, 1]"
            )));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > SIMPLEX_SUM_TOLERANCE {
            return Err(Error::Domain(format!("simplex coordinates sum to {sum}, not 1")));
        }
        Ok(Self { probs })
    }

    pub fn uniform(k: usize) -> Self {
        assert!(k > 0, "uniform distribution over zero outcomes");
        Self {
            probs: vec![1.0 / k as f64; k],
        }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.probs
    }
}

impl AsRef<[f64]> for SimplexPoint {
    fn as_ref(&self) -> &[f64] {
        &self.probs
    }
}

/// Weighted negative entropy `Σ (C_i / η) p_i ln p_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedEntropyGeometry {
    scales: Vec<f64>,
    learning_rate: f64,
}

impl WeightedEntropyGeometry {
    pub fn new(scales: Vec<f64>, learning_rate: f64) -> Result<Self> {
        if scales.is_empty() {
            return Err(Error::Domain("entropy geometry needs at least one scale".into()));
        }
        if let Some(c) = scales.iter().find(|c| !(c.is_finite() && **c > 0.0)) {
            return Err(Error::Domain(format!("scale {c} must be positive and finite")));
        }
        if !(learning_rate.is_finite() && learning_rate > 0.0) {
            return Err(Error::Domain(format!(
                "learning rate {learning_rate} must be positive and finite"
            )));
        }
        Ok(Self {
            scales,
            learning_rate,
        })
    }

    pub fn scales(&self) -> &[f64] {
        &self.scales
    }

    pub fn learning_rate(&self) -> f64 {
        self.learning_rate
    }

    pub fn dim(&self) -> usize {
        self.scales.len()
    }

    fn check_dim(&self, len: usize) -> Result<()> {
        if len != self.scales.len() {
            return Err(Error::DimensionMismatch {
                expected: self.scales.len(),
                actual: len,
            });
        }
        Ok(())
    }
}

/// `D_ψ(p, q) = (1/η) Σ C_i (p_i ln(p_i/q_i) + q_i - p_i)`.
///
/// Coordinates with `p_i = 0` contribute `C_i q_i / η`; `q_i = 0` with
/// `p_i > 0` is outside the domain.
pub fn bregman_divergence_entropy(geometry: &WeightedEntropyGeometry, p: &[f64], q: &[f64]) -> Result<f64> {
    geometry.check_dim(p.len())?;
    geometry.check_dim(q.len())?;
    ensure_finite(p, "divergence argument p")?;
    ensure_finite(q, "divergence argument q")?;
    let mut total = 0.0;
    for ((&pi, &qi), &c) in p.iter().zip(q).zip(geometry.scales()) {
        if pi < 0.0 || qi < 0.0 {
            return Err(Error::Domain("negative coordinate in divergence".into()));
        }
        let entropy_term = if pi == 0.0 {
            0.0
        } else if qi == 0.0 {
            return Err(Error::Domain(format!(
                "divergence undefined: q_i = 0 while p_i = {pi}"
            )));
        } else {
            pi * (pi / qi).ln()
        };
        total += c * (entropy_term + qi - pi);
    }
    Ok((total / geometry.learning_rate()).max(0.0))
}

/// Result of one weighted-entropy mirror step.
#[derive(Debug, Clone)]
pub struct MirrorStep {
    pub point: SimplexPoint,
    /// The Lagrange multiplier `λ*` of the simplex constraint.
    pub multiplier: f64,
    pub iterations: usize,
}

/// Probability vector held as logarithms so that long runs of exponentiated
/// updates cannot underflow. Always normalized.
#[derive(Debug, Clone, PartialEq)]
pub struct LogSimplex {
    log_probs: Vec<f64>,
}

impl LogSimplex {
    pub fn from_point(point: &SimplexPoint) -> Self {
        let mut log_probs: Vec<f64> = point.as_slice().iter().map(|p| p.ln()).collect();
        normalize_log(&mut log_probs);
        Self { log_probs }
    }

    pub fn uniform(k: usize) -> Self {
        Self::from_point(&SimplexPoint::uniform(k))
    }

    pub fn len(&self) -> usize {
        self.log_probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_probs.is_empty()
    }

    pub fn log_probs(&self) -> &[f64] {
        &self.log_probs
    }

    /// Materializes linear-space probabilities.
    pub fn probabilities(&self) -> Vec<f64> {
        self.log_probs.iter().map(|l| l.exp()).collect()
    }

    pub fn to_point(&self) -> SimplexPoint {
        SimplexPoint {
            probs: self.probabilities(),
        }
    }

    /// Applies the weighted-entropy mirror step in place and returns `(λ*, iterations)`.
    pub fn step(&mut self, geometry: &WeightedEntropyGeometry, losses: &[f64]) -> Result<(f64, usize)> {
        geometry.check_dim(self.log_probs.len())?;
        geometry.check_dim(losses.len())?;
        ensure_finite(losses, "loss vector")?;
        if let Some(c) = losses.iter().find(|c| **c < 0.0) {
            return Err(Error::Domain(format!("loss estimate {c} is negative")));
        }
        if losses.iter().all(|&c| c == 0.0) {
            return Ok((0.0, 0));
        }

        let eta = geometry.learning_rate();
        let shifted = |lambda: f64, out: &mut Vec<f64>| {
            out.clear();
            out.extend(
                self.log_probs
                    .iter()
                    .zip(losses)
                    .zip(geometry.scales())
                    .map(|((lp, c), scale)| lp - eta * (lambda + c) / scale),
            );
        };
        let mut buf = Vec::with_capacity(self.log_probs.len());
        let mut mass = |lambda: f64| -> f64 {
            shifted(lambda, &mut buf);
            buf.iter().map(|l| l.exp()).sum()
        };

        let max_loss = losses.iter().cloned().fold(0.0, f64::max);
        let (mut lo, mut hi) = (-max_loss, 0.0);
        let mut best = (f64::INFINITY, 0.0);
        let consider = |lambda: f64, s: f64, best: &mut (f64, f64)| {
            let r = (s - 1.0).abs();
            if r < best.0 {
                *best = (r, lambda);
            }
            r <= MULTIPLIER_TOLERANCE
        };

        let mut iterations = 0;
        let s_hi = mass(hi);
        let s_lo = mass(lo);
        let converged = if consider(hi, s_hi, &mut best) || consider(lo, s_lo, &mut best) {
            true
        } else {
            let mut done = false;
            while iterations < MULTIPLIER_MAX_ITERATIONS {
                iterations += 1;
                let mid = 0.5 * (lo + hi);
                if mid <= lo || mid >= hi {
                    break;
                }
                let s = mass(mid);
                if consider(mid, s, &mut best) {
                    done = true;
                    break;
                }
                // mass is non-increasing in lambda
                if s > 1.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            done
        };
        if !converged {
            return Err(Error::Convergence {
                iterations,
                residual: best.0,
            });
        }

        let lambda = best.1;
        shifted(lambda, &mut buf);
        let floor = PROBABILITY_FLOOR.ln();
        for l in buf.iter_mut() {
            if *l < floor {
                *l = floor;
            }
        }
        normalize_log(&mut buf);
        self.log_probs = buf;
        Ok((lambda, iterations))
    }
}

fn normalize_log(log_probs: &mut [f64]) {
    let max = log_probs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let log_sum = max + log_probs.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
    for l in log_probs.iter_mut() {
        *l -= log_sum;
    }
}

/// One weighted-entropy mirror step from `p` with loss vector `losses`:
/// `p'_i = p_i exp(-η(λ* + c_i)/C_i)` with `λ*` chosen so `Σ p' = 1`.
pub fn entropy_mirror_step(
    geometry: &WeightedEntropyGeometry,
    p: &SimplexPoint,
    losses: &[f64],
) -> Result<MirrorStep> {
    let mut state = LogSimplex::from_point(p);
    let (multiplier, iterations) = state.step(geometry, losses)?;
    Ok(MirrorStep {
        point: state.to_point(),
        multiplier,
        iterations,
    })
}

/// Feasible set for a hypothesis parameter vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Constraint {
    L2Ball { radius: f64 },
    InfBox { half_width: f64 },
}

impl Constraint {
    pub fn validate(&self) -> Result<()> {
        let r = match *self {
            Constraint::L2Ball { radius } => radius,
            Constraint::InfBox { half_width } => half_width,
        };
        if r.is_finite() && r > 0.0 {
            Ok(())
        } else {
            Err(Error::Domain(format!("constraint size {r} must be positive")))
        }
    }

    /// Euclidean projection onto the set. Feasible points are returned unchanged.
    pub fn project(&self, v: &mut [f64]) {
        match *self {
            Constraint::L2Ball { radius } => {
                let norm = l2_norm(v);
                if norm > radius {
                    let scale = radius / norm;
                    v.iter_mut().for_each(|x| *x *= scale);
                }
            }
            Constraint::InfBox { half_width } => {
                v.iter_mut().for_each(|x| *x = x.clamp(-half_width, half_width));
            }
        }
    }

    /// Membership with a relative slack for rounding in earlier projections.
    pub fn contains(&self, v: &[f64], rel_tol: f64) -> bool {
        match *self {
            Constraint::L2Ball { radius } => l2_norm(v) <= radius * (1.0 + rel_tol),
            Constraint::InfBox { half_width } => v.iter().all(|x| x.abs() <= half_width * (1.0 + rel_tol)),
        }
    }
}

/// Euclidean regularizer `‖w‖² / (2λ)` over a constraint set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EuclideanGeometry {
    pub learning_rate: f64,
    pub constraint: Constraint,
}

impl EuclideanGeometry {
    pub fn new(learning_rate: f64, constraint: Constraint) -> Result<Self> {
        if !(learning_rate.is_finite() && learning_rate > 0.0) {
            return Err(Error::Domain(format!(
                "learning rate {learning_rate} must be positive and finite"
            )));
        }
        constraint.validate()?;
        Ok(Self {
            learning_rate,
            constraint,
        })
    }
}

/// Projected gradient step `Π(w - λ g)`.
pub fn euclidean_step(geometry: &EuclideanGeometry, w: &[f64], gradient: &[f64]) -> Result<Vec<f64>> {
    if w.len() != gradient.len() {
        return Err(Error::DimensionMismatch {
            expected: w.len(),
            actual: gradient.len(),
        });
    }
    ensure_finite(w, "parameter vector")?;
    ensure_finite(gradient, "gradient")?;
    let lr = geometry.learning_rate;
    let mut next: Vec<f64> = w.iter().zip(gradient).map(|(wi, gi)| wi - lr * gi).collect();
    geometry.constraint.project(&mut next);
    Ok(next)
}

pub fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn geom(scales: &[f64], eta: f64) -> WeightedEntropyGeometry {
        WeightedEntropyGeometry::new(scales.to_vec(), eta).unwrap()
    }

    #[test]
    fn divergence_vanishes_on_identical_points() {
        let g = geom(&[1.0, 2.0, 3.0, 4.0], 0.7);
        let u = SimplexPoint::uniform(4);
        assert_eq!(
            bregman_divergence_entropy(&g, u.as_slice(), u.as_slice()).unwrap(),
            0.0
        );
    }

    #[test]
    fn divergence_closed_form_matches_definition() {
        // D(p,q) = ψ(p) - ψ(q) - <∇ψ(q), p - q> evaluated directly.
        let g = geom(&[1.0, 1.0], 1.0);
        let (p, q) = ([0.5f64, 0.5], [0.25f64, 0.75]);
        let psi = |v: &[f64]| v.iter().map(|x| x * x.ln()).sum::<f64>();
        let grad_q: Vec<f64> = q.iter().map(|x| x.ln() + 1.0).collect();
        let direct = psi(&p) - psi(&q) - dot(&grad_q, &[p[0] - q[0], p[1] - q[1]]);
        let closed = bregman_divergence_entropy(&g, &p, &q).unwrap();
        assert!((closed - direct).abs() < 1e-14);
        assert!((closed - 0.143_841_036_225_890_1).abs() < 1e-12);
    }

    #[test]
    fn divergence_rejects_zero_denominator() {
        let g = geom(&[1.0, 1.0], 1.0);
        assert!(matches!(
            bregman_divergence_entropy(&g, &[0.5, 0.5], &[1.0, 0.0]),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn zero_losses_leave_point_unchanged() {
        let g = geom(&[1.0, 3.0, 0.5], 0.3);
        let p = SimplexPoint::new(vec![0.2, 0.3, 0.5]).unwrap();
        let step = entropy_mirror_step(&g, &p, &[0.0, 0.0, 0.0]).unwrap();
        assert_eq!(step.multiplier, 0.0);
        for (a, b) in step.point.as_slice().iter().zip(p.as_slice()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn equal_scales_two_arms() {
        let g = geom(&[1.0, 1.0], std::f64::consts::LN_2);
        let step = entropy_mirror_step(&g, &SimplexPoint::uniform(2), &[1.0, 0.0]).unwrap();
        let p = step.point.as_slice();
        assert!((p[0] - 1.0 / 3.0).abs() < 1e-12);
        assert!((p[1] - 2.0 / 3.0).abs() < 1e-12);
        assert!((-1.0..=0.0).contains(&step.multiplier));
    }

    #[test]
    fn constant_loss_hits_bracket_edge() {
        let g = geom(&[1.0, 2.0, 4.0], 0.5);
        let step = entropy_mirror_step(&g, &SimplexPoint::uniform(3), &[1.0, 1.0, 1.0]).unwrap();
        assert!((step.multiplier + 1.0).abs() < 1e-9);
        let sum: f64 = step.point.as_slice().iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
    }

    #[test]
    fn negative_losses_are_rejected() {
        let g = geom(&[1.0, 1.0], 0.5);
        assert!(entropy_mirror_step(&g, &SimplexPoint::uniform(2), &[-0.1, 0.0]).is_err());
    }

    #[test]
    fn log_space_survives_long_runs() {
        let g = geom(&[1.0, 1.0, 1.0], 1.0);
        let mut state = LogSimplex::uniform(3);
        for _ in 0..100_000 {
            state.step(&g, &[5.0, 0.0, 5.0]).unwrap();
        }
        let p = state.probabilities();
        assert!(p.iter().all(|&x| x > 0.0));
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(p[1] > 1.0 - 1e-12);
    }

    #[test]
    fn gradient_zero_keeps_w() {
        let g = EuclideanGeometry::new(0.5, Constraint::L2Ball { radius: 1.0 }).unwrap();
        let w = [0.3, -0.4];
        assert_eq!(euclidean_step(&g, &w, &[0.0, 0.0]).unwrap(), w.to_vec());
    }

    #[test]
    fn ball_projection_scales_to_radius() {
        // w - λg = (1.2, 1.6) has norm 2; radius 1 halves it.
        let g = EuclideanGeometry::new(1.0, Constraint::L2Ball { radius: 1.0 }).unwrap();
        let out = euclidean_step(&g, &[0.0, 0.0], &[-1.2, -1.6]).unwrap();
        assert!((out[0] - 0.6).abs() < 1e-15 && (out[1] - 0.8).abs() < 1e-15);
        assert!((l2_norm(&out) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn box_projection_clamps_coordinates() {
        let g = EuclideanGeometry::new(1.0, Constraint::InfBox { half_width: 0.1 }).unwrap();
        let out = euclidean_step(&g, &[0.0, 0.0], &[-0.05, 0.3]).unwrap();
        assert_eq!(out, vec![0.05, -0.1]);
    }

    #[test]
    fn euclidean_step_rejects_nan() {
        let g = EuclideanGeometry::new(1.0, Constraint::L2Ball { radius: 1.0 }).unwrap();
        assert!(euclidean_step(&g, &[0.0], &[f64::NAN]).is_err());
    }

    fn simplex(k: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(0.01f64..1.0, k).prop_map(|v| {
            let s: f64 = v.iter().sum();
            v.into_iter().map(|x| x / s).collect()
        })
    }

    proptest! {
        #[test]
        fn step_stays_on_simplex(
            (p, c, scales) in (2usize..12).prop_flat_map(|k| (
                simplex(k),
                prop::collection::vec(0.0f64..20.0, k),
                prop::collection::vec(0.1f64..10.0, k),
            )),
            eta in 1e-3f64..2.0,
        ) {
            let g = WeightedEntropyGeometry::new(scales, eta).unwrap();
            let point = SimplexPoint::new(p).unwrap();
            let step = entropy_mirror_step(&g, &point, &c).unwrap();
            let out = step.point.as_slice();
            prop_assert!((out.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            prop_assert!(out.iter().all(|&x| x > 0.0));
            let max_c = c.iter().cloned().fold(0.0, f64::max);
            prop_assert!(step.multiplier >= -max_c - 1e-12 && step.multiplier <= 1e-12);
        }

        #[test]
        fn mass_is_non_increasing_in_multiplier(
            (p, c, scales) in (2usize..8).prop_flat_map(|k| (
                simplex(k),
                prop::collection::vec(0.0f64..5.0, k),
                prop::collection::vec(0.1f64..5.0, k),
            )),
            eta in 1e-3f64..2.0,
            a in -5.0f64..0.0,
            b in -5.0f64..0.0,
        ) {
            let mass = |l: f64| -> f64 {
                p.iter().zip(&c).zip(&scales)
                    .map(|((pi, ci), si)| pi * (-eta * (l + ci) / si).exp()).sum()
            };
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(mass(hi) <= mass(lo) * (1.0 + 1e-12));
        }

        #[test]
        fn equal_scales_match_normalized_exponential_weights(
            (p, c) in (2usize..10).prop_flat_map(|k| (simplex(k), prop::collection::vec(0.0f64..10.0, k))),
            scale in 0.2f64..5.0,
            eta in 1e-3f64..1.0,
        ) {
            let k = p.len();
            let g = WeightedEntropyGeometry::new(vec![scale; k], eta).unwrap();
            let step = entropy_mirror_step(&g, &SimplexPoint::new(p.clone()).unwrap(), &c).unwrap();
            let raw: Vec<f64> = p.iter().zip(&c).map(|(pi, ci)| pi * (-eta * ci / scale).exp()).collect();
            let z: f64 = raw.iter().sum();
            for (got, want) in step.point.as_slice().iter().zip(raw.iter().map(|r| r / z)) {
                prop_assert!((got - want).abs() < 1e-9);
            }
        }

        #[test]
        fn projections_are_idempotent(v in prop::collection::vec(-3.0f64..3.0, 1..20), r in 0.1f64..2.0) {
            for c in [Constraint::L2Ball { radius: r }, Constraint::InfBox { half_width: r }] {
                let mut once = v.clone();
                c.project(&mut once);
                let mut twice = once.clone();
                c.project(&mut twice);
                for (a, b) in once.iter().zip(&twice) {
                    prop_assert!((a - b).abs() <= 1e-12 * r);
                }
            }
        }

        #[test]
        fn ball_projection_is_nonexpansive(
            (a, b) in (1usize..15).prop_flat_map(|d| (
                prop::collection::vec(-3.0f64..3.0, d),
                prop::collection::vec(-3.0f64..3.0, d),
            )),
            r in 0.1f64..2.0,
        ) {
            let c = Constraint::L2Ball { radius: r };
            let (mut pa, mut pb) = (a.clone(), b.clone());
            c.project(&mut pa);
            c.project(&mut pb);
            let before: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x - y).collect();
            let after: Vec<f64> = pa.iter().zip(&pb).map(|(x, y)| x - y).collect();
            prop_assert!(l2_norm(&after) <= l2_norm(&before) + 1e-12);
        }
    }
}
