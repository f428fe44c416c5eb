//! Candidate hypothesis spaces `F_i = { x ↦ <w, φ_i(x)> : w ∈ W_i }`.

use std::f64::consts::{PI, SQRT_2};

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};
use crate::mirror::{dot, Constraint};
use crate::rng::{substream, StreamPurpose};

/// Gaussian random Fourier features `z_j(x) = √(2/D) cos(ω_jᵀx + b_j)` with
/// `ω_j ~ N(0, σ⁻² I)` and `b_j ~ U[0, 2π]`, drawn once and frozen.
#[derive(Debug, Clone, PartialEq)]
pub struct RandomFourierFeatures {
    width: f64,
    input_dim: usize,
    /// Row-major `feature_count × input_dim`.
    frequencies: Vec<f64>,
    phases: Vec<f64>,
}

impl RandomFourierFeatures {
    pub fn new(input_dim: usize, feature_count: usize, width: f64, seed: u64) -> Result<Self> {
        if input_dim == 0 || feature_count == 0 {
            return Err(Error::Domain("random features need positive dimensions".into()));
        }
        if !(width.is_finite() && width > 0.0) {
            return Err(Error::Domain(format!("kernel width {width} must be positive")));
        }
        let mut rng = substream(seed, StreamPurpose::Features, input_dim as u64, width.to_bits());
        let frequencies = (0..feature_count * input_dim)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                z / width
            })
            .collect();
        let phases = (0..feature_count)
            .map(|_| rng.random::<f64>() * 2.0 * PI)
            .collect();
        Ok(Self {
            width,
            input_dim,
            frequencies,
            phases,
        })
    }

    pub fn width(&self) -> f64 {
        self.width
    }

    pub fn feature_count(&self) -> usize {
        self.phases.len()
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    fn featurize_into(&self, x: &[f64], out: &mut Vec<f64>) {
        let scale = (2.0 / self.feature_count() as f64).sqrt();
        out.clear();
        out.extend(
            self.frequencies
                .chunks_exact(self.input_dim)
                .zip(&self.phases)
                .map(|(omega, b)| scale * (dot(omega, x) + b).cos()),
        );
    }
}

/// Exact Gaussian kernel `exp(-‖x - v‖² / (2σ²))`.
pub fn gaussian_kernel(x: &[f64], v: &[f64], width: f64) -> f64 {
    let sq: f64 = x.iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum();
    (-sq / (2.0 * width * width)).exp()
}

/// Kernel widths `σ_i = 2^{i-2}` for `i = 1..=k`.
pub fn kernel_width_grid(k: usize) -> Vec<f64> {
    (1..=k).map(|i| 2f64.powi(i as i32 - 2)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub enum FeatureMap {
    /// `φ(x) = x`; `norm_bound` is `sup ‖x‖₂` over the data domain.
    Identity {
        input_dim: usize,
        norm_bound: f64,
    },
    /// `φ(x) = (x_index)`, a one-dimensional projection onto a basis vector.
    Coordinate {
        index: usize,
        input_dim: usize,
        bound: f64,
    },
    GaussianRff(RandomFourierFeatures),
}

impl FeatureMap {
    pub fn input_dim(&self) -> usize {
        match self {
            FeatureMap::Identity { input_dim, .. } | FeatureMap::Coordinate { input_dim, .. } => *input_dim,
            FeatureMap::GaussianRff(rff) => rff.input_dim(),
        }
    }

    /// `d_i`.
    pub fn output_dim(&self) -> usize {
        match self {
            FeatureMap::Identity { input_dim, .. } => *input_dim,
            FeatureMap::Coordinate { .. } => 1,
            FeatureMap::GaussianRff(rff) => rff.feature_count(),
        }
    }

    /// `b_i ≥ sup ‖φ(x)‖₂`.
    pub fn feature_bound(&self) -> f64 {
        match self {
            FeatureMap::Identity { norm_bound, .. } => *norm_bound,
            FeatureMap::Coordinate { bound, .. } => *bound,
            FeatureMap::GaussianRff(_) => SQRT_2,
        }
    }

    pub fn featurize(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(self.output_dim());
        self.featurize_into(x, &mut out)?;
        Ok(out)
    }

    pub fn featurize_into(&self, x: &[f64], out: &mut Vec<f64>) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                actual: x.len(),
            });
        }
        match self {
            FeatureMap::Identity { .. } => {
                out.clear();
                out.extend_from_slice(x);
            }
            FeatureMap::Coordinate { index, .. } => {
                out.clear();
                out.push(x[*index]);
            }
            FeatureMap::GaussianRff(rff) => rff.featurize_into(x, out),
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossFunction {
    /// `(v - y)²`
    Square,
    /// `|v - y|`
    Absolute,
    /// `1 - v·y`
    Linear,
}

impl LossFunction {
    pub fn value(self, v: f64, y: f64) -> f64 {
        match self {
            LossFunction::Square => (v - y) * (v - y),
            LossFunction::Absolute => (v - y).abs(),
            LossFunction::Linear => 1.0 - v * y,
        }
    }

    /// Derivative in the prediction `v`; the absolute loss uses subgradient 0 at `v = y`.
    pub fn derivative(self, v: f64, y: f64) -> f64 {
        match self {
            LossFunction::Square => 2.0 * (v - y),
            LossFunction::Absolute => {
                if v > y {
                    1.0
                } else if v < y {
                    -1.0
                } else {
                    0.0
                }
            }
            LossFunction::Linear => -y,
        }
    }
}

/// Worst-case `(C_i, G_i)` for targets in `[0, 1]` and `|<w, φ(x)>| ≤ U_i b_i`.
pub fn default_constants(loss: LossFunction, radius: f64, feature_bound: f64) -> (f64, f64) {
    let reach = radius * feature_bound;
    match loss {
        LossFunction::Square => ((reach + 1.0).powi(2), 2.0 * (reach + 1.0) * feature_bound),
        LossFunction::Absolute => (reach + 1.0, feature_bound),
        LossFunction::Linear => (1.0 + reach, feature_bound),
    }
}

/// Shape of the feasible parameter set, sized from the space radius.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintKind {
    /// `‖w‖₂ ≤ U`
    L2Ball,
    /// `‖w‖∞ ≤ U / √d`
    InfBox,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Parameters {
    /// Learned by projected gradient steps, starting from zero.
    Learned,
    /// A single fixed hypothesis; the space is never updated.
    Fixed(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct HypothesisSpace {
    pub feature_map: FeatureMap,
    pub radius: f64,
    pub constraint_kind: ConstraintKind,
    /// `C_i ≥ sup` realized loss.
    pub loss_bound: f64,
    /// `G_i ≥ sup` realized gradient norm.
    pub lipschitz_bound: f64,
    pub parameters: Parameters,
}

impl HypothesisSpace {
    /// A learned space with bounds from [`default_constants`].
    pub fn new(
        feature_map: FeatureMap,
        radius: f64,
        constraint_kind: ConstraintKind,
        loss: LossFunction,
    ) -> Result<Self> {
        let (c, g) = default_constants(loss, radius, feature_map.feature_bound());
        let space = Self {
            feature_map,
            radius,
            constraint_kind,
            loss_bound: c,
            lipschitz_bound: g,
            parameters: Parameters::Learned,
        };
        space.validate()?;
        Ok(space)
    }

    pub fn with_bounds(mut self, loss_bound: f64, lipschitz_bound: f64) -> Result<Self> {
        self.loss_bound = loss_bound;
        self.lipschitz_bound = lipschitz_bound;
        self.validate()?;
        Ok(self)
    }

    /// The singleton space `{ x ↦ x_index }` over `input_dim` inputs in `[-bound, bound]`.
    pub fn basis(index: usize, input_dim: usize, bound: f64, loss: LossFunction) -> Result<Self> {
        if index >= input_dim {
            return Err(Error::Domain(format!(
                "basis index {index} out of range for dimension {input_dim}"
            )));
        }
        let feature_map = FeatureMap::Coordinate {
            index,
            input_dim,
            bound,
        };
        let (c, g) = default_constants(loss, 1.0, bound);
        let space = Self {
            feature_map,
            radius: 1.0,
            constraint_kind: ConstraintKind::L2Ball,
            loss_bound: c,
            lipschitz_bound: g,
            parameters: Parameters::Fixed(vec![1.0]),
        };
        space.validate()?;
        Ok(space)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !positive(self.radius) {
            return Err(Error::InvalidConfig(format!(
                "radius {} must be positive",
                self.radius
            )));
        }
        if !positive(self.loss_bound) || !positive(self.lipschitz_bound) {
            return Err(Error::InvalidConfig(format!(
                "loss bound {} and Lipschitz bound {} must be positive",
                self.loss_bound, self.lipschitz_bound
            )));
        }
        if let Parameters::Fixed(w) = &self.parameters {
            if w.len() != self.dim() {
                return Err(Error::DimensionMismatch {
                    expected: self.dim(),
                    actual: w.len(),
                });
            }
            if !self.constraint().contains(w, 1e-12) {
                return Err(Error::InvalidConfig("fixed hypothesis is infeasible".into()));
            }
        }
        Ok(())
    }

    /// `d_i`.
    pub fn dim(&self) -> usize {
        self.feature_map.output_dim()
    }

    pub fn is_learned(&self) -> bool {
        matches!(self.parameters, Parameters::Learned)
    }

    pub fn constraint(&self) -> Constraint {
        match self.constraint_kind {
            ConstraintKind::L2Ball => Constraint::L2Ball { radius: self.radius },
            ConstraintKind::InfBox => Constraint::InfBox {
                half_width: self.radius / (self.dim() as f64).sqrt(),
            },
        }
    }

    pub fn initial_parameters(&self) -> Vec<f64> {
        match &self.parameters {
            Parameters::Learned => vec![0.0; self.dim()],
            Parameters::Fixed(w) => w.clone(),
        }
    }

    fn check_parameters(&self, w: &[f64]) -> Result<()> {
        if w.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                actual: w.len(),
            });
        }
        Ok(())
    }
}

/// `<w, φ_i(x)>`.
pub fn predict(space: &HypothesisSpace, w: &[f64], x: &[f64]) -> Result<f64> {
    space.check_parameters(w)?;
    let phi = space.feature_map.featurize(x)?;
    Ok(dot(w, &phi))
}

/// Loss value and its gradient with respect to `w` at `(x, y)`.
pub fn loss_and_gradient(
    loss: LossFunction,
    space: &HypothesisSpace,
    w: &[f64],
    x: &[f64],
    y: f64,
) -> Result<(f64, Vec<f64>)> {
    space.check_parameters(w)?;
    ensure_finite(x, "input vector")?;
    ensure_finite(w, "parameter vector")?;
    if !y.is_finite() {
        return Err(Error::NonFinite("target"));
    }
    let phi = space.feature_map.featurize(x)?;
    Ok(loss_and_gradient_from_features(loss, w, &phi, y))
}

/// As [`loss_and_gradient`] with precomputed features.
pub fn loss_and_gradient_from_features(
    loss: LossFunction,
    w: &[f64],
    phi: &[f64],
    y: f64,
) -> (f64, Vec<f64>) {
    let v = dot(w, phi);
    let d = loss.derivative(v, y);
    (loss.value(v, y), phi.iter().map(|f| d * f).collect())
}

/// `K` nested linear spaces over the raw inputs, one per radius.
pub fn nested_linear_spaces(
    input_dim: usize,
    norm_bound: f64,
    radii: &[f64],
    loss: LossFunction,
) -> Result<Vec<HypothesisSpace>> {
    radii
        .iter()
        .map(|&u| {
            HypothesisSpace::new(
                FeatureMap::Identity {
                    input_dim,
                    norm_bound,
                },
                u,
                ConstraintKind::L2Ball,
                loss,
            )
        })
        .collect()
}

/// One restricted random-feature space per kernel width, all of radius `radius`.
pub fn gaussian_kernel_spaces(
    input_dim: usize,
    feature_count: usize,
    widths: &[f64],
    radius: f64,
    loss: LossFunction,
    seed: u64,
) -> Result<Vec<HypothesisSpace>> {
    widths
        .iter()
        .map(|&sigma| {
            let rff = RandomFourierFeatures::new(input_dim, feature_count, sigma, seed)?;
            HypothesisSpace::new(FeatureMap::GaussianRff(rff), radius, ConstraintKind::InfBox, loss)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mirror::l2_norm;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn identity_space(d: usize, u: f64) -> HypothesisSpace {
        HypothesisSpace::new(
            FeatureMap::Identity {
                input_dim: d,
                norm_bound: 1.0,
            },
            u,
            ConstraintKind::L2Ball,
            LossFunction::Square,
        )
        .unwrap()
    }

    #[test]
    fn identity_features_pass_through() {
        let map = FeatureMap::Identity {
            input_dim: 2,
            norm_bound: 1.0,
        };
        assert_eq!(map.featurize(&[0.2, -0.3]).unwrap(), vec![0.2, -0.3]);
        assert!(matches!(
            map.featurize(&[1.0]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn prediction_is_basis_projection() {
        let s = identity_space(2, 1.0);
        assert_eq!(predict(&s, &[0.0, 0.0], &[0.5, 9.0]).unwrap(), 0.0);
        assert_eq!(predict(&s, &[1.0, 0.0], &[0.5, 9.0]).unwrap(), 0.5);
    }

    #[test]
    fn square_loss_hand_gradient() {
        let s = identity_space(2, 1.0);
        let (c, g) = loss_and_gradient(LossFunction::Square, &s, &[0.0, 0.0], &[1.0, 0.0], 1.0).unwrap();
        assert_eq!(c, 1.0);
        assert_eq!(g, vec![-2.0, 0.0]);
        // central differences at h = 1e-6
        let h = 1e-6;
        let f = |w0: f64| LossFunction::Square.value(w0, 1.0);
        let fd = (f(h) - f(-h)) / (2.0 * h);
        assert!((fd - g[0]).abs() < 1e-6);
    }

    #[test]
    fn square_loss_at_target_is_flat() {
        let s = identity_space(2, 1.0);
        let (c, g) = loss_and_gradient(LossFunction::Square, &s, &[0.5, 0.0], &[1.0, 0.0], 0.5).unwrap();
        assert_eq!(c, 0.0);
        assert_eq!(g, vec![0.0, 0.0]);
    }

    #[test]
    fn linear_loss_with_zero_label() {
        let s = identity_space(2, 1.0);
        let (c, g) = loss_and_gradient(LossFunction::Linear, &s, &[0.3, -0.2], &[0.7, 0.1], 0.0).unwrap();
        assert_eq!(c, 1.0);
        assert!(g.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn absolute_subgradient_at_kink_is_zero() {
        assert_eq!(LossFunction::Absolute.derivative(0.4, 0.4), 0.0);
        assert_eq!(LossFunction::Absolute.derivative(0.5, 0.4), 1.0);
        assert_eq!(LossFunction::Absolute.derivative(0.3, 0.4), -1.0);
    }

    #[test]
    fn default_constant_values() {
        assert_eq!(default_constants(LossFunction::Square, 1.0, 1.0), (4.0, 4.0));
        assert_eq!(default_constants(LossFunction::Absolute, 0.0, 1.0), (1.0, 1.0));
        let (c, g) = default_constants(LossFunction::Square, 0.1, 1.0);
        assert!((c - 1.21).abs() < 1e-12 && (g - 2.2).abs() < 1e-12);
    }

    #[test]
    fn square_constants_dominate_random_feasible_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s = identity_space(3, 1.0);
        let (c_bound, g_bound) = (s.loss_bound, s.lipschitz_bound);
        let unit = |rng: &mut ChaCha8Rng| -> Vec<f64> {
            let v: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
            let n = l2_norm(&v).max(1.0);
            v.into_iter().map(|x| x / n).collect()
        };
        let (mut max_c, mut max_g) = (0.0f64, 0.0f64);
        for _ in 0..100_000 {
            let w = unit(&mut rng);
            let x = unit(&mut rng);
            let y = rng.random::<f64>();
            let (c, g) = loss_and_gradient(LossFunction::Square, &s, &w, &x, y).unwrap();
            max_c = max_c.max(c);
            max_g = max_g.max(l2_norm(&g));
        }
        assert!(max_c <= c_bound && max_g <= g_bound);
    }

    #[test]
    fn rff_features_are_frozen_and_bounded() {
        let rff = RandomFourierFeatures::new(3, 64, 1.0, 11).unwrap();
        let again = RandomFourierFeatures::new(3, 64, 1.0, 11).unwrap();
        assert_eq!(rff, again);
        let map = FeatureMap::GaussianRff(rff);
        let phi = map.featurize(&[0.3, -0.2, 0.9]).unwrap();
        assert_eq!(phi.len(), 64);
        assert!(l2_norm(&phi) <= SQRT_2 + 1e-12);
        assert!(phi.iter().all(|z| z.abs() <= (2.0f64 / 64.0).sqrt() + 1e-15));
    }

    #[test]
    fn rff_self_inner_product_is_unbiased() {
        // κ(x, x) = 1; average over 200 independent feature draws.
        let x = [0.4, -0.7];
        let mean: f64 = (0..200)
            .map(|seed| {
                let map = FeatureMap::GaussianRff(RandomFourierFeatures::new(2, 100, 1.0, seed).unwrap());
                let phi = map.featurize(&x).unwrap();
                dot(&phi, &phi)
            })
            .sum::<f64>()
            / 200.0;
        assert!((mean - 1.0).abs() < 0.02, "mean {mean}");
    }

    #[test]
    fn rff_approximates_kernel_at_unit_distance() {
        let map = FeatureMap::GaussianRff(RandomFourierFeatures::new(2, 2000, 1.0, 5).unwrap());
        let x = [0.1, 0.2];
        let v = [0.1 + 0.6, 0.2 + 0.8];
        let approx = dot(&map.featurize(&x).unwrap(), &map.featurize(&v).unwrap());
        assert!((approx - (-0.5f64).exp()).abs() < 0.05, "approx {approx}");
        assert!((gaussian_kernel(&x, &v, 1.0) - (-0.5f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn width_grid_is_powers_of_two() {
        assert_eq!(
            kernel_width_grid(8),
            vec![0.5, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0]
        );
    }

    #[test]
    fn box_half_width_scales_with_dimension() {
        let spaces = gaussian_kernel_spaces(2, 100, &[1.0], 1.0, LossFunction::Square, 0).unwrap();
        assert_eq!(spaces[0].constraint(), Constraint::InfBox { half_width: 0.1 });
    }

    #[test]
    fn nested_spaces_are_nested() {
        let spaces = nested_linear_spaces(3, 1.0, &[0.1, 0.5, 1.0], LossFunction::Square).unwrap();
        let w = [0.05, -0.05, 0.02];
        let feasible: Vec<bool> = spaces.iter().map(|s| s.constraint().contains(&w, 0.0)).collect();
        for pair in feasible.windows(2) {
            assert!(!pair[0] || pair[1]);
        }
    }

    #[test]
    fn basis_space_is_fixed() {
        let s = HypothesisSpace::basis(2, 4, 1.0, LossFunction::Linear).unwrap();
        assert!(!s.is_learned());
        assert_eq!(
            predict(&s, &s.initial_parameters(), &[0.0, 0.0, 1.0, 0.0]).unwrap(),
            1.0
        );
        assert!(HypothesisSpace::basis(4, 4, 1.0, LossFunction::Linear).is_err());
    }

    proptest! {
        #[test]
        fn square_gradient_matches_finite_differences(
            w in prop::collection::vec(-0.5f64..0.5, 4),
            x in prop::collection::vec(-0.5f64..0.5, 4),
            y in 0.0f64..1.0,
        ) {
            let (_, g) = loss_and_gradient_from_features(LossFunction::Square, &w, &x, y);
            let h = 1e-6;
            for k in 0..4 {
                let mut wp = w.clone();
                let mut wm = w.clone();
                wp[k] += h;
                wm[k] -= h;
                let fd = (LossFunction::Square.value(dot(&wp, &x), y)
                    - LossFunction::Square.value(dot(&wm, &x), y)) / (2.0 * h);
                prop_assert!((fd - g[k]).abs() <= 1e-5 * g[k].abs().max(1e-3));
            }
        }

        #[test]
        fn linear_gradient_is_exact(
            w in prop::collection::vec(-0.5f64..0.5, 3),
            x in prop::collection::vec(-0.5f64..0.5, 3),
            y in 0.0f64..1.0,
            k in 0usize..3,
            step in -1.0f64..1.0,
        ) {
            let (c, g) = loss_and_gradient_from_features(LossFunction::Linear, &w, &x, y);
            let mut moved = w.clone();
            moved[k] += step;
            let c2 = LossFunction::Linear.value(dot(&moved, &x), y);
            prop_assert!((c2 - (c + g[k] * step)).abs() < 1e-12);
        }

        #[test]
        fn prediction_respects_cauchy_schwarz(
            w in prop::collection::vec(-1.0f64..1.0, 5),
            x in prop::collection::vec(-1.0f64..1.0, 5),
            u in 0.1f64..3.0,
        ) {
            let s = HypothesisSpace::new(
                FeatureMap::Identity { input_dim: 5, norm_bound: 5f64.sqrt() },
                u, ConstraintKind::L2Ball, LossFunction::Square,
            ).unwrap();
            let mut w = w;
            s.constraint().project(&mut w);
            let v = predict(&s, &w, &x).unwrap();
            prop_assert!(v.abs() <= u * 5f64.sqrt() + 1e-12);
        }
    }
}
