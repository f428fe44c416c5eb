//! Synthetic streams: a planted linear-regression task and the two
//! adversarial constructions used to separate cooperative from
//! noncooperative learners.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::{Example, ExampleStream};
use crate::error::{Error, Result};
use crate::hypotheses::{HypothesisSpace, LossFunction};
use crate::rng::{substream, StreamPurpose};

// actor ids for draws that do not belong to a client
const PLANT_ACTOR: u64 = u64::MAX;
const SHARED_ACTOR: u64 = u64::MAX - 1;

/// i.i.d. regression stream with a planted weight vector.
///
/// Inputs are uniform on `[0, 1]^d / √d` (so `‖x‖ ≤ 1`), the planted `w*` has
/// positive coordinates and norm `target_norm`, and
/// `y = clamp(<w*, x> + noise, 0, 1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinearStreamSpec {
    pub input_dim: usize,
    pub clients: usize,
    pub horizon: usize,
    #[serde(default = "default_noise")]
    pub noise: f64,
    #[serde(default = "default_target_norm")]
    pub target_norm: f64,
    /// Every client sees the same stream.
    #[serde(default)]
    pub identical_clients: bool,
    pub seed: u64,
}

fn default_noise() -> f64 {
    0.1
}

fn default_target_norm() -> f64 {
    0.5
}

impl LinearStreamSpec {
    pub fn new(input_dim: usize, clients: usize, horizon: usize, seed: u64) -> Self {
        Self {
            input_dim,
            clients,
            horizon,
            noise: default_noise(),
            target_norm: default_target_norm(),
            identical_clients: false,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.clients == 0 || self.horizon == 0 {
            return Err(Error::InvalidConfig(
                "linear stream needs d, M and T positive".into(),
            ));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite())
            || !(self.target_norm > 0.0 && self.target_norm <= 1.0)
        {
            return Err(Error::InvalidConfig(
                "noise must be ≥ 0 and target norm in (0, 1]".into(),
            ));
        }
        Ok(())
    }

    pub fn planted_weights(&self) -> Vec<f64> {
        let mut rng = substream(self.seed, StreamPurpose::Data, PLANT_ACTOR, 0);
        let raw: Vec<f64> = (0..self.input_dim).map(|_| rng.random_range(0.5..1.0)).collect();
        let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
        raw.iter().map(|v| v * self.target_norm / norm).collect()
    }

    pub fn generate(&self) -> Result<Vec<ExampleStream>> {
        self.validate()?;
        let w = self.planted_weights();
        let scale = 1.0 / (self.input_dim as f64).sqrt();
        let noise = Normal::new(0.0, self.noise).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        let one = |actor: u64| -> ExampleStream {
            let mut rng = substream(self.seed, StreamPurpose::Data, actor, 0);
            (0..self.horizon)
                .map(|_| {
                    let x: Vec<f64> = (0..self.input_dim).map(|_| rng.random::<f64>() * scale).collect();
                    let clean: f64 = x.iter().zip(&w).map(|(a, b)| a * b).sum();
                    let y = (clean + noise.sample(&mut rng)).clamp(0.0, 1.0);
                    Example { x, y }
                })
                .collect()
        };
        Ok(if self.identical_clients {
            vec![one(SHARED_ACTOR); self.clients]
        } else {
            (0..self.clients).map(|j| one(j as u64)).collect()
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AdversarialKind {
    /// Coordinates and labels are fair coins; absolute loss.
    BernoulliSymmetric,
    /// Labels are 1 and one hidden coordinate is more often 1; linear loss.
    BiasedArm {
        /// Defaults to `√K / (3 √(J T))`.
        #[serde(default)]
        rho: Option<f64>,
        /// Drawn uniformly when absent.
        #[serde(default)]
        hidden_arm: Option<usize>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdversarialSpec {
    pub kind: AdversarialKind,
    pub num_spaces: usize,
    pub input_dim: usize,
    pub horizon: usize,
    pub clients: usize,
    pub subset_size: usize,
    pub seed: u64,
}

/// `ρ = √K / (3 √(J T))`.
pub fn default_bias(k: usize, j: usize, t: usize) -> f64 {
    (k as f64).sqrt() / (3.0 * ((j * t) as f64).sqrt())
}

/// Streams plus the basis spaces and loss they are meant to be played with.
#[derive(Debug, Clone)]
pub struct AdversarialInstance {
    pub streams: Vec<ExampleStream>,
    pub spaces: Vec<HypothesisSpace>,
    pub loss: LossFunction,
    pub hidden_arm: Option<usize>,
    pub rho: Option<f64>,
}

impl AdversarialSpec {
    pub fn validate(&self) -> Result<()> {
        let (k, d, t) = (self.num_spaces, self.input_dim, self.horizon);
        if k < 5 || k > d.min(t) {
            return Err(Error::InvalidConfig(format!(
                "adversarial streams need 5 <= K <= min(d, T); got K = {k}, d = {d}, T = {t}"
            )));
        }
        if self.clients == 0 || self.subset_size == 0 || self.subset_size > k {
            return Err(Error::InvalidConfig("need M >= 1 and 1 <= J <= K".into()));
        }
        if let AdversarialKind::BiasedArm { rho, hidden_arm } = self.kind {
            if let Some(r) = rho {
                if !(0.0..=1.0).contains(&r) {
                    return Err(Error::InvalidConfig(format!("bias {r} outside [0, 1]")));
                }
            }
            if hidden_arm.is_some_and(|h| h >= k) {
                return Err(Error::InvalidConfig("hidden arm out of range".into()));
            }
        }
        Ok(())
    }

    pub fn loss(&self) -> LossFunction {
        match self.kind {
            AdversarialKind::BernoulliSymmetric => LossFunction::Absolute,
            AdversarialKind::BiasedArm { .. } => LossFunction::Linear,
        }
    }

    /// `F_i = {x ↦ x_i}` for `i < K`. Inputs are 0/1 and targets 0/1, so every
    /// loss lies in `[0, 1]` and every gradient has norm at most 1.
    pub fn spaces(&self) -> Result<Vec<HypothesisSpace>> {
        (0..self.num_spaces)
            .map(|i| HypothesisSpace::basis(i, self.input_dim, 1.0, self.loss())?.with_bounds(1.0, 1.0))
            .collect()
    }

    pub fn generate(&self) -> Result<AdversarialInstance> {
        self.validate()?;
        let k = self.num_spaces;
        let mut rng = substream(self.seed, StreamPurpose::Data, SHARED_ACTOR, 0);
        let (hidden_arm, rho) = match self.kind {
            AdversarialKind::BernoulliSymmetric => (None, None),
            AdversarialKind::BiasedArm { rho, hidden_arm } => {
                let h = hidden_arm.unwrap_or_else(|| {
                    substream(self.seed, StreamPurpose::Data, PLANT_ACTOR, 0).random_range(0..k)
                });
                (
                    Some(h),
                    Some(rho.unwrap_or_else(|| default_bias(k, self.subset_size, self.horizon))),
                )
            }
        };
        let stream: ExampleStream = (0..self.horizon)
            .map(|_| {
                let mut x = vec![0.0; self.input_dim];
                for (i, xi) in x.iter_mut().enumerate().take(k) {
                    let p_one = match (hidden_arm, rho) {
                        (Some(h), Some(r)) if h == i => (1.0 + r) / 2.0,
                        (Some(_), Some(r)) => (1.0 - r) / 2.0,
                        _ => 0.5,
                    };
                    *xi = if rng.random::<f64>() < p_one { 1.0 } else { 0.0 };
                }
                let y = match self.kind {
                    AdversarialKind::BernoulliSymmetric => {
                        if rng.random::<f64>() < 0.5 {
                            1.0
                        } else {
                            0.0
                        }
                    }
                    AdversarialKind::BiasedArm { .. } => 1.0,
                };
                Example { x, y }
            })
            .collect();
        Ok(AdversarialInstance {
            streams: vec![stream; self.clients],
            spaces: self.spaces()?,
            loss: self.loss(),
            hidden_arm,
            rho,
        })
    }
}
