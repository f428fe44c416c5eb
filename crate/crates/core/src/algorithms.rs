//! Complete learners: the federated learner (per-round and intermittent
//! communication), the noncooperative baseline, their learning-rate
//! schedules and regret accounting.

use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::ExampleStream;
use crate::error::{Error, Result};
use crate::hypotheses::{loss_and_gradient_from_features, HypothesisSpace, LossFunction};
use crate::mirror::{dot, LogSimplex, SimplexPoint};
use crate::protocol::{
    aggregate_reports, apply_update, evaluate_client, run_epoch, BitCounters, DownlinkMessage, EpochSchedule,
    FrameAudit, RoundTrace, RunContext, SamplingPolicy, ServerState, SimulatedTransport, StepSizes,
    UplinkMessage,
};
use crate::rng::sampling_stream;
use crate::selection::{sample_subset, validate_subset_size};

/// Inputs of the learning-rate schedules. `horizon` is `T` for per-round
/// communication and `R` when updates happen once per epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleParams {
    pub num_spaces: usize,
    pub subset_size: usize,
    pub clients: usize,
    pub horizon: usize,
    pub radii: Vec<f64>,
    pub lipschitz: Vec<f64>,
    pub loss_bounds: Vec<f64>,
}

impl ScheduleParams {
    pub fn from_spaces(
        spaces: &[HypothesisSpace],
        subset_size: usize,
        clients: usize,
        horizon: usize,
    ) -> Result<Self> {
        let params = Self {
            num_spaces: spaces.len(),
            subset_size,
            clients,
            horizon,
            radii: spaces.iter().map(|s| s.radius).collect(),
            lipschitz: spaces.iter().map(|s| s.lipschitz_bound).collect(),
            loss_bounds: spaces.iter().map(|s| s.loss_bound).collect(),
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        validate_subset_size(self.num_spaces, self.subset_size)?;
        if self.clients == 0 || self.horizon == 0 {
            return Err(Error::InvalidConfig("M and the horizon must be positive".into()));
        }
        let k = self.num_spaces;
        if self.radii.len() != k || self.lipschitz.len() != k || self.loss_bounds.len() != k {
            return Err(Error::DimensionMismatch {
                expected: k,
                actual: self
                    .radii
                    .len()
                    .min(self.lipschitz.len())
                    .min(self.loss_bounds.len()),
            });
        }
        Ok(())
    }

    /// `g_{K,J} = (K - J) / (J - 1)`; 0 when `J = K`.
    pub fn exploration_ratio(&self) -> f64 {
        if self.subset_size >= self.num_spaces {
            0.0
        } else {
            (self.num_spaces - self.subset_size) as f64 / (self.subset_size - 1) as f64
        }
    }

    pub fn with_clients(&self, clients: usize) -> Self {
        Self {
            clients,
            ..self.clone()
        }
    }

    fn variance_factor(&self) -> f64 {
        1.0 + self.exploration_ratio() / self.clients as f64
    }
}

/// `η = √ln(K T) / (2 √((1 + g/M) T)) ∧ (J - 1) / (2 (K - J))`, constant in `t`.
pub fn eta_schedule(params: &ScheduleParams, t: usize) -> f64 {
    debug_assert!((1..=params.horizon).contains(&t));
    let (k, j) = (params.num_spaces, params.subset_size);
    let horizon = params.horizon as f64;
    // ln(K T) vanishes for K = T = 1; any positive rate is then equivalent
    let log_term = ((k as f64) * horizon).ln().max(f64::MIN_POSITIVE);
    let rate = log_term.sqrt() / (2.0 * (params.variance_factor() * horizon).sqrt());
    if j >= k {
        rate
    } else {
        rate.min((j - 1) as f64 / (2.0 * (k - j) as f64))
    }
}

/// `λ_{t,i} = U_i / (2 G_i √((1 + g/M) · max(g², t)))`.
pub fn lambda_schedule(params: &ScheduleParams, i: usize, t: usize) -> f64 {
    debug_assert!((1..=params.horizon).contains(&t));
    let g = params.exploration_ratio();
    let effective_t = (g * g).max(t as f64);
    params.radii[i] / (2.0 * params.lipschitz[i] * (params.variance_factor() * effective_t).sqrt())
}

pub fn step_sizes(params: &ScheduleParams, t: usize) -> StepSizes {
    StepSizes {
        eta: eta_schedule(params, t),
        lambdas: (0..params.num_spaces)
            .map(|i| lambda_schedule(params, i, t))
            .collect(),
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialDistribution {
    /// Mass `1 - √(K/T)` spread over the spaces with the smallest `C_i`, and
    /// `1/√(K T)` on every space.
    #[default]
    LowestLossBound,
    Uniform,
}

pub fn initial_distribution(params: &ScheduleParams, preset: InitialDistribution) -> Result<SimplexPoint> {
    let k = params.num_spaces;
    if preset == InitialDistribution::Uniform {
        return Ok(SimplexPoint::uniform(k));
    }
    if k >= params.horizon {
        log::warn!(
            "K = {k} is not below the horizon {}; starting from the uniform distribution",
            params.horizon
        );
        return Ok(SimplexPoint::uniform(k));
    }
    let min_c = params.loss_bounds.iter().copied().fold(f64::INFINITY, f64::min);
    let minimizers: Vec<bool> = params
        .loss_bounds
        .iter()
        .map(|&c| c <= min_c * (1.0 + 1e-12))
        .collect();
    let count = minimizers.iter().filter(|&&m| m).count() as f64;
    let kt = (k * params.horizon) as f64;
    let floor = 1.0 / kt.sqrt();
    let bonus = (1.0 - (k as f64 / params.horizon as f64).sqrt()) / count;
    SimplexPoint::new(
        minimizers
            .iter()
            .map(|&m| if m { bonus + floor } else { floor })
            .collect(),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LearnerMode {
    /// Server-coordinated learner communicating `epochs` times; `epochs = T`
    /// is per-round communication.
    Federated { epochs: usize },
    /// Every client runs its own learner; no communication.
    Noncooperative,
}

#[derive(Debug, Clone)]
pub struct LearnerConfig {
    pub mode: LearnerMode,
    pub spaces: Vec<HypothesisSpace>,
    pub loss: LossFunction,
    pub subset_size: usize,
    pub horizon: usize,
    pub initial: InitialDistribution,
    pub sampling: SamplingPolicy,
    pub master_seed: u64,
    /// Frame, decode and compare every message.
    pub audit_frames: bool,
}

impl LearnerConfig {
    pub fn new(
        mode: LearnerMode,
        spaces: Vec<HypothesisSpace>,
        loss: LossFunction,
        subset_size: usize,
        horizon: usize,
        master_seed: u64,
    ) -> Self {
        Self {
            mode,
            spaces,
            loss,
            subset_size,
            horizon,
            initial: InitialDistribution::default(),
            sampling: SamplingPolicy::default(),
            master_seed,
            audit_frames: false,
        }
    }

    fn check_streams(&self, streams: &[ExampleStream]) -> Result<()> {
        if streams.is_empty() {
            return Err(Error::InvalidConfig("no client streams".into()));
        }
        if self.spaces.is_empty() {
            return Err(Error::InvalidConfig("no hypothesis spaces".into()));
        }
        for space in &self.spaces {
            space.validate()?;
        }
        for (client, s) in streams.iter().enumerate() {
            if s.len() < self.horizon {
                return Err(Error::InvalidConfig(format!(
                    "client {client} has {} examples, horizon is {}",
                    s.len(),
                    self.horizon
                )));
            }
            for space in &self.spaces {
                if s.input_dim() != Some(space.feature_map.input_dim()) {
                    return Err(Error::DimensionMismatch {
                        expected: space.feature_map.input_dim(),
                        actual: s.input_dim().unwrap_or(0),
                    });
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Federated,
    Noncooperative,
}

/// Everything a run produced.
#[derive(Debug, Clone)]
pub struct RunArtifact {
    pub algorithm: Algorithm,
    pub clients: usize,
    pub horizon: usize,
    /// Sorted by `(round, client)`.
    pub traces: Vec<RoundTrace>,
    pub bits: BitCounters,
    /// One entry for the federated learner, one per client otherwise.
    pub final_probabilities: Vec<Vec<f64>>,
    pub final_models: Vec<Vec<Vec<f64>>>,
    pub audits: Vec<FrameAudit>,
    pub elapsed: Duration,
}

impl RunArtifact {
    /// Sum of lead-model losses over all clients and rounds.
    pub fn cumulative_loss(&self) -> f64 {
        self.traces.iter().map(|t| t.loss).sum()
    }

    pub fn client_traces(&self, client: usize) -> impl Iterator<Item = &RoundTrace> {
        self.traces.iter().filter(move |t| t.client == client)
    }
}

/// Runs the federated learner in the mode's epoch count. With `epochs = T`
/// each round is one synchronous exchange; otherwise decisions are frozen
/// within each epoch.
pub fn run_fomd_oms(config: &LearnerConfig, streams: &[ExampleStream]) -> Result<RunArtifact> {
    let epochs = federated_epochs(config)?;
    if epochs == config.horizon {
        run_per_round(config, streams)
    } else {
        run_fomd_oms_epochs(config, streams)
    }
}

fn federated_epochs(config: &LearnerConfig) -> Result<usize> {
    match config.mode {
        LearnerMode::Federated { epochs } => Ok(epochs),
        LearnerMode::Noncooperative => Err(Error::InvalidConfig(
            "the federated learner needs a federated mode".into(),
        )),
    }
}

/// The epoch engine, used for every `R` including `R = T`.
pub fn run_fomd_oms_epochs(config: &LearnerConfig, streams: &[ExampleStream]) -> Result<RunArtifact> {
    config.check_streams(streams)?;
    let schedule = EpochSchedule::new(config.horizon, federated_epochs(config)?)?;
    let m = streams.len();
    let params = ScheduleParams::from_spaces(&config.spaces, config.subset_size, m, schedule.epochs())?;
    let p1 = initial_distribution(&params, config.initial)?;
    let ctx = RunContext {
        spaces: &config.spaces,
        loss: config.loss,
        subset_size: config.subset_size,
        schedule,
        sampling: config.sampling,
    };
    let started = Instant::now();
    let mut state = ServerState::new(LogSimplex::from_point(&p1), &config.spaces, config.master_seed);
    let mut transport = SimulatedTransport::new(config.audit_frames);
    let mut traces = Vec::with_capacity(m * config.horizon);
    for r in 1..=schedule.epochs() {
        let rates = step_sizes(&params, r);
        traces.extend(run_epoch(&mut state, &ctx, streams, r, &rates, &mut transport)?);
    }
    Ok(RunArtifact {
        algorithm: Algorithm::Federated,
        clients: m,
        horizon: config.horizon,
        traces,
        bits: transport.counters,
        final_probabilities: vec![state.probabilities.probabilities()],
        final_models: vec![state.models],
        audits: transport.audits,
        elapsed: started.elapsed(),
    })
}

/// One exchange per round: sample, download, predict, upload, update.
fn run_per_round(config: &LearnerConfig, streams: &[ExampleStream]) -> Result<RunArtifact> {
    config.check_streams(streams)?;
    let m = streams.len();
    let params = ScheduleParams::from_spaces(&config.spaces, config.subset_size, m, config.horizon)?;
    let p1 = initial_distribution(&params, config.initial)?;
    let ctx = RunContext {
        spaces: &config.spaces,
        loss: config.loss,
        subset_size: config.subset_size,
        schedule: EpochSchedule::new(config.horizon, config.horizon)?,
        sampling: config.sampling,
    };
    let dims = ctx.dims();
    let started = Instant::now();
    let mut probabilities = LogSimplex::from_point(&p1);
    let mut models: Vec<Vec<f64>> = config
        .spaces
        .iter()
        .map(HypothesisSpace::initial_parameters)
        .collect();
    let mut transport = SimulatedTransport::new(config.audit_frames);
    let mut traces = Vec::with_capacity(m * config.horizon);
    let mut phi = Vec::new();

    for t in 1..=config.horizon {
        let p = probabilities.probabilities();
        let mut outcomes = Vec::with_capacity(m);
        let mut reports = Vec::with_capacity(m);
        for (client, stream) in streams.iter().enumerate() {
            let mut rng = sampling_stream(config.master_seed, config.sampling.actor(client), t);
            let outcome = sample_subset(&p, config.subset_size, &mut rng)?;
            let indices = outcome.indices().to_vec();
            let down = DownlinkMessage {
                epoch: t,
                client,
                indices: indices.clone(),
                models: indices.iter().map(|&i| models[i].clone()).collect(),
            };
            let downlink_bits = transport.send_downlink(&down, &dims)?;

            let example = stream.get(t - 1).ok_or(Error::StreamExhausted {
                client,
                round: t,
                available: stream.len(),
            })?;
            let (prediction, evals) =
                evaluate_client(&ctx, &models, &outcome, &example.x, example.y, &mut phi)?;
            let lead_loss = evals[0].0;
            let (losses, gradients) = evals.into_iter().unzip();
            let up = UplinkMessage {
                epoch: t,
                client,
                indices,
                losses,
                gradients,
            };
            let uplink_bits = transport.send_uplink(&up, &dims)?;
            traces.push(RoundTrace {
                round: t,
                client,
                epoch: t,
                lead_index: outcome.lead(),
                prediction,
                loss: lead_loss,
                uplink_bits,
                downlink_bits,
                target: example.y,
            });
            outcomes.push(outcome);
            reports.push(up);
        }
        let (c_bar, grad_bar) = aggregate_reports(&reports, &outcomes, &dims)?;
        apply_update(
            &mut probabilities,
            &mut models,
            &config.spaces,
            &c_bar,
            &grad_bar,
            &step_sizes(&params, t),
        )?;
    }
    Ok(RunArtifact {
        algorithm: Algorithm::Federated,
        clients: m,
        horizon: config.horizon,
        traces,
        bits: transport.counters,
        final_probabilities: vec![probabilities.probabilities()],
        final_models: vec![models],
        audits: transport.audits,
        elapsed: started.elapsed(),
    })
}

struct ClientRun {
    traces: Vec<RoundTrace>,
    probabilities: Vec<f64>,
    models: Vec<Vec<f64>>,
}

/// Runs `M` independent single-client learners with `M = 1` schedules. Client
/// `j` draws its subsets from the same substream as client `j` of the
/// federated learner. The mode field of `config` is ignored.
pub fn run_nco_oms(config: &LearnerConfig, streams: &[ExampleStream]) -> Result<RunArtifact> {
    config.check_streams(streams)?;
    let params = ScheduleParams::from_spaces(&config.spaces, config.subset_size, 1, config.horizon)?;
    let p1 = initial_distribution(&params, config.initial)?;
    let ctx = RunContext {
        spaces: &config.spaces,
        loss: config.loss,
        subset_size: config.subset_size,
        schedule: EpochSchedule::new(config.horizon, config.horizon)?,
        sampling: config.sampling,
    };
    let dims = ctx.dims();
    let started = Instant::now();

    let runs = streams
        .par_iter()
        .enumerate()
        .map(|(client, stream)| -> Result<ClientRun> {
            let mut probabilities = LogSimplex::from_point(&p1);
            let mut models: Vec<Vec<f64>> = config
                .spaces
                .iter()
                .map(HypothesisSpace::initial_parameters)
                .collect();
            let mut traces = Vec::with_capacity(config.horizon);
            let mut phi = Vec::new();
            for t in 1..=config.horizon {
                let p = probabilities.probabilities();
                let mut rng = sampling_stream(config.master_seed, config.sampling.actor(client), t);
                let outcome = sample_subset(&p, config.subset_size, &mut rng)?;
                let example = stream.get(t - 1).ok_or(Error::StreamExhausted {
                    client,
                    round: t,
                    available: stream.len(),
                })?;
                let (prediction, evals) =
                    evaluate_client(&ctx, &models, &outcome, &example.x, example.y, &mut phi)?;
                traces.push(RoundTrace {
                    round: t,
                    client,
                    epoch: t,
                    lead_index: outcome.lead(),
                    prediction,
                    loss: evals[0].0,
                    uplink_bits: 0,
                    downlink_bits: 0,
                    target: example.y,
                });
                let (losses, gradients) = evals.into_iter().unzip();
                // the local learner is its own single-client server
                let report = UplinkMessage {
                    epoch: t,
                    client: 0,
                    indices: outcome.indices().to_vec(),
                    losses,
                    gradients,
                };
                let (c_bar, grad_bar) = aggregate_reports(&[report], std::slice::from_ref(&outcome), &dims)?;
                apply_update(
                    &mut probabilities,
                    &mut models,
                    &config.spaces,
                    &c_bar,
                    &grad_bar,
                    &step_sizes(&params, t),
                )?;
            }
            Ok(ClientRun {
                traces,
                probabilities: probabilities.probabilities(),
                models,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut traces: Vec<RoundTrace> = Vec::with_capacity(streams.len() * config.horizon);
    let mut final_probabilities = Vec::with_capacity(runs.len());
    let mut final_models = Vec::with_capacity(runs.len());
    for run in runs {
        traces.extend(run.traces);
        final_probabilities.push(run.probabilities);
        final_models.push(run.models);
    }
    traces.sort_by_key(|t| (t.round, t.client));
    Ok(RunArtifact {
        algorithm: Algorithm::Noncooperative,
        clients: streams.len(),
        horizon: config.horizon,
        traces,
        bits: BitCounters::default(),
        final_probabilities,
        final_models,
        audits: Vec::new(),
        elapsed: started.elapsed(),
    })
}

/// Dispatches on `config.mode`.
pub fn run_learner(config: &LearnerConfig, streams: &[ExampleStream]) -> Result<RunArtifact> {
    match config.mode {
        LearnerMode::Federated { .. } => run_fomd_oms(config, streams),
        LearnerMode::Noncooperative => run_nco_oms(config, streams),
    }
}

fn comparator_loss(
    space: &HypothesisSpace,
    loss: LossFunction,
    w: &[f64],
    streams: &[ExampleStream],
    cells: impl Iterator<Item = (usize, usize)>,
) -> Result<f64> {
    let mut phi = Vec::new();
    let mut total = 0.0;
    for (round, client) in cells {
        let stream = streams
            .get(client)
            .ok_or_else(|| Error::InvalidConfig(format!("no stream for client {client}")))?;
        let example = stream.get(round - 1).ok_or(Error::StreamExhausted {
            client,
            round,
            available: stream.len(),
        })?;
        space.feature_map.featurize_into(&example.x, &mut phi)?;
        total += loss.value(dot(w, &phi), example.y);
    }
    Ok(total)
}

fn check_comparator(space: &HypothesisSpace, w: &[f64]) -> Result<()> {
    if w.len() != space.dim() {
        return Err(Error::DimensionMismatch {
            expected: space.dim(),
            actual: w.len(),
        });
    }
    if !space.constraint().contains(w, 1e-9) {
        return Err(Error::Domain("comparator lies outside the feasible set".into()));
    }
    Ok(())
}

/// Cumulative lead-model loss of `traces` minus the loss the fixed
/// `comparator` in `space` would have suffered on the same (round, client)
/// cells.
pub fn regret_accounting(
    traces: &[RoundTrace],
    streams: &[ExampleStream],
    space: &HypothesisSpace,
    loss: LossFunction,
    comparator: &[f64],
) -> Result<f64> {
    check_comparator(space, comparator)?;
    let learner: f64 = traces.iter().map(|t| t.loss).sum();
    let fixed = comparator_loss(
        space,
        loss,
        comparator,
        streams,
        traces.iter().map(|t| (t.round, t.client)),
    )?;
    Ok(learner - fixed)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparatorFit {
    pub weights: Vec<f64>,
    /// Total loss of `weights` over the fitted examples.
    pub objective: f64,
    pub steps: usize,
    /// Square loss: norm of the projected-gradient step `L‖w - P(w - ∇f/L)‖`
    /// at the returned point, per example. Other losses: relative objective
    /// improvement over the last tenth of the steps.
    pub tolerance: f64,
}

/// Offline best fixed hypothesis in `space` over the first `horizon` examples
/// of every stream, by full-batch projected gradient descent.
pub fn offline_comparator(
    space: &HypothesisSpace,
    loss: LossFunction,
    streams: &[ExampleStream],
    horizon: usize,
    steps: usize,
) -> Result<ComparatorFit> {
    let mut features = Vec::with_capacity(streams.len() * horizon);
    let mut targets = Vec::with_capacity(streams.len() * horizon);
    for (client, stream) in streams.iter().enumerate() {
        if stream.len() < horizon {
            return Err(Error::StreamExhausted {
                client,
                round: horizon,
                available: stream.len(),
            });
        }
        for e in &stream.examples()[..horizon] {
            features.push(space.feature_map.featurize(&e.x)?);
            targets.push(e.y);
        }
    }
    let objective = |w: &[f64]| -> f64 {
        features
            .iter()
            .zip(&targets)
            .map(|(phi, &y)| loss.value(dot(w, phi), y))
            .sum()
    };
    if !space.is_learned() {
        let w = space.initial_parameters();
        return Ok(ComparatorFit {
            objective: objective(&w),
            weights: w,
            steps: 0,
            tolerance: 0.0,
        });
    }
    let constraint = space.constraint();
    let d = space.dim();
    let n = features.len().max(1) as f64;

    if loss == LossFunction::Square {
        // objective = wᵀAw - 2cᵀw + Σy², gradient 2(Aw - c); FISTA with step 1/L
        let mut a = vec![0.0; d * d];
        let mut c = vec![0.0; d];
        for (phi, &y) in features.iter().zip(&targets) {
            for r in 0..d {
                c[r] += phi[r] * y;
                for s in 0..d {
                    a[r * d + s] += phi[r] * phi[s];
                }
            }
        }
        let grad = |w: &[f64]| -> Vec<f64> {
            (0..d)
                .map(|r| 2.0 * (dot(&a[r * d..(r + 1) * d], w) - c[r]))
                .collect()
        };
        // ‖A‖_F bounds the largest eigenvalue
        let lipschitz = (2.0 * a.iter().map(|v| v * v).sum::<f64>().sqrt()).max(f64::MIN_POSITIVE);
        let projected_step = |w: &[f64]| -> Vec<f64> {
            let g = grad(w);
            let mut next: Vec<f64> = w.iter().zip(&g).map(|(wi, gi)| wi - gi / lipschitz).collect();
            constraint.project(&mut next);
            next
        };
        let mut w = vec![0.0; d];
        let mut y = w.clone();
        let mut momentum = 1.0f64;
        for _ in 0..steps {
            let next = projected_step(&y);
            let next_momentum = (1.0 + (1.0 + 4.0 * momentum * momentum).sqrt()) / 2.0;
            let beta = (momentum - 1.0) / next_momentum;
            y = next.iter().zip(&w).map(|(a, b)| a + beta * (a - b)).collect();
            w = next;
            momentum = next_momentum;
        }
        let mapped = projected_step(&w);
        let gap = w
            .iter()
            .zip(&mapped)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        return Ok(ComparatorFit {
            objective: objective(&w),
            tolerance: lipschitz * gap / n,
            weights: w,
            steps,
        });
    }

    // subgradient method with decaying steps, keeping the best iterate
    let g_bound = space.lipschitz_bound.max(f64::MIN_POSITIVE);
    let mut w = vec![0.0; d];
    let mut best = (objective(&w), w.clone());
    let mut at_ninety = best.0;
    for k in 1..=steps {
        let mut g = vec![0.0; d];
        for (phi, &y) in features.iter().zip(&targets) {
            let (_, gi) = loss_and_gradient_from_features(loss, &w, phi, y);
            g.iter_mut().zip(&gi).for_each(|(a, b)| *a += b);
        }
        let step = space.radius / (g_bound * n * (k as f64).sqrt());
        w.iter_mut().zip(&g).for_each(|(wi, gi)| *wi -= step * gi);
        constraint.project(&mut w);
        let value = objective(&w);
        if value < best.0 {
            best = (value, w.clone());
        }
        if k == steps - steps / 10 {
            at_ninety = best.0;
        }
    }
    Ok(ComparatorFit {
        tolerance: (at_ninety - best.0) / best.0.abs().max(f64::MIN_POSITIVE),
        objective: best.0,
        weights: best.1,
        steps,
    })
}
