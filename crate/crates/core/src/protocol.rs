//! Server/client message model with intermittent communication.
//!
//! Time is split into `R` epochs of `N = T / R` rounds. At the first round of
//! an epoch the server samples a subset for every client and ships the
//! selected models; clients predict with the lead model for the whole epoch
//! and upload epoch-averaged raw losses and gradients at its last round. The
//! server reweights each upload by that client's inclusion probabilities,
//! averages over clients and takes one mirror step for `p` and every `w_i`.
//!
//! Wire format (little endian):
//!
//! ```text
//! header  (16 bytes): epoch u32 | client u32 | payload length in bits u64
//! payload           : J indices, ceil(log2 K) bits each, LSB first,
//!                     then f32 values bit-packed directly after them
//!                     downlink: w_i for each index in order
//!                     uplink:   (loss_i, gradient_i) for each index in order
//!                     zero padding to the next byte
//! ```

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::data::ExampleStream;
use crate::error::{Error, Result};
use crate::hypotheses::{loss_and_gradient_from_features, HypothesisSpace, LossFunction};
use crate::mirror::{dot, euclidean_step, l2_norm, EuclideanGeometry, LogSimplex, WeightedEntropyGeometry};
use crate::rng::sampling_stream;
use crate::selection::{estimate_gradients, estimate_losses, sample_subset, SamplingOutcome};

pub const FRAME_HEADER_BYTES: usize = 16;
pub const FLOAT_BITS: u64 = 32;

/// Partition of rounds `1..=T` into `R` consecutive epochs of equal length.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EpochSchedule {
    horizon: usize,
    epochs: usize,
}

impl EpochSchedule {
    pub fn new(horizon: usize, epochs: usize) -> Result<Self> {
        if horizon == 0 || epochs == 0 {
            return Err(Error::InvalidConfig(
                "horizon and epoch count must be positive".into(),
            ));
        }
        if !horizon.is_multiple_of(epochs) {
            return Err(Error::InvalidConfig(format!(
                "horizon T = {horizon} is not divisible by the number of epochs R = {epochs}"
            )));
        }
        Ok(Self { horizon, epochs })
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn epochs(&self) -> usize {
        self.epochs
    }

    /// `N = T / R`.
    pub fn epoch_length(&self) -> usize {
        self.horizon / self.epochs
    }

    /// Rounds of epoch `r ∈ 1..=R`, as 1-based round numbers.
    pub fn rounds(&self, r: usize) -> std::ops::RangeInclusive<usize> {
        assert!((1..=self.epochs).contains(&r), "epoch {r} out of range");
        let n = self.epoch_length();
        (r - 1) * n + 1..=r * n
    }

    pub fn epoch_of(&self, round: usize) -> usize {
        (round - 1) / self.epoch_length() + 1
    }
}

/// `ceil(log2 K)`; zero for `K = 1`.
pub fn index_bits(k: usize) -> u64 {
    assert!(k > 0);
    (usize::BITS - (k - 1).leading_zeros()) as u64
}

#[derive(Debug, Clone, PartialEq)]
pub struct DownlinkMessage {
    pub epoch: usize,
    pub client: usize,
    pub indices: Vec<usize>,
    pub models: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UplinkMessage {
    pub epoch: usize,
    pub client: usize,
    pub indices: Vec<usize>,
    /// Epoch-averaged raw losses, aligned with `indices`.
    pub losses: Vec<f64>,
    /// Epoch-averaged raw gradients, aligned with `indices`.
    pub gradients: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Copy)]
pub enum Message<'a> {
    Downlink(&'a DownlinkMessage),
    Uplink(&'a UplinkMessage),
}

/// Payload size of a message in bits.
pub fn account_bits(message: Message<'_>, k: usize) -> u64 {
    let ib = index_bits(k);
    match message {
        Message::Downlink(m) => {
            let floats: usize = m.models.iter().map(Vec::len).sum();
            FLOAT_BITS * floats as u64 + m.indices.len() as u64 * ib
        }
        Message::Uplink(m) => {
            let floats: usize = m.gradients.iter().map(Vec::len).sum::<usize>() + m.losses.len();
            FLOAT_BITS * floats as u64 + m.indices.len() as u64 * ib
        }
    }
}

/// Upload size under the alternative reading that counts `J (Σ d_i + 1)`
/// floats per client; reported by the audit next to [`account_bits`].
pub fn upload_bits_alternative(sum_dims: usize, j: usize, k: usize) -> u64 {
    let j = j as u64;
    FLOAT_BITS * j * (sum_dims as u64 + 1) + j * index_bits(k)
}

#[derive(Default)]
struct BitWriter {
    bytes: Vec<u8>,
    bits: u64,
}

impl BitWriter {
    fn write(&mut self, value: u64, width: u64) {
        for b in 0..width {
            let byte = (self.bits / 8) as usize;
            if byte == self.bytes.len() {
                self.bytes.push(0);
            }
            if (value >> b) & 1 == 1 {
                self.bytes[byte] |= 1 << (self.bits % 8);
            }
            self.bits += 1;
        }
    }

    fn write_f32(&mut self, v: f64) {
        self.write((v as f32).to_bits() as u64, FLOAT_BITS);
    }
}

struct BitReader<'a> {
    bytes: &'a [u8],
    pos: u64,
    limit: u64,
}

impl BitReader<'_> {
    fn read(&mut self, width: u64) -> Result<u64> {
        if self.pos + width > self.limit {
            return Err(Error::Frame("payload ended early".into()));
        }
        let mut v = 0u64;
        for b in 0..width {
            let bit = (self.bytes[(self.pos / 8) as usize] >> (self.pos % 8)) & 1;
            v |= (bit as u64) << b;
            self.pos += 1;
        }
        Ok(v)
    }

    fn read_f32(&mut self) -> Result<f64> {
        Ok(f32::from_bits(self.read(FLOAT_BITS)? as u32) as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrameHeader {
    pub epoch: u32,
    pub client: u32,
    pub payload_bits: u64,
}

/// A serialized message.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub header: FrameHeader,
    pub payload: Vec<u8>,
}

impl Frame {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(FRAME_HEADER_BYTES + self.payload.len());
        out.extend_from_slice(&self.header.epoch.to_le_bytes());
        out.extend_from_slice(&self.header.client.to_le_bytes());
        out.extend_from_slice(&self.header.payload_bits.to_le_bytes());
        out.extend_from_slice(&self.payload);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < FRAME_HEADER_BYTES {
            return Err(Error::Frame(format!(
                "{} bytes is shorter than the header",
                bytes.len()
            )));
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
        let header = FrameHeader {
            epoch: u32_at(0),
            client: u32_at(4),
            payload_bits: u64::from_le_bytes(bytes[8..16].try_into().unwrap()),
        };
        let payload = bytes[FRAME_HEADER_BYTES..].to_vec();
        let expected = header.payload_bits.div_ceil(8) as usize;
        if payload.len() != expected {
            return Err(Error::Frame(format!(
                "payload has {} bytes, header announces {} bits",
                payload.len(),
                header.payload_bits
            )));
        }
        let used = header.payload_bits % 8;
        if used != 0 && payload[expected - 1] >> used != 0 {
            return Err(Error::Frame("non-zero padding bits".into()));
        }
        Ok(Self { header, payload })
    }

    fn reader(&self) -> BitReader<'_> {
        BitReader {
            bytes: &self.payload,
            pos: 0,
            limit: self.header.payload_bits,
        }
    }
}

fn header(epoch: usize, client: usize, bits: u64) -> Result<FrameHeader> {
    let narrow = |v: usize, what: &str| {
        u32::try_from(v).map_err(|_| Error::Frame(format!("{what} {v} does not fit in 32 bits")))
    };
    Ok(FrameHeader {
        epoch: narrow(epoch, "epoch")?,
        client: narrow(client, "client id")?,
        payload_bits: bits,
    })
}

pub fn encode_downlink(msg: &DownlinkMessage, k: usize) -> Result<Frame> {
    let ib = index_bits(k);
    let mut w = BitWriter::default();
    for &i in &msg.indices {
        w.write(i as u64, ib);
    }
    for model in &msg.models {
        model.iter().for_each(|&v| w.write_f32(v));
    }
    Ok(Frame {
        header: header(msg.epoch, msg.client, w.bits)?,
        payload: w.bytes,
    })
}

pub fn encode_uplink(msg: &UplinkMessage, k: usize) -> Result<Frame> {
    let ib = index_bits(k);
    let mut w = BitWriter::default();
    for &i in &msg.indices {
        w.write(i as u64, ib);
    }
    for (loss, grad) in msg.losses.iter().zip(&msg.gradients) {
        w.write_f32(*loss);
        grad.iter().for_each(|&v| w.write_f32(v));
    }
    Ok(Frame {
        header: header(msg.epoch, msg.client, w.bits)?,
        payload: w.bytes,
    })
}

fn read_indices(r: &mut BitReader<'_>, k: usize, j: usize) -> Result<Vec<usize>> {
    (0..j)
        .map(|_| {
            let i = r.read(index_bits(k))? as usize;
            if i >= k {
                Err(Error::Frame(format!("index {i} out of range for K = {k}")))
            } else {
                Ok(i)
            }
        })
        .collect()
}

fn finish(r: &BitReader<'_>) -> Result<()> {
    if r.pos != r.limit {
        return Err(Error::Frame(format!("{} trailing payload bits", r.limit - r.pos)));
    }
    Ok(())
}

/// Decodes a downlink frame; `dims[i]` is `d_i` for every space. Floats come
/// back at single precision.
pub fn decode_downlink(frame: &Frame, dims: &[usize], j: usize) -> Result<DownlinkMessage> {
    let mut r = frame.reader();
    let indices = read_indices(&mut r, dims.len(), j)?;
    let models = indices
        .iter()
        .map(|&i| (0..dims[i]).map(|_| r.read_f32()).collect::<Result<Vec<_>>>())
        .collect::<Result<Vec<_>>>()?;
    finish(&r)?;
    Ok(DownlinkMessage {
        epoch: frame.header.epoch as usize,
        client: frame.header.client as usize,
        indices,
        models,
    })
}

pub fn decode_uplink(frame: &Frame, dims: &[usize], j: usize) -> Result<UplinkMessage> {
    let mut r = frame.reader();
    let indices = read_indices(&mut r, dims.len(), j)?;
    let mut losses = Vec::with_capacity(j);
    let mut gradients = Vec::with_capacity(j);
    for &i in &indices {
        losses.push(r.read_f32()?);
        gradients.push((0..dims[i]).map(|_| r.read_f32()).collect::<Result<Vec<_>>>()?);
    }
    finish(&r)?;
    Ok(UplinkMessage {
        epoch: frame.header.epoch as usize,
        client: frame.header.client as usize,
        indices,
        losses,
        gradients,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Uplink,
    Downlink,
}

/// One audited message: the accounted size against the encoded frame.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameAudit {
    pub direction: Direction,
    pub epoch: usize,
    pub client: usize,
    pub accounted_bits: u64,
    pub frame_payload_bits: u64,
    pub frame_payload_bytes: usize,
    pub frame_total_bytes: usize,
    /// The decoded frame reproduced the message at single precision.
    pub round_trip_ok: bool,
}

impl FrameAudit {
    pub fn consistent(&self) -> bool {
        self.round_trip_ok
            && self.accounted_bits == self.frame_payload_bits
            && self.frame_payload_bytes as u64 == self.frame_payload_bits.div_ceil(8)
            && self.frame_total_bytes == FRAME_HEADER_BYTES + self.frame_payload_bytes
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BitCounters {
    pub uplink_bits: u64,
    pub downlink_bits: u64,
    pub uplink_messages: u64,
    pub downlink_messages: u64,
}

/// In-memory transport. Every message is accounted; with auditing enabled it
/// is also framed, queued as bytes, dequeued, decoded and compared.
#[derive(Debug, Clone, Default)]
pub struct SimulatedTransport {
    pub counters: BitCounters,
    audit: bool,
    queue: VecDeque<Vec<u8>>,
    pub audits: Vec<FrameAudit>,
}

fn same_at_f32(a: &[f64], b: &[f64]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (*x as f32) as f64 == *y)
}

impl SimulatedTransport {
    pub fn new(audit: bool) -> Self {
        Self {
            audit,
            ..Self::default()
        }
    }

    pub fn auditing(&self) -> bool {
        self.audit
    }

    fn pass_through(&mut self, frame: Frame) -> Result<(Frame, usize)> {
        self.queue.push_back(frame.to_bytes());
        let bytes = self.queue.pop_front().expect("frame just queued");
        Ok((Frame::from_bytes(&bytes)?, bytes.len()))
    }

    pub fn send_downlink(&mut self, msg: &DownlinkMessage, dims: &[usize]) -> Result<u64> {
        let bits = account_bits(Message::Downlink(msg), dims.len());
        self.counters.downlink_bits += bits;
        self.counters.downlink_messages += 1;
        if self.audit {
            let (frame, total) = self.pass_through(encode_downlink(msg, dims.len())?)?;
            let decoded = decode_downlink(&frame, dims, msg.indices.len())?;
            let round_trip_ok = decoded.indices == msg.indices
                && decoded.epoch == msg.epoch
                && decoded.client == msg.client
                && decoded
                    .models
                    .iter()
                    .zip(&msg.models)
                    .all(|(d, m)| same_at_f32(m, d));
            self.audits.push(FrameAudit {
                direction: Direction::Downlink,
                epoch: msg.epoch,
                client: msg.client,
                accounted_bits: bits,
                frame_payload_bits: frame.header.payload_bits,
                frame_payload_bytes: frame.payload.len(),
                frame_total_bytes: total,
                round_trip_ok,
            });
        }
        Ok(bits)
    }

    pub fn send_uplink(&mut self, msg: &UplinkMessage, dims: &[usize]) -> Result<u64> {
        let bits = account_bits(Message::Uplink(msg), dims.len());
        self.counters.uplink_bits += bits;
        self.counters.uplink_messages += 1;
        if self.audit {
            let (frame, total) = self.pass_through(encode_uplink(msg, dims.len())?)?;
            let decoded = decode_uplink(&frame, dims, msg.indices.len())?;
            let round_trip_ok = decoded.indices == msg.indices
                && decoded.epoch == msg.epoch
                && decoded.client == msg.client
                && same_at_f32(&msg.losses, &decoded.losses)
                && decoded
                    .gradients
                    .iter()
                    .zip(&msg.gradients)
                    .all(|(d, m)| same_at_f32(m, d));
            self.audits.push(FrameAudit {
                direction: Direction::Uplink,
                epoch: msg.epoch,
                client: msg.client,
                accounted_bits: bits,
                frame_payload_bits: frame.header.payload_bits,
                frame_payload_bytes: frame.payload.len(),
                frame_total_bytes: total,
                round_trip_ok,
            });
        }
        Ok(bits)
    }
}

/// Per-round record of one client.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundTrace {
    /// 1-based round `t`.
    pub round: usize,
    /// 0-based client id.
    pub client: usize,
    /// 1-based epoch `r`.
    pub epoch: usize,
    /// 0-based index of the space whose model predicted.
    pub lead_index: usize,
    pub prediction: f64,
    /// Realized loss of the lead model.
    pub loss: f64,
    pub uplink_bits: u64,
    pub downlink_bits: u64,
    /// Not written to the trace CSV.
    #[serde(skip)]
    pub target: f64,
}

/// Averages importance-weighted client reports:
/// `c̄_i = (1/M) Σ_j c̃_i^(j)` and `∇̄_i = (1/M) Σ_j ∇̃_i^(j)`.
///
/// Reports are consumed in client-id order, so the result does not depend on
/// arrival order. Returns the loss vector and one gradient per space.
pub fn aggregate_reports(
    reports: &[UplinkMessage],
    outcomes: &[SamplingOutcome],
    dims: &[usize],
) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let m = outcomes.len();
    if reports.len() != m {
        return Err(Error::Protocol(format!(
            "expected {m} client reports, received {}",
            reports.len()
        )));
    }
    let mut by_client: Vec<Option<&UplinkMessage>> = vec![None; m];
    for report in reports {
        let slot = by_client
            .get_mut(report.client)
            .ok_or_else(|| Error::Protocol(format!("report from unknown client {}", report.client)))?;
        if slot.replace(report).is_some() {
            return Err(Error::Protocol(format!(
                "duplicate report from client {}",
                report.client
            )));
        }
    }
    let epoch = reports.first().map(|r| r.epoch);
    let k = dims.len();
    let mut loss_sum = vec![0.0; k];
    let mut grad_sum: Vec<Vec<f64>> = dims.iter().map(|&d| vec![0.0; d]).collect();
    for (client, (report, outcome)) in by_client.iter().zip(outcomes).enumerate() {
        let report = report.ok_or_else(|| Error::Protocol(format!("missing report from client {client}")))?;
        if Some(report.epoch) != epoch {
            return Err(Error::Protocol("reports from different epochs".into()));
        }
        if report.indices != outcome.indices() {
            return Err(Error::Protocol(format!(
                "client {client} reported indices {:?}, sampled {:?}",
                report.indices,
                outcome.indices()
            )));
        }
        let losses = estimate_losses(&report.losses, outcome)?;
        for (acc, v) in loss_sum.iter_mut().zip(&losses.values) {
            *acc += v;
        }
        let grads = estimate_gradients(&report.gradients, outcome)?;
        for (i, g) in &grads.entries {
            if g.len() != dims[*i] {
                return Err(Error::DimensionMismatch {
                    expected: dims[*i],
                    actual: g.len(),
                });
            }
            for (acc, v) in grad_sum[*i].iter_mut().zip(g) {
                *acc += v;
            }
        }
    }
    let mf = m as f64;
    loss_sum.iter_mut().for_each(|v| *v /= mf);
    grad_sum.iter_mut().flatten().for_each(|v| *v /= mf);
    Ok((loss_sum, grad_sum))
}

/// Server-held learner state. Clients never hold state of their own between
/// epochs: each epoch they work on the broadcast copy.
#[derive(Debug, Clone)]
pub struct ServerState {
    pub probabilities: LogSimplex,
    pub models: Vec<Vec<f64>>,
    /// Number of epochs applied so far.
    pub epochs_done: usize,
    pub master_seed: u64,
}

impl ServerState {
    pub fn new(initial: LogSimplex, spaces: &[HypothesisSpace], master_seed: u64) -> Self {
        Self {
            probabilities: initial,
            models: spaces.iter().map(HypothesisSpace::initial_parameters).collect(),
            epochs_done: 0,
            master_seed,
        }
    }
}

/// Learning rates in force for one update.
#[derive(Debug, Clone, PartialEq)]
pub struct StepSizes {
    pub eta: f64,
    pub lambdas: Vec<f64>,
}

/// Which sampling substream each client's subset is drawn from.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingPolicy {
    /// Client `j` uses its own stream `j`.
    #[default]
    PerClient,
    /// All clients draw from stream 0, so clients with identical data make
    /// identical choices.
    Shared,
}

impl SamplingPolicy {
    pub fn actor(self, client: usize) -> usize {
        match self {
            SamplingPolicy::PerClient => client,
            SamplingPolicy::Shared => 0,
        }
    }
}

/// Everything about a run that stays fixed across epochs.
#[derive(Debug, Clone, Copy)]
pub struct RunContext<'a> {
    pub spaces: &'a [HypothesisSpace],
    pub loss: LossFunction,
    pub subset_size: usize,
    pub schedule: EpochSchedule,
    pub sampling: SamplingPolicy,
}

impl RunContext<'_> {
    pub fn dims(&self) -> Vec<usize> {
        self.spaces.iter().map(HypothesisSpace::dim).collect()
    }

    pub fn loss_scales(&self) -> Vec<f64> {
        self.spaces.iter().map(|s| s.loss_bound).collect()
    }
}

/// Runtime check that the declared `C_i` and `G_i` bound what was observed.
pub(crate) fn check_bounds(
    space_index: usize,
    space: &HypothesisSpace,
    loss: f64,
    grad: &[f64],
) -> Result<()> {
    let slack = 1e-9;
    if loss > space.loss_bound * (1.0 + slack) || loss < -slack {
        return Err(Error::BoundViolation {
            space: space_index,
            what: "loss",
            observed: loss,
            bound: space.loss_bound,
        });
    }
    let norm = l2_norm(grad);
    if norm > space.lipschitz_bound * (1.0 + slack) {
        return Err(Error::BoundViolation {
            space: space_index,
            what: "gradient norm",
            observed: norm,
            bound: space.lipschitz_bound,
        });
    }
    Ok(())
}

/// Applies one mirror step to `p` and every learned `w_i`.
pub(crate) fn apply_update(
    probabilities: &mut LogSimplex,
    models: &mut [Vec<f64>],
    spaces: &[HypothesisSpace],
    losses: &[f64],
    gradients: &[Vec<f64>],
    rates: &StepSizes,
) -> Result<()> {
    let scales: Vec<f64> = spaces.iter().map(|s| s.loss_bound).collect();
    let geometry = WeightedEntropyGeometry::new(scales, rates.eta)?;
    probabilities.step(&geometry, losses)?;
    for (i, space) in spaces.iter().enumerate() {
        if !space.is_learned() {
            continue;
        }
        let g = EuclideanGeometry::new(rates.lambdas[i], space.constraint())?;
        models[i] = euclidean_step(&g, &models[i], &gradients[i])?;
    }
    Ok(())
}

/// Raw `(loss, gradient)` of one sampled space.
pub(crate) type Evaluation = (f64, Vec<f64>);

/// Evaluates the sampled models of one client on one example. Returns the
/// lead prediction and the raw `(loss, gradient)` of every sampled space.
pub(crate) fn evaluate_client(
    ctx: &RunContext<'_>,
    models: &[Vec<f64>],
    outcome: &SamplingOutcome,
    x: &[f64],
    y: f64,
    phi: &mut Vec<f64>,
) -> Result<(f64, Vec<Evaluation>)> {
    let mut prediction = 0.0;
    let mut evaluations = Vec::with_capacity(outcome.subset_size());
    for (a, &i) in outcome.indices().iter().enumerate() {
        let space = &ctx.spaces[i];
        space.feature_map.featurize_into(x, phi)?;
        if a == 0 {
            prediction = dot(&models[i], phi);
        }
        let (c, g) = loss_and_gradient_from_features(ctx.loss, &models[i], phi, y);
        check_bounds(i, space, c, &g)?;
        evaluations.push((c, g));
    }
    Ok((prediction, evaluations))
}

/// Executes epoch `r`: sampling and download at its first round, `N` rounds
/// of frozen-model prediction, then upload, aggregation and the server update.
pub fn run_epoch(
    state: &mut ServerState,
    ctx: &RunContext<'_>,
    streams: &[ExampleStream],
    r: usize,
    rates: &StepSizes,
    transport: &mut SimulatedTransport,
) -> Result<Vec<RoundTrace>> {
    if r != state.epochs_done + 1 {
        return Err(Error::Protocol(format!(
            "epoch {r} requested after {} completed epochs",
            state.epochs_done
        )));
    }
    let m = streams.len();
    let dims = ctx.dims();
    let rounds = ctx.schedule.rounds(r);
    let first = *rounds.start();
    let last = *rounds.end();
    let n = ctx.schedule.epoch_length() as f64;

    let p = state.probabilities.probabilities();
    let mut outcomes = Vec::with_capacity(m);
    let mut downlink_bits = Vec::with_capacity(m);
    for client in 0..m {
        let mut rng = sampling_stream(state.master_seed, ctx.sampling.actor(client), first);
        let outcome = sample_subset(&p, ctx.subset_size, &mut rng)?;
        let msg = DownlinkMessage {
            epoch: r,
            client,
            indices: outcome.indices().to_vec(),
            models: outcome
                .indices()
                .iter()
                .map(|&i| state.models[i].clone())
                .collect(),
        };
        downlink_bits.push(transport.send_downlink(&msg, &dims)?);
        outcomes.push(outcome);
    }

    let mut loss_sums: Vec<Vec<f64>> = vec![vec![0.0; ctx.subset_size]; m];
    let mut grad_sums: Vec<Vec<Vec<f64>>> = outcomes
        .iter()
        .map(|o| o.indices().iter().map(|&i| vec![0.0; dims[i]]).collect())
        .collect();
    let mut traces = Vec::with_capacity(m * ctx.schedule.epoch_length());
    let mut phi = Vec::new();
    for t in rounds {
        for (client, stream) in streams.iter().enumerate() {
            let example = stream.get(t - 1).ok_or(Error::StreamExhausted {
                client,
                round: t,
                available: stream.len(),
            })?;
            let (prediction, evals) = evaluate_client(
                ctx,
                &state.models,
                &outcomes[client],
                &example.x,
                example.y,
                &mut phi,
            )?;
            for (a, (c, g)) in evals.iter().enumerate() {
                loss_sums[client][a] += c;
                for (acc, v) in grad_sums[client][a].iter_mut().zip(g) {
                    *acc += v;
                }
            }
            traces.push(RoundTrace {
                round: t,
                client,
                epoch: r,
                lead_index: outcomes[client].lead(),
                prediction,
                loss: evals[0].0,
                uplink_bits: 0,
                downlink_bits: if t == first { downlink_bits[client] } else { 0 },
                target: example.y,
            });
        }
    }

    let mut reports = Vec::with_capacity(m);
    for (client, outcome) in outcomes.iter().enumerate() {
        let report = UplinkMessage {
            epoch: r,
            client,
            indices: outcome.indices().to_vec(),
            losses: loss_sums[client].iter().map(|s| s / n).collect(),
            gradients: grad_sums[client]
                .iter()
                .map(|g| g.iter().map(|s| s / n).collect())
                .collect(),
        };
        let bits = transport.send_uplink(&report, &dims)?;
        let row = traces
            .iter_mut()
            .rev()
            .find(|tr| tr.client == client && tr.round == last)
            .expect("last-round trace exists");
        row.uplink_bits = bits;
        reports.push(report);
    }

    let (losses, gradients) = aggregate_reports(&reports, &outcomes, &dims)?;
    apply_update(
        &mut state.probabilities,
        &mut state.models,
        ctx.spaces,
        &losses,
        &gradients,
        rates,
    )?;
    state.epochs_done = r;
    Ok(traces)
}
