//! Lead-prediction MSE, run summaries and the trace file format.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::algorithms::{Algorithm, RunArtifact};
use crate::error::{Error, Result};
use crate::protocol::RoundTrace;

/// Column order of the trace CSV.
pub const TRACE_COLUMNS: [&str; 8] = [
    "round",
    "client",
    "epoch",
    "lead_index",
    "prediction",
    "loss",
    "uplink_bits",
    "downlink_bits",
];

/// `(1 / (M T)) Σ_j Σ_t (prediction - target)²` over lead predictions.
pub fn mse(traces: &[RoundTrace]) -> f64 {
    if traces.is_empty() {
        return 0.0;
    }
    traces
        .iter()
        .map(|t| (t.prediction - t.target).powi(2))
        .sum::<f64>()
        / traces.len() as f64
}

/// Mean and sample standard deviation (0 for fewer than two values).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub algorithm: Algorithm,
    pub clients: usize,
    pub horizon: usize,
    pub rows: usize,
    pub mse: f64,
    pub cumulative_loss: f64,
    pub uplink_bits: u64,
    pub downlink_bits: u64,
    /// Final distribution; for the noncooperative learner, client 0's.
    pub final_probabilities: Vec<f64>,
    /// Wall clock divided by the number of simulated clients. Indicative only.
    pub seconds_per_client: f64,
}

impl RunSummary {
    pub fn from_artifact(run: &RunArtifact) -> Self {
        Self {
            algorithm: run.algorithm,
            clients: run.clients,
            horizon: run.horizon,
            rows: run.traces.len(),
            mse: mse(&run.traces),
            cumulative_loss: run.cumulative_loss(),
            uplink_bits: run.bits.uplink_bits,
            downlink_bits: run.bits.downlink_bits,
            final_probabilities: run.final_probabilities.first().cloned().unwrap_or_default(),
            seconds_per_client: run.elapsed.as_secs_f64() / run.clients.max(1) as f64,
        }
    }
}

/// Aggregate over repetitions of one configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsSummary {
    pub repetitions: usize,
    pub mse_mean: f64,
    pub mse_std: f64,
    pub seconds_per_client_mean: f64,
    pub uplink_bits_total: u64,
    pub downlink_bits_total: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub regret: Option<Vec<f64>>,
    pub runs: Vec<RunSummary>,
}

pub fn compute_mse(runs: &[RunArtifact]) -> MetricsSummary {
    let summaries: Vec<RunSummary> = runs.iter().map(RunSummary::from_artifact).collect();
    let mses: Vec<f64> = summaries.iter().map(|s| s.mse).collect();
    let (mse_mean, mse_std) = mean_std(&mses);
    let secs: Vec<f64> = summaries.iter().map(|s| s.seconds_per_client).collect();
    MetricsSummary {
        repetitions: runs.len(),
        mse_mean,
        mse_std,
        seconds_per_client_mean: mean_std(&secs).0,
        uplink_bits_total: summaries.iter().map(|s| s.uplink_bits).sum(),
        downlink_bits_total: summaries.iter().map(|s| s.downlink_bits).sum(),
        regret: None,
        runs: summaries,
    }
}

pub fn write_trace<W: Write>(traces: &[RoundTrace], writer: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
    w.write_record(TRACE_COLUMNS)?;
    for t in traces {
        w.serialize(t)?;
    }
    w.flush().map_err(|e| Error::io("<trace writer>", e))?;
    Ok(())
}

pub fn write_trace_file(traces: &[RoundTrace], path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_trace(traces, std::io::BufWriter::new(file))
}

/// Reads a trace back; `target` is not stored and comes back as NaN.
pub fn read_trace<R: std::io::Read>(reader: R) -> Result<Vec<RoundTrace>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let headers: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
    if headers != TRACE_COLUMNS {
        return Err(Error::Parse {
            row: 0,
            column: headers.join(","),
            message: "unexpected trace header".into(),
        });
    }
    rdr.deserialize()
        .map(|row| {
            let mut t: RoundTrace = row?;
            t.target = f64::NAN;
            Ok(t)
        })
        .collect()
}

pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trace(round: usize, client: usize, prediction: f64, target: f64) -> RoundTrace {
        RoundTrace {
            round,
            client,
            epoch: round,
            lead_index: 0,
            prediction,
            loss: (prediction - target).powi(2),
            uplink_bits: 10,
            downlink_bits: 7,
            target,
        }
    }

    #[test]
    fn mse_hand_values() {
        let perfect: Vec<_> = (1..=4).map(|t| trace(t, 0, 0.3, 0.3)).collect();
        assert_eq!(mse(&perfect), 0.0);
        let zeros: Vec<_> = (1..=4).map(|t| trace(t, 0, 0.0, 1.0)).collect();
        assert_eq!(mse(&zeros), 1.0);
        let errors = [0.1, 0.2, 0.0, 0.3];
        let hand: Vec<_> = errors
            .iter()
            .enumerate()
            .map(|(n, e)| trace(n / 2 + 1, n % 2, 0.5 + e, 0.5))
            .collect();
        assert!((mse(&hand) - 0.035).abs() < 1e-15);
    }

    #[test]
    fn mean_and_sample_std() {
        let (m, s) = mean_std(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((s - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert_eq!(mean_std(&[2.0]), (2.0, 0.0));
    }

    #[test]
    fn trace_round_trip_and_columns() {
        let rows = vec![trace(1, 0, 0.25, 0.5), trace(1, 1, 0.1, 0.0)];
        let mut buf = Vec::new();
        write_trace(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(
            text.lines().next().unwrap(),
            "round,client,epoch,lead_index,prediction,loss,uplink_bits,downlink_bits"
        );
        assert_eq!(text.lines().count(), 3);
        let back = read_trace(buf.as_slice()).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[0].prediction, 0.25);
        assert_eq!(back[1].loss, rows[1].loss);
        assert!(back[0].target.is_nan());
    }
}
