//! Experiment configuration (JSON) and the drivers behind the command line:
//! repeated runs, paired federated/noncooperative comparisons and the
//! bit-accounting audit.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::algorithms::{
    run_fomd_oms, run_learner, run_nco_oms, InitialDistribution, LearnerConfig, LearnerMode, RunArtifact,
};
use crate::data::{ingest_csv, preprocess_and_partition, ExampleStream, Provenance};
use crate::error::{Error, Result};
use crate::generators::{AdversarialKind, AdversarialSpec, LinearStreamSpec};
use crate::hypotheses::{
    gaussian_kernel_spaces, kernel_width_grid, nested_linear_spaces, HypothesisSpace, LossFunction,
};
use crate::metrics::{compute_mse, mean_std, mse, write_json, write_trace_file, MetricsSummary};
use crate::protocol::{upload_bits_alternative, Direction, EpochSchedule, FrameAudit, SamplingPolicy};
use crate::selection::validate_subset_size;

/// Environment variable that overrides `output_dir`.
pub const OUTPUT_DIR_ENV: &str = "FEDOMS_OUTPUT_DIR";
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetSource {
    /// Numeric CSV with a header row; rescaled, permuted per seed and split.
    Csv { path: PathBuf, target_column: String },
    /// Planted linear regression, regenerated per seed.
    Linear {
        input_dim: usize,
        #[serde(default)]
        noise: Option<f64>,
        #[serde(default)]
        target_norm: Option<f64>,
    },
    /// Adversarial construction played with coordinate spaces.
    Adversarial {
        generator: AdversarialKind,
        input_dim: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SpacesSpec {
    /// Linear predictors on the raw input with radii `radii`.
    NestedLinear {
        radii: Vec<f64>,
        /// Bound on `‖x‖`; defaults to 1 for synthetic data and `√d` for CSV
        /// data (features in `[-1, 1]`).
        #[serde(default)]
        norm_bound: Option<f64>,
    },
    /// Random-feature approximations of Gaussian kernels, one per width.
    GaussianKernel {
        #[serde(default = "default_features")]
        features: usize,
        #[serde(default = "default_radius")]
        radius: f64,
        /// Defaults to `2^(i-2)` for `i = 1..=K`.
        #[serde(default)]
        widths: Option<Vec<f64>>,
    },
    /// `x ↦ x_i`, required by adversarial sources.
    Basis,
}

fn default_features() -> usize {
    100
}

fn default_radius() -> f64 {
    1.0
}

fn default_seeds() -> Vec<u64> {
    (0..10).collect()
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("fedoms-out")
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LearnerKind {
    #[default]
    Federated,
    Noncooperative,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub name: Option<String>,
    pub dataset: DatasetSource,
    pub spaces: SpacesSpec,
    /// `M`.
    pub clients: usize,
    /// `K`; optional when the space list determines it.
    #[serde(default)]
    pub num_spaces: Option<usize>,
    /// `J`.
    pub subset_size: usize,
    /// `T`; for CSV data defaults to rows / M.
    #[serde(default)]
    pub horizon: Option<usize>,
    /// `R`; defaults to `T` (communication every round).
    #[serde(default)]
    pub epochs: Option<usize>,
    #[serde(default)]
    pub learner: LearnerKind,
    pub loss: LossFunction,
    #[serde(default)]
    pub initial_distribution: InitialDistribution,
    #[serde(default)]
    pub sampling: SamplingPolicy,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
}

fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidConfig(msg.into())
}

/// Inputs of one repetition.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub spaces: Vec<HypothesisSpace>,
    pub loss: LossFunction,
    pub streams: Vec<ExampleStream>,
    pub horizon: usize,
    pub epochs: usize,
    pub provenance: Provenance,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    /// Number of spaces implied by the space list, if it fixes one.
    fn listed_spaces(&self) -> Option<usize> {
        match &self.spaces {
            SpacesSpec::NestedLinear { radii, .. } => Some(radii.len()),
            SpacesSpec::GaussianKernel { widths: Some(w), .. } => Some(w.len()),
            SpacesSpec::GaussianKernel { widths: None, .. } | SpacesSpec::Basis => None,
        }
    }

    pub fn resolved_num_spaces(&self) -> Result<usize> {
        match (self.num_spaces, self.listed_spaces()) {
            (Some(k), Some(listed)) if k != listed => Err(invalid(format!(
                "num_spaces = {k} but the space list defines {listed} spaces"
            ))),
            (Some(k), _) | (None, Some(k)) => Ok(k),
            (None, None) => Err(invalid("num_spaces (K) is required for this space kind")),
        }
    }

    /// Cross-field checks that need no data.
    pub fn validate(&self) -> Result<()> {
        if self.clients == 0 {
            return Err(invalid("clients (M) must be at least 1"));
        }
        let k = self.resolved_num_spaces()?;
        if self.subset_size < 2 {
            return Err(invalid(format!(
                "subset_size J = {} violates J >= 2",
                self.subset_size
            )));
        }
        validate_subset_size(k, self.subset_size)?;
        if self.seeds.is_empty() {
            return Err(invalid("at least one seed is required"));
        }
        if let Some(t) = self.horizon {
            if t == 0 {
                return Err(invalid("horizon (T) must be positive"));
            }
            EpochSchedule::new(t, self.epochs.unwrap_or(t))?;
        } else if matches!(self.dataset, DatasetSource::Csv { .. }) {
            if self.epochs == Some(0) {
                return Err(invalid("epochs (R) must be positive"));
            }
        } else {
            return Err(invalid("horizon (T) is required for generated data"));
        }
        match (&self.dataset, &self.spaces) {
            (DatasetSource::Adversarial { generator, input_dim }, SpacesSpec::Basis) => {
                let spec = AdversarialSpec {
                    kind: *generator,
                    num_spaces: k,
                    input_dim: *input_dim,
                    horizon: self.horizon.unwrap_or(0),
                    clients: self.clients,
                    subset_size: self.subset_size,
                    seed: 0,
                };
                spec.validate()?;
                if self.loss != spec.loss() {
                    return Err(invalid(format!(
                        "this adversarial generator is played with the {:?} loss",
                        spec.loss()
                    )));
                }
            }
            (DatasetSource::Adversarial { .. }, _) => {
                return Err(invalid("adversarial sources require basis spaces"));
            }
            (_, SpacesSpec::Basis) => return Err(invalid("basis spaces need an adversarial source")),
            (DatasetSource::Linear { input_dim, .. }, _) if *input_dim == 0 => {
                return Err(invalid("input_dim must be positive"));
            }
            _ => {}
        }
        match &self.spaces {
            SpacesSpec::NestedLinear { radii, norm_bound } => {
                if radii.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
                    return Err(invalid("radii must be positive and finite"));
                }
                if norm_bound.is_some_and(|b| !(b.is_finite() && b > 0.0)) {
                    return Err(invalid("norm_bound must be positive"));
                }
            }
            SpacesSpec::GaussianKernel {
                features,
                radius,
                widths,
            } => {
                if *features == 0 || !(radius.is_finite() && *radius > 0.0) {
                    return Err(invalid("kernel spaces need features >= 1 and a positive radius"));
                }
                if widths
                    .as_ref()
                    .is_some_and(|w| w.iter().any(|s| !(s.is_finite() && *s > 0.0)))
                {
                    return Err(invalid("kernel widths must be positive"));
                }
            }
            SpacesSpec::Basis => {}
        }
        Ok(())
    }

    /// Output directory after applying the environment override.
    pub fn output_dir(&self) -> PathBuf {
        std::env::var_os(OUTPUT_DIR_ENV)
            .map(PathBuf::from)
            .unwrap_or_else(|| self.output_dir.clone())
    }

    pub fn label(&self) -> String {
        self.name.clone().unwrap_or_else(|| "experiment".into())
    }

    fn build_spaces(&self, input_dim: usize, default_norm: f64, seed: u64) -> Result<Vec<HypothesisSpace>> {
        let k = self.resolved_num_spaces()?;
        match &self.spaces {
            SpacesSpec::NestedLinear { radii, norm_bound } => {
                nested_linear_spaces(input_dim, norm_bound.unwrap_or(default_norm), radii, self.loss)
            }
            SpacesSpec::GaussianKernel {
                features,
                radius,
                widths,
            } => {
                let widths = widths.clone().unwrap_or_else(|| kernel_width_grid(k));
                gaussian_kernel_spaces(input_dim, *features, &widths, *radius, self.loss, seed)
            }
            SpacesSpec::Basis => Err(invalid("basis spaces need an adversarial source")),
        }
    }

    /// Loads or generates the data of repetition `seed` and builds the spaces.
    pub fn prepare(&self, seed: u64) -> Result<Prepared> {
        self.validate()?;
        let m = self.clients;
        let (streams, spaces, provenance) = match &self.dataset {
            DatasetSource::Csv { path, target_column } => {
                let raw = ingest_csv(path, target_column)?;
                let streams = preprocess_and_partition(&raw, m, seed)?;
                let d = raw.dim();
                let spaces = self.build_spaces(d, (d as f64).sqrt(), seed)?;
                let provenance = Provenance {
                    source: path.display().to_string(),
                    rows: raw.len(),
                    features: d,
                    rows_used: streams.iter().map(ExampleStream::len).sum(),
                };
                (streams, spaces, provenance)
            }
            DatasetSource::Linear {
                input_dim,
                noise,
                target_norm,
            } => {
                let mut spec = LinearStreamSpec::new(*input_dim, m, self.horizon.unwrap_or(0), seed);
                if let Some(n) = noise {
                    spec.noise = *n;
                }
                if let Some(u) = target_norm {
                    spec.target_norm = *u;
                }
                let streams = spec.generate()?;
                let provenance = Provenance {
                    source: format!("linear(d={input_dim}, noise={}, seed={seed})", spec.noise),
                    rows: m * spec.horizon,
                    features: *input_dim,
                    rows_used: m * spec.horizon,
                };
                (streams, self.build_spaces(*input_dim, 1.0, seed)?, provenance)
            }
            DatasetSource::Adversarial { generator, input_dim } => {
                let spec = AdversarialSpec {
                    kind: *generator,
                    num_spaces: self.resolved_num_spaces()?,
                    input_dim: *input_dim,
                    horizon: self.horizon.unwrap_or(0),
                    clients: m,
                    subset_size: self.subset_size,
                    seed,
                };
                let inst = spec.generate()?;
                let provenance = Provenance {
                    source: format!(
                        "adversarial({generator:?}, hidden_arm={:?}, rho={:?}, seed={seed})",
                        inst.hidden_arm, inst.rho
                    ),
                    rows: m * spec.horizon,
                    features: *input_dim,
                    rows_used: m * spec.horizon,
                };
                (inst.streams, inst.spaces, provenance)
            }
        };
        let available = streams.iter().map(ExampleStream::len).min().unwrap_or(0);
        let horizon = self.horizon.unwrap_or(available);
        if horizon > available {
            return Err(invalid(format!(
                "horizon {horizon} exceeds the {available} examples available per client"
            )));
        }
        let epochs = self.epochs.unwrap_or(horizon);
        EpochSchedule::new(horizon, epochs)?;
        Ok(Prepared {
            spaces,
            loss: self.loss,
            streams,
            horizon,
            epochs,
            provenance,
        })
    }

    pub fn learner_config(&self, prepared: &Prepared, kind: LearnerKind, seed: u64) -> LearnerConfig {
        let mode = match kind {
            LearnerKind::Federated => LearnerMode::Federated {
                epochs: prepared.epochs,
            },
            LearnerKind::Noncooperative => LearnerMode::Noncooperative,
        };
        let mut config = LearnerConfig::new(
            mode,
            prepared.spaces.clone(),
            prepared.loss,
            self.subset_size,
            prepared.horizon,
            seed,
        );
        config.initial = self.initial_distribution;
        config.sampling = self.sampling;
        config
    }
}

/// Summary JSON written by `run`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub name: String,
    pub learner: LearnerKind,
    pub seeds: Vec<u64>,
    pub provenance: Vec<Provenance>,
    pub metrics: MetricsSummary,
    pub trace_files: Vec<PathBuf>,
}

/// Runs every seed of `config` and writes one trace per seed plus
/// `summary.json` under the output directory.
pub fn run_experiment(config: &ExperimentConfig) -> Result<(RunReport, Vec<RunArtifact>)> {
    config.validate()?;
    let out = config.output_dir();
    std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    let results = config
        .seeds
        .par_iter()
        .map(|&seed| -> Result<(RunArtifact, Provenance)> {
            let prepared = config.prepare(seed)?;
            let learner = config.learner_config(&prepared, config.learner, seed);
            let run = run_learner(&learner, &prepared.streams)?;
            Ok((run, prepared.provenance))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut trace_files = Vec::with_capacity(results.len());
    for (&seed, (run, _)) in config.seeds.iter().zip(&results) {
        let dir = out.join(format!("seed-{seed}"));
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let path = dir.join("trace.csv");
        write_trace_file(&run.traces, &path)?;
        trace_files.push(path);
    }
    let (runs, provenance): (Vec<_>, Vec<_>) = results.into_iter().unzip();
    let report = RunReport {
        schema_version: SCHEMA_VERSION,
        name: config.label(),
        learner: config.learner,
        seeds: config.seeds.clone(),
        provenance,
        metrics: compute_mse(&runs),
        trace_files,
    };
    write_json(&report, &out.join("summary.json"))?;
    Ok((report, runs))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedRow {
    pub seed: u64,
    pub mse_federated: f64,
    pub mse_noncooperative: f64,
    /// `MSE(noncooperative) - MSE(federated)`.
    pub delta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeltaSign {
    /// The federated learner had the lower mean MSE.
    FederatedBetter,
    NoncooperativeBetter,
    Tie,
}

/// Output of `ab`: per-seed paired MSEs and the mean difference.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AbReport {
    pub schema_version: u32,
    pub name: String,
    pub clients: usize,
    pub num_spaces: usize,
    pub subset_size: usize,
    pub horizon: usize,
    pub epochs: usize,
    pub rows: Vec<PairedRow>,
    pub mse_federated_mean: f64,
    pub mse_federated_std: f64,
    pub mse_noncooperative_mean: f64,
    pub mse_noncooperative_std: f64,
    pub mean_delta: f64,
    pub std_delta: f64,
    pub sign: DeltaSign,
    /// Seeds where the federated learner's MSE was strictly lower.
    pub federated_wins: usize,
    pub federated: MetricsSummary,
    pub noncooperative: MetricsSummary,
}

impl AbReport {
    /// `| J | M | K | FOMD mean ± std | NCO mean ± std | Δ |` rows.
    pub fn table(&self) -> String {
        format!(
            "| J | M | K | R | MSE federated | MSE noncooperative | delta |\n\
             |---|---|---|---|---|---|---|\n\
             | {} | {} | {} | {} | {:.6} ± {:.6} | {:.6} ± {:.6} | {:+.6} |\n",
            self.subset_size,
            self.clients,
            self.num_spaces,
            self.epochs,
            self.mse_federated_mean,
            self.mse_federated_std,
            self.mse_noncooperative_mean,
            self.mse_noncooperative_std,
            self.mean_delta,
        )
    }
}

/// Runs both learners on the same data and sampling streams for every seed.
pub fn run_ab(config: &ExperimentConfig) -> Result<AbReport> {
    config.validate()?;
    let pairs = config
        .seeds
        .par_iter()
        .map(|&seed| -> Result<(RunArtifact, RunArtifact, usize, usize)> {
            let prepared = config.prepare(seed)?;
            let fed = run_fomd_oms(
                &config.learner_config(&prepared, LearnerKind::Federated, seed),
                &prepared.streams,
            )?;
            let nco = run_nco_oms(
                &config.learner_config(&prepared, LearnerKind::Noncooperative, seed),
                &prepared.streams,
            )?;
            Ok((fed, nco, prepared.horizon, prepared.epochs))
        })
        .collect::<Result<Vec<_>>>()?;
    let rows: Vec<PairedRow> = config
        .seeds
        .iter()
        .zip(&pairs)
        .map(|(&seed, (fed, nco, _, _))| {
            let (a, b) = (mse(&fed.traces), mse(&nco.traces));
            PairedRow {
                seed,
                mse_federated: a,
                mse_noncooperative: b,
                delta: b - a,
            }
        })
        .collect();
    let col = |f: fn(&PairedRow) -> f64| mean_std(&rows.iter().map(f).collect::<Vec<_>>());
    let (fm, fs) = col(|r| r.mse_federated);
    let (nm, ns) = col(|r| r.mse_noncooperative);
    let (dm, ds) = col(|r| r.delta);
    let (horizon, epochs) = (pairs[0].2, pairs[0].3);
    let (fed_runs, nco_runs): (Vec<_>, Vec<_>) = pairs.into_iter().map(|(a, b, _, _)| (a, b)).unzip();
    let report = AbReport {
        schema_version: SCHEMA_VERSION,
        name: config.label(),
        clients: config.clients,
        num_spaces: config.resolved_num_spaces()?,
        subset_size: config.subset_size,
        horizon,
        epochs,
        federated_wins: rows.iter().filter(|r| r.delta > 0.0).count(),
        sign: if dm > 0.0 {
            DeltaSign::FederatedBetter
        } else if dm < 0.0 {
            DeltaSign::NoncooperativeBetter
        } else {
            DeltaSign::Tie
        },
        rows,
        mse_federated_mean: fm,
        mse_federated_std: fs,
        mse_noncooperative_mean: nm,
        mse_noncooperative_std: ns,
        mean_delta: dm,
        std_delta: ds,
        federated: compute_mse(&fed_runs),
        noncooperative: compute_mse(&nco_runs),
    };
    let out = config.output_dir();
    std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    write_json(&report, &out.join("ab.json"))?;
    std::fs::write(out.join("ab.md"), report.table()).map_err(|e| Error::io(out.join("ab.md"), e))?;
    Ok(report)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AuditReport {
    pub schema_version: u32,
    pub seed: u64,
    pub messages: usize,
    pub consistent: bool,
    pub uplink_bits: u64,
    pub downlink_bits: u64,
    pub frame_bytes_total: usize,
    /// Messages whose accounted size, frame length or decoded content disagree.
    pub mismatches: Vec<FrameAudit>,
    /// Per-client upload size if `J (Σ d_i + 1)` floats were counted instead
    /// of `Σ d_i + J`, summed over the run.
    pub uplink_bits_alternative_reading: u64,
}

/// Runs the federated learner on the first seed with every message framed,
/// decoded and compared with its accounted size.
pub fn run_audit(config: &ExperimentConfig) -> Result<AuditReport> {
    config.validate()?;
    let seed = config.seeds[0];
    let prepared = config.prepare(seed)?;
    let mut learner = config.learner_config(&prepared, LearnerKind::Federated, seed);
    learner.audit_frames = true;
    let run = run_fomd_oms(&learner, &prepared.streams)?;
    let k = prepared.spaces.len();
    let j = config.subset_size as u64;
    let index_bits = crate::protocol::index_bits(k);
    let alternative = run
        .audits
        .iter()
        .filter(|a| a.direction == Direction::Uplink)
        .map(|up| {
            // Σ d_i over the sample is recoverable from the accounted size
            let sum_d = (up.accounted_bits - j * index_bits) / 32 - j;
            upload_bits_alternative(sum_d as usize, config.subset_size, k)
        })
        .sum();
    let mismatches: Vec<FrameAudit> = run.audits.iter().filter(|a| !a.consistent()).cloned().collect();
    let report = AuditReport {
        schema_version: SCHEMA_VERSION,
        seed,
        messages: run.audits.len(),
        consistent: mismatches.is_empty(),
        uplink_bits: run.bits.uplink_bits,
        downlink_bits: run.bits.downlink_bits,
        frame_bytes_total: run.audits.iter().map(|a| a.frame_total_bytes).sum(),
        mismatches,
        uplink_bits_alternative_reading: alternative,
    };
    let out = config.output_dir();
    std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    write_json(&report, &out.join("audit.json"))?;
    Ok(report)
}
