//! Federated online model selection.
//!
//! `M` clients each predict with one of `K` candidate hypothesis spaces per
//! round. A server keeps a distribution `p` over the spaces and one model per
//! space; each round (or each epoch, under intermittent communication) it
//! samples `J` spaces per client, collects the clients' losses and gradients
//! on them, and takes an online-mirror-descent step: weighted negative entropy
//! for `p`, projected gradient descent for the models. The noncooperative
//! baseline runs the same learner on every client separately.
//!
//! ```
//! use fedoms::prelude::*;
//!
//! let spaces = nested_linear_spaces(4, 1.0, &[0.25, 0.5, 1.0], LossFunction::Square)?;
//! let streams = LinearStreamSpec::new(4, 3, 200, 7).generate()?;
//! let config = LearnerConfig::new(
//!     LearnerMode::Federated { epochs: 200 },
//!     spaces,
//!     LossFunction::Square,
//!     2,
//!     200,
//!     7,
//! );
//! let run = run_fomd_oms(&config, &streams)?;
//! assert_eq!(run.traces.len(), 3 * 200);
//! # Ok::<(), fedoms::Error>(())
//! ```

pub mod algorithms;
pub mod config;
pub mod data;
pub mod error;
pub mod generators;
pub mod hypotheses;
pub mod metrics;
pub mod mirror;
pub mod protocol;
pub mod rng;
pub mod selection;

pub use error::{Error, Result};

pub mod prelude {
    pub use crate::algorithms::{
        eta_schedule, initial_distribution, lambda_schedule, offline_comparator, regret_accounting,
        run_fomd_oms, run_fomd_oms_epochs, run_learner, run_nco_oms, InitialDistribution, LearnerConfig,
        LearnerMode, RunArtifact, ScheduleParams,
    };
    pub use crate::data::{ingest_csv, preprocess_and_partition, Example, ExampleStream};
    pub use crate::error::{Error, Result};
    pub use crate::generators::{AdversarialKind, AdversarialSpec, LinearStreamSpec};
    pub use crate::hypotheses::{
        gaussian_kernel_spaces, kernel_width_grid, nested_linear_spaces, ConstraintKind, FeatureMap,
        HypothesisSpace, LossFunction,
    };
    pub use crate::metrics::{compute_mse, mse, MetricsSummary};
    pub use crate::mirror::{entropy_mirror_step, euclidean_step, SimplexPoint, WeightedEntropyGeometry};
    pub use crate::protocol::{account_bits, EpochSchedule, RoundTrace, SamplingPolicy};
    pub use crate::selection::{estimate_gradients, estimate_losses, sample_subset, SamplingOutcome};
}
