//! Streams, evaluation protocol, metrics and cost accounting.

mod feature_file;
mod learner;
mod protocol;
mod run;
mod synthetic;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::vector::{FeatureVector, Label};

pub use feature_file::{read_feature_file, write_feature_file, FEATURE_FILE_MAGIC, FEATURE_FILE_VERSION};
pub use learner::{build_learner, ClpLearner, LearnerKind, LearnerParams, SnnLearner};
pub use protocol::{build_protocol, Clip, ClipSource, ProtocolMode, StreamProtocol, Task, HOLDOUT_FRAMES};
pub use run::{
    count_costs, evaluate, run_experiment, verify_schedule_ratio, write_metrics_csv, CostReport, EvalPoint, RunMetrics,
    ScheduleRatio, StreamRecord, METRICS_COLUMNS,
};
pub use synthetic::{gen_synthetic, SyntheticSpec, BENCHMARK_SEEDS, BENCHMARK_SHOTS};

/// One frame of a stream. `raw` is the feature vector before L2
/// normalization; every learner except replay consumes `features`.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub id: u64,
    pub label: Option<Label>,
    pub raw: Vec<f64>,
    pub features: FeatureVector,
}

/// Cumulative work counters of a learner. Not every learner fills every
/// field.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Costs {
    pub weight_writes: u64,
    pub macs: u64,
    pub spikes: u64,
    pub synapse_updates: u64,
    pub rule_evaluations: u64,
    /// Most units (prototypes, class rows) changed by a single sample.
    pub max_modified_per_sample: u64,
}

/// A learner that sees every training frame once, in order.
pub trait OnlineLearner: Send {
    fn name(&self) -> &str;

    /// Learns from one labeled frame, returning the prediction made before
    /// the update (`None` when the learner abstains, e.g. on novelty).
    fn learn(&mut self, sample: &Sample) -> Result<Option<Label>>;

    /// Forced-choice prediction; `None` only for an empty model.
    fn predict(&mut self, sample: &Sample) -> Result<Option<Label>>;

    fn costs(&self) -> Costs;

    /// Prototypes, class means or class rows currently in use.
    fn allocated(&self) -> usize;
}
