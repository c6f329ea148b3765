use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{Costs, OnlineLearner, Sample};
use crate::baselines::{LinearConfig, LinearHead, LinearRule, NcmModel, SldaConfig, SldaModel};
use crate::error::{Error, Result};
use crate::model::{ClpConfig, ClpModel, EventKind, RuleMode};
use crate::quantize::FixedPointFormat;
use crate::snn::{LearningSchedule, SnnConfig, SnnNet};
use crate::vector::Label;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LearnerKind {
    Clp,
    ClpSnn,
    Ncm,
    Slda,
    SldaFrozen,
    Perceptron,
    Finetune,
    Replay,
}

impl LearnerKind {
    pub const ALL: [LearnerKind; 8] = [
        LearnerKind::Clp,
        LearnerKind::ClpSnn,
        LearnerKind::Ncm,
        LearnerKind::Slda,
        LearnerKind::SldaFrozen,
        LearnerKind::Perceptron,
        LearnerKind::Finetune,
        LearnerKind::Replay,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            LearnerKind::Clp => "clp",
            LearnerKind::ClpSnn => "clp_snn",
            LearnerKind::Ncm => "ncm",
            LearnerKind::Slda => "slda",
            LearnerKind::SldaFrozen => "slda_frozen",
            LearnerKind::Perceptron => "perceptron",
            LearnerKind::Finetune => "finetune",
            LearnerKind::Replay => "replay",
        }
    }
}

impl fmt::Display for LearnerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LearnerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown learner `{s}`")))
    }
}

/// Hyperparameters for every learner kind; each kind reads the fields it
/// needs and ignores the rest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LearnerParams {
    pub theta: f64,
    pub capacity: usize,
    pub rule_mode: RuleMode,
    /// Feed the CLP learners no labels (prototypes stay unlabeled).
    pub unsupervised: bool,
    pub t_epoch: u32,
    pub t_wait: u32,
    pub latency_bins: u32,
    pub schedule: LearningSchedule,
    pub format: FixedPointFormat,
    pub lr: f64,
    pub replay_capacity: usize,
    pub shrinkage: Option<f64>,
    pub freeze_after: Option<u64>,
}

impl Default for LearnerParams {
    fn default() -> Self {
        let clp = ClpConfig::default();
        let snn = SnnConfig::default();
        let lin = LinearConfig::new(1, LinearRule::Finetune);
        Self {
            theta: clp.theta,
            capacity: clp.capacity,
            rule_mode: clp.rule_mode,
            unsupervised: false,
            t_epoch: snn.t_epoch,
            t_wait: snn.t_wait,
            latency_bins: snn.latency_bins,
            schedule: snn.schedule,
            format: snn.format,
            lr: lin.lr,
            replay_capacity: lin.replay_capacity,
            shrinkage: None,
            freeze_after: None,
        }
    }
}

impl LearnerParams {
    pub fn clp_config(&self, dim: usize) -> ClpConfig {
        ClpConfig { dim, capacity: self.capacity, theta: self.theta, rule_mode: self.rule_mode, ..ClpConfig::default() }
    }

    pub fn snn_config(&self, dim: usize) -> SnnConfig {
        SnnConfig {
            dim,
            capacity: self.capacity,
            theta: self.theta,
            t_epoch: self.t_epoch,
            t_wait: self.t_wait,
            latency_bins: self.latency_bins,
            format: self.format,
            schedule: self.schedule,
            ..SnnConfig::default()
        }
    }

    fn linear_config(&self, dim: usize, rule: LinearRule) -> LinearConfig {
        LinearConfig { dim, rule, lr: self.lr, replay_capacity: self.replay_capacity }
    }
}

pub fn build_learner(kind: LearnerKind, params: &LearnerParams, dim: usize) -> Result<Box<dyn OnlineLearner>> {
    Ok(match kind {
        LearnerKind::Clp => Box::new(ClpLearner::new(params.clp_config(dim), params.unsupervised)?),
        LearnerKind::ClpSnn => Box::new(SnnLearner::new(params.snn_config(dim), params.unsupervised)?),
        LearnerKind::Ncm => Box::new(NcmLearner { model: NcmModel::new(dim), max_modified: 0, eval_macs: 0 }),
        LearnerKind::Slda | LearnerKind::SldaFrozen => {
            let config = SldaConfig {
                dim,
                shrinkage: params.shrinkage,
                frozen: kind == LearnerKind::SldaFrozen && params.freeze_after.is_none(),
                freeze_after: if kind == LearnerKind::SldaFrozen { params.freeze_after } else { None },
            };
            Box::new(SldaLearner { model: SldaModel::new(config)?, name: kind.as_str(), max_modified: 0, eval_macs: 0 })
        }
        LearnerKind::Perceptron | LearnerKind::Finetune | LearnerKind::Replay => {
            let rule = match kind {
                LearnerKind::Perceptron => LinearRule::Perceptron,
                LearnerKind::Finetune => LinearRule::Finetune,
                _ => LinearRule::Replay,
            };
            Box::new(LinearLearner {
                head: LinearHead::new(params.linear_config(dim, rule))?,
                name: kind.as_str(),
                max_modified: 0,
                eval_macs: 0,
            })
        }
    })
}

fn require_label(sample: &Sample) -> Result<Label> {
    sample
        .label
        .ok_or_else(|| Error::InsufficientData(format!("frame {} has no label", sample.id)))
}

fn empty_as_none(r: Result<Label>) -> Result<Option<Label>> {
    match r {
        Ok(l) => Ok(Some(l)),
        Err(Error::EmptyModel) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Reference learner. Learning-time predictions apply theta; evaluation
/// uses plain argmax.
pub struct ClpLearner {
    model: ClpModel,
    unsupervised: bool,
    max_modified: u64,
}

impl ClpLearner {
    pub fn new(config: ClpConfig, unsupervised: bool) -> Result<Self> {
        Ok(Self { model: ClpModel::new(config)?, unsupervised, max_modified: 0 })
    }

    pub fn model(&self) -> &ClpModel {
        &self.model
    }
}

impl OnlineLearner for ClpLearner {
    fn name(&self) -> &str {
        "clp"
    }

    fn learn(&mut self, sample: &Sample) -> Result<Option<Label>> {
        let label = if self.unsupervised { None } else { sample.label };
        let out = self.model.learn_step(&sample.features, label)?;
        self.max_modified = self.max_modified.max((out.event.kind != EventKind::None) as u64);
        Ok(out.predicted_label())
    }

    fn predict(&mut self, sample: &Sample) -> Result<Option<Label>> {
        Ok(self.model.predict_forced(&sample.features)?.and_then(|p| p.label))
    }

    fn costs(&self) -> Costs {
        let c = self.model.counters();
        Costs {
            weight_writes: c.weight_writes,
            macs: c.macs,
            synapse_updates: c.weight_writes,
            max_modified_per_sample: self.max_modified,
            ..Costs::default()
        }
    }

    fn allocated(&self) -> usize {
        self.model.allocated()
    }
}

/// Spiking learner; one `learn` call is one full epoch.
pub struct SnnLearner {
    net: SnnNet,
    unsupervised: bool,
    max_modified: u64,
}

impl SnnLearner {
    pub fn new(config: SnnConfig, unsupervised: bool) -> Result<Self> {
        Ok(Self { net: SnnNet::new(config)?, unsupervised, max_modified: 0 })
    }

    pub fn net(&self) -> &SnnNet {
        &self.net
    }
}

impl OnlineLearner for SnnLearner {
    fn name(&self) -> &str {
        "clp_snn"
    }

    fn learn(&mut self, sample: &Sample) -> Result<Option<Label>> {
        let label = if self.unsupervised { None } else { sample.label };
        let r = self.net.run_epoch(&sample.features, label)?;
        let modified = (r.synapse_update_count > 0) as u64;
        self.max_modified = self.max_modified.max(modified);
        Ok(r.predicted_label())
    }

    fn predict(&mut self, sample: &Sample) -> Result<Option<Label>> {
        Ok(self.net.predict_forced(&sample.features)?.and_then(|(_, l)| l))
    }

    fn costs(&self) -> Costs {
        let c = self.net.counters();
        Costs {
            weight_writes: c.synapse_updates,
            macs: c.macs,
            spikes: c.spikes,
            synapse_updates: c.synapse_updates,
            rule_evaluations: c.rule_evaluations,
            max_modified_per_sample: self.max_modified,
        }
    }

    fn allocated(&self) -> usize {
        self.net.next_free()
    }
}

// Baseline adapters keep the MACs spent on evaluation out of their costs so
// that every learner reports training work only.
struct NcmLearner {
    model: NcmModel,
    max_modified: u64,
    eval_macs: u64,
}

impl NcmLearner {
    fn infer(&mut self, sample: &Sample) -> Result<Option<Label>> {
        self.model.count_prediction();
        empty_as_none(self.model.predict(&sample.features))
    }
}

impl OnlineLearner for NcmLearner {
    fn name(&self) -> &str {
        "ncm"
    }

    fn learn(&mut self, sample: &Sample) -> Result<Option<Label>> {
        let label = require_label(sample)?;
        let pred = self.infer(sample)?;
        self.model.update(&sample.features, label)?;
        self.max_modified = 1;
        Ok(pred)
    }

    fn predict(&mut self, sample: &Sample) -> Result<Option<Label>> {
        let before = self.model.counters().macs;
        let pred = self.infer(sample);
        self.eval_macs += self.model.counters().macs - before;
        pred
    }

    fn costs(&self) -> Costs {
        let c = self.model.counters();
        Costs {
            weight_writes: c.weight_writes,
            macs: c.macs - self.eval_macs,
            max_modified_per_sample: self.max_modified,
            ..Costs::default()
        }
    }

    fn allocated(&self) -> usize {
        self.model.num_classes()
    }
}

struct SldaLearner {
    model: SldaModel,
    name: &'static str,
    max_modified: u64,
    eval_macs: u64,
}

impl OnlineLearner for SldaLearner {
    fn name(&self) -> &str {
        self.name
    }

    fn learn(&mut self, sample: &Sample) -> Result<Option<Label>> {
        let label = require_label(sample)?;
        let pred = empty_as_none(self.model.predict(&sample.features))?;
        self.model.update(&sample.features, label)?;
        self.max_modified = 1;
        Ok(pred)
    }

    fn predict(&mut self, sample: &Sample) -> Result<Option<Label>> {
        let before = self.model.counters().macs;
        let pred = empty_as_none(self.model.predict(&sample.features));
        self.eval_macs += self.model.counters().macs - before;
        pred
    }

    fn costs(&self) -> Costs {
        let c = self.model.counters();
        Costs {
            weight_writes: c.weight_writes,
            macs: c.macs - self.eval_macs,
            max_modified_per_sample: self.max_modified,
            ..Costs::default()
        }
    }

    fn allocated(&self) -> usize {
        self.model.num_classes()
    }
}

struct LinearLearner {
    head: LinearHead,
    name: &'static str,
    max_modified: u64,
    eval_macs: u64,
}

impl LinearLearner {
    fn input<'a>(&self, sample: &'a Sample) -> &'a [f64] {
        match self.head.config().rule {
            LinearRule::Replay => &sample.raw,
            _ => sample.features.values(),
        }
    }
}

impl OnlineLearner for LinearLearner {
    fn name(&self) -> &str {
        self.name
    }

    fn learn(&mut self, sample: &Sample) -> Result<Option<Label>> {
        let label = require_label(sample)?;
        let x = self.input(sample);
        let pred = empty_as_none(self.head.predict(x))?;
        self.head.step(x, label)?;
        let modified = match self.head.config().rule {
            LinearRule::Perceptron if pred == Some(label) => 0,
            LinearRule::Perceptron => 2,
            _ => self.head.labels().len() as u64,
        };
        self.max_modified = self.max_modified.max(modified);
        Ok(pred)
    }

    fn predict(&mut self, sample: &Sample) -> Result<Option<Label>> {
        let before = self.head.counters().macs;
        let x = self.input(sample);
        let pred = empty_as_none(self.head.predict(x));
        self.eval_macs += self.head.counters().macs - before;
        pred
    }

    fn costs(&self) -> Costs {
        let c = self.head.counters();
        Costs {
            weight_writes: c.weight_writes,
            macs: c.macs - self.eval_macs,
            max_modified_per_sample: self.max_modified,
            ..Costs::default()
        }
    }

    fn allocated(&self) -> usize {
        self.head.labels().len()
    }
}
