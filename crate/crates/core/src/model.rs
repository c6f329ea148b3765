//! Reference floating-point prototype learner.
//!
//! One call to [`ClpModel::learn_step`] is one algorithmic step: find the
//! best-matching allocated prototype, decide the third-factor signal from
//! the label, and update at most one prototype.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rules::{update_explicit, update_selfnorm, Sign, UpdateInputs};
use crate::vector::{check_dim, dot_unchecked, norm, FeatureVector, Label};

/// Which update rule the learner applies after imprinting.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleMode {
    /// Additive step followed by explicit renormalization.
    #[default]
    ExplicitNorm,
    /// Self-normalizing three-factor rule, no renormalization.
    SelfNorm,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClpConfig {
    pub dim: usize,
    /// Number of pre-allocated prototype slots.
    pub capacity: usize,
    /// Similarity threshold for a prototype to count as active.
    pub theta: f64,
    pub rule_mode: RuleMode,
    /// Goodness assigned at allocation (1 gives the imprint-then-1/g schedule).
    pub initial_goodness: u32,
}

impl Default for ClpConfig {
    fn default() -> Self {
        Self { dim: 0, capacity: 300, theta: 0.5, rule_mode: RuleMode::ExplicitNorm, initial_goodness: 1 }
    }
}

impl ClpConfig {
    pub fn new(dim: usize) -> Self {
        Self { dim, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::InvalidConfig("dimension must be positive".into()));
        }
        if self.capacity == 0 {
            return Err(Error::InvalidConfig("capacity must be positive".into()));
        }
        if !(self.theta > 0.0 && self.theta < 1.0) {
            return Err(Error::InvalidConfig(format!("theta {} outside (0, 1)", self.theta)));
        }
        if self.initial_goodness == 0 {
            return Err(Error::InvalidConfig("initial goodness must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prototype {
    weights: Vec<f64>,
    label: Option<Label>,
    goodness: u32,
    alpha: f64,
    allocated: bool,
}

impl Prototype {
    fn empty(dim: usize) -> Self {
        Self { weights: vec![0.0; dim], label: None, goodness: 1, alpha: 1.0, allocated: false }
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn label(&self) -> Option<Label> {
        self.label
    }

    pub fn goodness(&self) -> u32 {
        self.goodness
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn is_allocated(&self) -> bool {
        self.allocated
    }

    fn set_goodness(&mut self, g: u32) {
        self.goodness = g.max(1);
        self.alpha = 1.0 / self.goodness as f64;
    }
}

/// The best-matching prototype for an input.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Prediction {
    pub index: usize,
    pub similarity: f64,
    pub label: Option<Label>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum EventKind {
    Reinforce,
    Punish,
    Allocate,
    None,
}

/// Third-factor decision for one sample.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ModEvent {
    pub kind: EventKind,
    pub target: Option<usize>,
    pub r: Sign,
}

impl ModEvent {
    pub fn reinforce(target: usize) -> Self {
        Self { kind: EventKind::Reinforce, target: Some(target), r: Sign::Plus }
    }

    pub fn punish(target: usize) -> Self {
        Self { kind: EventKind::Punish, target: Some(target), r: Sign::Minus }
    }

    pub fn allocate(target: usize) -> Self {
        Self { kind: EventKind::Allocate, target: Some(target), r: Sign::Plus }
    }

    pub fn none() -> Self {
        Self { kind: EventKind::None, target: None, r: Sign::Zero }
    }
}

/// Decides the third-factor signal from a (learning-time) prediction.
///
/// Shared by the reference learner and the spiking network's supervisor so
/// that both follow one case table.
pub fn decide_event(
    winner: Option<(usize, Option<Label>)>,
    true_label: Option<Label>,
    next_free: usize,
    capacity: usize,
) -> Result<ModEvent> {
    match (winner, true_label) {
        (Some((index, _)), None) => Ok(ModEvent::reinforce(index)),
        (Some((index, predicted)), Some(truth)) => {
            if predicted == Some(truth) {
                Ok(ModEvent::reinforce(index))
            } else {
                Ok(ModEvent::punish(index))
            }
        }
        (None, _) if next_free >= capacity => Err(Error::CapacityExhausted { capacity }),
        (None, _) => Ok(ModEvent::allocate(next_free)),
    }
}

/// What happened on one learning step. The prediction is the one made
/// before the update.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepOutcome {
    pub winner: Option<Prediction>,
    pub event: ModEvent,
    pub correct: Option<bool>,
}

impl StepOutcome {
    pub fn predicted_label(&self) -> Option<Label> {
        self.winner.and_then(|w| w.label)
    }
}

/// Work counters, monotone over the model's lifetime.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClpCounters {
    /// Individual weight components written.
    pub weight_writes: u64,
    /// Prototypes modified.
    pub prototype_updates: u64,
    /// Multiply-accumulates spent on similarity.
    pub macs: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClpModel {
    config: ClpConfig,
    prototypes: Vec<Prototype>,
    next_free: usize,
    #[serde(skip)]
    counters: ClpCounters,
}

impl ClpModel {
    pub fn new(config: ClpConfig) -> Result<Self> {
        config.validate()?;
        let prototypes = (0..config.capacity).map(|_| Prototype::empty(config.dim)).collect();
        Ok(Self { config, prototypes, next_free: 0, counters: ClpCounters::default() })
    }

    pub fn config(&self) -> &ClpConfig {
        &self.config
    }

    pub fn prototypes(&self) -> &[Prototype] {
        &self.prototypes
    }

    pub fn next_free(&self) -> usize {
        self.next_free
    }

    pub fn allocated(&self) -> usize {
        self.next_free
    }

    pub fn counters(&self) -> ClpCounters {
        self.counters
    }

    /// Largest |‖w‖ - 1| over allocated prototypes.
    pub fn max_norm_deviation(&self) -> f64 {
        self.prototypes[..self.next_free]
            .iter()
            .map(|p| (norm(&p.weights) - 1.0).abs())
            .fold(0.0, f64::max)
    }

    fn argmax(&self, x: &[f64]) -> Option<Prediction> {
        let mut best: Option<Prediction> = None;
        for (index, p) in self.prototypes[..self.next_free].iter().enumerate() {
            let similarity = dot_unchecked(&p.weights, x);
            if best.is_none_or(|b| similarity > b.similarity) {
                best = Some(Prediction { index, similarity, label: p.label });
            }
        }
        best
    }

    /// Learning-time winner: the most similar allocated prototype, provided
    /// its similarity exceeds theta. `None` signals novelty.
    pub fn predict(&self, x: &FeatureVector) -> Result<Option<Prediction>> {
        check_dim(self.config.dim, x.dim())?;
        Ok(self.argmax(x.values()).filter(|p| p.similarity > self.config.theta))
    }

    /// Evaluation-time prediction: plain argmax, theta ignored.
    pub fn predict_forced(&self, x: &FeatureVector) -> Result<Option<Prediction>> {
        check_dim(self.config.dim, x.dim())?;
        Ok(self.argmax(x.values()))
    }

    pub fn modulate(&self, prediction: Option<&Prediction>, true_label: Option<Label>) -> Result<ModEvent> {
        decide_event(
            prediction.map(|p| (p.index, p.label)),
            true_label,
            self.next_free,
            self.config.capacity,
        )
    }

    pub fn apply_event(&mut self, x: &FeatureVector, ev: ModEvent, true_label: Option<Label>) -> Result<()> {
        check_dim(self.config.dim, x.dim())?;
        let Some(target) = ev.target else {
            return Ok(());
        };
        let mode = self.config.rule_mode;
        let initial_goodness = self.config.initial_goodness;
        let p = &mut self.prototypes[target];
        match ev.kind {
            EventKind::None => return Ok(()),
            EventKind::Allocate => {
                if target != self.next_free {
                    return Err(Error::InvalidConfig(format!(
                        "allocation must target slot {}, got {target}",
                        self.next_free
                    )));
                }
                // Imprint with alpha = 1 on zero weights reproduces x exactly
                // under either rule, so one path serves both modes.
                let u = UpdateInputs::with_activation(&p.weights, x.values(), 1.0, Sign::Plus, 0.0)?;
                p.weights = update_selfnorm(&u);
                p.label = true_label;
                p.allocated = true;
                p.set_goodness(initial_goodness);
                self.next_free += 1;
            }
            EventKind::Reinforce | EventKind::Punish => {
                let u = UpdateInputs::new(&p.weights, x.values(), p.alpha, ev.r)?;
                p.weights = match mode {
                    RuleMode::SelfNorm => update_selfnorm(&u),
                    RuleMode::ExplicitNorm => update_explicit(&u)?,
                };
                let g = p.goodness as i64 + ev.r.value() as i64;
                p.set_goodness(g.max(1) as u32);
            }
        }
        self.counters.prototype_updates += 1;
        self.counters.weight_writes += self.config.dim as u64;
        Ok(())
    }

    /// predict, then modulate, then apply_event.
    pub fn learn_step(&mut self, x: &FeatureVector, true_label: Option<Label>) -> Result<StepOutcome> {
        let winner = self.predict(x)?;
        self.counters.macs += (self.next_free * self.config.dim) as u64;
        let event = self.modulate(winner.as_ref(), true_label)?;
        self.apply_event(x, event, true_label)?;
        let correct = match (winner, true_label) {
            (Some(w), Some(t)) => Some(w.label == Some(t)),
            _ => None,
        };
        Ok(StepOutcome { winner, event, correct })
    }

    /// Rebuilds a model from checkpointed state, checking its invariants.
    pub(crate) fn restore(mut self) -> Result<Self> {
        self.config.validate()?;
        if self.prototypes.len() != self.config.capacity {
            return Err(Error::Format("prototype count differs from capacity".into()));
        }
        for (i, p) in self.prototypes.iter_mut().enumerate() {
            check_dim(self.config.dim, p.weights.len())?;
            if p.allocated != (i < self.next_free) {
                return Err(Error::Format(format!("prototype {i} breaks index-order allocation")));
            }
            p.set_goodness(p.goodness);
        }
        self.counters = ClpCounters::default();
        Ok(self)
    }
}
