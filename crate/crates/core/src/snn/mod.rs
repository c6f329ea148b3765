//! Discrete-time simulation of the spiking prototype network.
//!
//! One sample occupies an epoch of `t_epoch` timesteps:
//!
//! 1. The input population emits graded spikes carrying the INT7 feature
//!    codes. Pre-synaptic traces are overwritten with the codes and each
//!    allocated prototype's post-synaptic trace becomes the integer dot
//!    product of its weight row with them. Both traces then hold until the
//!    next injection.
//! 2. Every prototype whose activation exceeds the threshold is scheduled to
//!    spike after a delay that shrinks as its activation grows (latency
//!    code). The first spike inhibits the whole population; same-timestep
//!    ties go to the lowest index.
//! 3. The novelty neuron is armed at injection. A prototype spike disarms
//!    it; otherwise it fires at `t_wait` carrying the next free slot.
//! 4. The host-side supervisor compares the winner's label with the true
//!    label. The modulator relays its verdict, or the novelty spike, to one
//!    prototype as a third-factor spike.
//! 5. The learning phase applies the fixed-point rule to that one row.

mod log;

use serde::{Deserialize, Serialize};

pub use self::log::{parse_event_log, EventLogWriter, LogRecord};
use crate::error::{Error, Result};
use crate::model::{decide_event, ModEvent};
use crate::quantize::{fixed_update, int_dot_unchecked, quantize_vec, FixedPointFormat, ReciprocalTable};
use crate::rules::Sign;
use crate::vector::{check_dim, FeatureVector, Label};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Population {
    Input,
    Prototype,
    Novelty,
    Modulator,
    Supervisor,
}

impl Population {
    pub fn as_str(self) -> &'static str {
        match self {
            Population::Input => "input",
            Population::Prototype => "prototype",
            Population::Novelty => "novelty",
            Population::Modulator => "modulator",
            Population::Supervisor => "supervisor",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "input" => Population::Input,
            "prototype" => Population::Prototype,
            "novelty" => Population::Novelty,
            "modulator" => Population::Modulator,
            "supervisor" => Population::Supervisor,
            _ => return None,
        })
    }
}

/// A graded spike.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SpikeEvent {
    pub time: u32,
    pub population: Population,
    pub neuron: usize,
    pub payload: i32,
}

/// When the learning engine runs.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LearningSchedule {
    /// Once per epoch, after the last timestep.
    #[default]
    EndOfEpoch,
    /// After every timestep; only useful for measuring learning cost.
    EveryTimestep,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SnnConfig {
    pub dim: usize,
    pub capacity: usize,
    /// Real-valued similarity threshold; converted to activation units.
    pub theta: f64,
    pub t_epoch: u32,
    pub t_wait: u32,
    pub latency_bins: u32,
    pub format: FixedPointFormat,
    pub schedule: LearningSchedule,
    pub initial_goodness: u32,
}

impl Default for SnnConfig {
    fn default() -> Self {
        Self {
            dim: 0,
            capacity: 300,
            theta: 0.5,
            t_epoch: 20,
            t_wait: 16,
            latency_bins: 16,
            format: FixedPointFormat::default(),
            schedule: LearningSchedule::EndOfEpoch,
            initial_goodness: 1,
        }
    }
}

impl SnnConfig {
    pub fn new(dim: usize) -> Self {
        Self { dim, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        self.format.validate()?;
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.dim == 0 || self.capacity == 0 {
            return bad("dimension and capacity must be positive".into());
        }
        if !(self.theta > 0.0 && self.theta < 1.0) {
            return bad(format!("theta {} outside (0, 1)", self.theta));
        }
        if !(1 <= self.t_wait && self.t_wait < self.t_epoch) {
            return bad(format!("need 1 <= t_wait ({}) < t_epoch ({})", self.t_wait, self.t_epoch));
        }
        if !(1 <= self.latency_bins && self.latency_bins <= self.t_wait) {
            return bad(format!("need 1 <= latency_bins ({}) <= t_wait ({})", self.latency_bins, self.t_wait));
        }
        if self.initial_goodness == 0 {
            return bad("initial goodness must be at least 1".into());
        }
        Ok(())
    }
}

/// Spike delay for activation `y`, or `None` when `y` does not exceed the
/// threshold. A maximal activation `y_max` (or more) spikes immediately.
pub fn latency_encode(y: i64, theta: i64, bins: u32, y_max: i64) -> Option<u32> {
    assert!(bins >= 1 && y_max > theta);
    if y <= theta {
        return None;
    }
    let bins = bins as i128;
    let level = ((y - theta - 1) as i128 * bins).div_euclid((y_max - theta) as i128);
    Some((bins - 1 - level).clamp(0, bins - 1) as u32)
}

/// Activation width of one latency bin.
pub fn bin_quantum(theta: i64, bins: u32, y_max: i64) -> f64 {
    (y_max - theta) as f64 / bins as f64
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TraceBank {
    /// Pre-synaptic traces (input codes).
    pub x: Vec<i32>,
    /// Post-synaptic traces (integer activations).
    pub y: Vec<i64>,
    /// Goodness per prototype.
    pub g: Vec<u32>,
    /// Learning rate per prototype, fixed point.
    pub alpha: Vec<u32>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NoveltyState {
    Idle,
    Armed { deadline: u32 },
    Fired,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ThirdFactor {
    pub target: usize,
    pub r: Sign,
}

/// Where a third-factor request reaching the modulator came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum FeedbackSource {
    Supervisor,
    Novelty,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SnnCounters {
    pub spikes: u64,
    /// Synapses rewritten by the learning engine.
    pub synapse_updates: u64,
    /// Learning-rule evaluations (every plastic synapse, every learning phase).
    pub rule_evaluations: u64,
    pub learning_phases: u64,
    /// Synaptic events delivered to prototype neurons.
    pub macs: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochResult {
    pub winner: Option<usize>,
    pub winner_label: Option<Label>,
    pub winner_spike_time: Option<u32>,
    pub novelty_fired: bool,
    pub event: ModEvent,
    pub spike_count: u64,
    pub synapse_update_count: u64,
    pub rule_evaluations: u64,
    pub macs: u64,
    pub events: Vec<SpikeEvent>,
}

impl EpochResult {
    pub fn predicted_label(&self) -> Option<Label> {
        self.winner_label
    }
}

#[derive(Clone, Debug)]
pub struct SnnNet {
    config: SnnConfig,
    /// Row-major `capacity x dim` weight codes.
    weights: Vec<i32>,
    labels: Vec<Option<Label>>,
    traces: TraceBank,
    theta_int: i64,
    y_max: i64,
    reciprocal: ReciprocalTable,
    next_free: usize,
    novelty: NoveltyState,
    inhibited: Vec<bool>,
    delays: Vec<Option<u32>>,
    inbox: Option<(ThirdFactor, FeedbackSource)>,
    pending: Option<ThirdFactor>,
    supervised: Option<ModEvent>,
    allocation_label: Option<Label>,
    winner: Option<(usize, u32)>,
    epoch_clock: u32,
    counters: SnnCounters,
}

impl SnnNet {
    pub fn new(config: SnnConfig) -> Result<Self> {
        config.validate()?;
        let (p, d) = (config.capacity, config.dim);
        let theta_int = config.format.activation_threshold(config.theta);
        let y_max = config.format.unit_activation();
        let reciprocal = ReciprocalTable::new(&config.format);
        let g0 = config.initial_goodness;
        let traces = TraceBank {
            x: vec![0; d],
            y: vec![0; p],
            g: vec![g0; p],
            alpha: vec![reciprocal.alpha(1); p],
        };
        Ok(Self {
            weights: vec![0; p * d],
            labels: vec![None; p],
            traces,
            theta_int,
            y_max,
            reciprocal,
            next_free: 0,
            novelty: NoveltyState::Idle,
            inhibited: vec![false; p],
            delays: vec![None; p],
            inbox: None,
            pending: None,
            supervised: None,
            allocation_label: None,
            winner: None,
            epoch_clock: config.t_epoch,
            counters: SnnCounters::default(),
            config,
        })
    }

    pub fn config(&self) -> &SnnConfig {
        &self.config
    }

    pub fn traces(&self) -> &TraceBank {
        &self.traces
    }

    pub fn theta_int(&self) -> i64 {
        self.theta_int
    }

    pub fn y_max(&self) -> i64 {
        self.y_max
    }

    /// Activation width of one latency bin.
    pub fn bin_quantum(&self) -> f64 {
        bin_quantum(self.theta_int, self.config.latency_bins, self.y_max)
    }

    pub fn row(&self, i: usize) -> &[i32] {
        let d = self.config.dim;
        &self.weights[i * d..(i + 1) * d]
    }

    pub fn label(&self, i: usize) -> Option<Label> {
        self.labels[i]
    }

    pub fn next_free(&self) -> usize {
        self.next_free
    }

    pub fn epoch_clock(&self) -> u32 {
        self.epoch_clock
    }

    pub fn novelty_state(&self) -> NoveltyState {
        self.novelty
    }

    pub fn pending_third_factor(&self) -> Option<ThirdFactor> {
        self.pending
    }

    pub fn inhibited(&self) -> &[bool] {
        &self.inhibited
    }

    pub fn counters(&self) -> SnnCounters {
        self.counters
    }

    /// Largest |‖row‖ / M - 1| over allocated rows.
    pub fn max_norm_deviation(&self) -> f64 {
        let m = self.config.format.max_code() as f64;
        (0..self.next_free)
            .map(|i| {
                let row = self.row(i);
                ((int_dot_unchecked(row, row) as f64).sqrt() / m - 1.0).abs()
            })
            .fold(0.0, f64::max)
    }

    /// Places a row directly, e.g. to build a network by hand in tests.
    pub fn imprint(&mut self, codes: &[i32], label: Option<Label>) -> Result<usize> {
        check_dim(self.config.dim, codes.len())?;
        let i = self.next_free;
        if i >= self.config.capacity {
            return Err(Error::CapacityExhausted { capacity: self.config.capacity });
        }
        let d = self.config.dim;
        self.weights[i * d..(i + 1) * d].copy_from_slice(codes);
        self.labels[i] = label;
        self.set_goodness(i, self.config.initial_goodness);
        self.next_free += 1;
        Ok(i)
    }

    fn set_goodness(&mut self, i: usize, g: u32) {
        self.traces.g[i] = g.max(1);
        self.traces.alpha[i] = self.reciprocal.alpha(self.traces.g[i]);
    }

    /// Integer activations of every allocated row for a code vector.
    fn activations(&self, x_q: &[i32]) -> Vec<i64> {
        (0..self.next_free).map(|i| int_dot_unchecked(self.row(i), x_q)).collect()
    }

    /// Starts an epoch: overwrites traces, arms the novelty timer and
    /// schedules prototype spikes. Returns the input population's spikes.
    pub fn inject_sample(&mut self, x_q: &[i32]) -> Result<Vec<SpikeEvent>> {
        check_dim(self.config.dim, x_q.len())?;
        self.epoch_clock = 0;
        self.traces.x.copy_from_slice(x_q);
        let active = x_q.iter().filter(|&&c| c != 0).count();
        for i in 0..self.config.capacity {
            self.traces.y[i] = if i < self.next_free { int_dot_unchecked(self.row(i), x_q) } else { 0 };
            self.delays[i] = if i < self.next_free {
                latency_encode(self.traces.y[i], self.theta_int, self.config.latency_bins, self.y_max)
            } else {
                None
            };
        }
        self.counters.macs += (active * self.next_free) as u64;
        self.novelty = NoveltyState::Armed { deadline: self.config.t_wait };
        self.inhibited.iter_mut().for_each(|f| *f = false);
        self.inbox = None;
        self.pending = None;
        self.supervised = None;
        self.allocation_label = None;
        self.winner = None;

        let spikes: Vec<SpikeEvent> = x_q
            .iter()
            .enumerate()
            .filter(|(_, &c)| c != 0)
            .map(|(j, &c)| SpikeEvent { time: 0, population: Population::Input, neuron: j, payload: c })
            .collect();
        self.counters.spikes += spikes.len() as u64;
        Ok(spikes)
    }

    /// Advances one timestep.
    pub fn step(&mut self) -> Vec<SpikeEvent> {
        let t = self.epoch_clock;
        let mut out = Vec::new();
        if t >= self.config.t_epoch {
            return out;
        }

        // Lateral inhibition: the earliest (then lowest-index) spike wins
        // and silences the whole population, itself included.
        let firing = (0..self.next_free).find(|&i| !self.inhibited[i] && self.delays[i] == Some(t));
        if let Some(k) = firing {
            out.push(SpikeEvent { time: t, population: Population::Prototype, neuron: k, payload: 1 });
            self.inhibited.iter_mut().for_each(|f| *f = true);
            self.winner = Some((k, t));
            if let NoveltyState::Armed { .. } = self.novelty {
                self.novelty = NoveltyState::Idle;
            }
        }

        if let NoveltyState::Armed { deadline } = self.novelty {
            if t >= deadline {
                self.novelty = NoveltyState::Fired;
                out.push(SpikeEvent {
                    time: t,
                    population: Population::Novelty,
                    neuron: 0,
                    payload: self.next_free as i32,
                });
                if self.next_free < self.config.capacity {
                    let tf = ThirdFactor { target: self.next_free, r: Sign::Plus };
                    self.inbox = Some((tf, FeedbackSource::Novelty));
                }
            }
        }

        if let Some((tf, source)) = self.inbox.take() {
            if source == FeedbackSource::Supervisor {
                out.push(SpikeEvent { time: t, population: Population::Supervisor, neuron: 0, payload: tf.r.value() });
            }
            out.push(SpikeEvent { time: t, population: Population::Modulator, neuron: 0, payload: tf.r.value() });
            self.pending = Some(tf);
        }

        self.counters.spikes += out.len() as u64;
        self.epoch_clock += 1;
        out
    }

    /// Host-side match/mismatch check once the winner or novelty is known.
    /// Queues the verdict for the modulator and returns it.
    pub fn supervise(&mut self, true_label: Option<Label>) -> Result<ModEvent> {
        if let Some(ev) = self.supervised {
            return Ok(ev);
        }
        let ev = match (self.winner, self.novelty) {
            (Some((k, _)), _) => {
                let ev = decide_event(Some((k, self.labels[k])), true_label, self.next_free, self.config.capacity)?;
                self.inbox = Some((ThirdFactor { target: k, r: ev.r }, FeedbackSource::Supervisor));
                ev
            }
            (None, NoveltyState::Fired) => {
                let ev = decide_event(None, true_label, self.next_free, self.config.capacity)?;
                self.allocation_label = true_label;
                ev
            }
            _ => return Ok(ModEvent::none()),
        };
        self.supervised = Some(ev);
        Ok(ev)
    }

    /// Runs the learning engine over every plastic synapse; only the row
    /// holding a pending third factor changes. Returns the number of
    /// synapses rewritten. Once per epoch by default, after every timestep
    /// under [`LearningSchedule::EveryTimestep`].
    pub fn learning_phase(&mut self) -> u64 {
        debug_assert!(
            self.config.schedule == LearningSchedule::EveryTimestep || self.epoch_clock == self.config.t_epoch,
            "learning phase outside epoch boundary"
        );
        let (p, d) = (self.config.capacity, self.config.dim);
        self.counters.learning_phases += 1;
        self.counters.rule_evaluations += (p * d) as u64;
        let Some(tf) = self.pending.take() else {
            return 0;
        };
        let i = tf.target;
        let fmt = self.config.format;
        if i == self.next_free {
            // Zero row, unit rate, zero activation: the rule copies x.
            let zero = vec![0; d];
            let row = fixed_update(&zero, &self.traces.x, 0, fmt.alpha_one(), Sign::Plus, &fmt)
                .expect("trace width matches row width");
            self.weights[i * d..(i + 1) * d].copy_from_slice(&row);
            self.labels[i] = self.allocation_label;
            self.set_goodness(i, self.config.initial_goodness);
            self.next_free += 1;
        } else {
            let row = fixed_update(self.row(i), &self.traces.x, self.traces.y[i], self.traces.alpha[i], tf.r, &fmt)
                .expect("trace width matches row width");
            self.weights[i * d..(i + 1) * d].copy_from_slice(&row);
            let g = self.traces.g[i] as i64 + tf.r.value() as i64;
            self.set_goodness(i, g.max(1) as u32);
        }
        self.counters.synapse_updates += d as u64;
        d as u64
    }

    /// Full inference-feedback-learning episode for one sample.
    pub fn run_epoch(&mut self, x: &FeatureVector, true_label: Option<Label>) -> Result<EpochResult> {
        check_dim(self.config.dim, x.dim())?;
        let before = self.counters;
        let x_q = quantize_vec(x.values(), &self.config.format).codes;
        let mut events = self.inject_sample(&x_q)?;
        for _ in 0..self.config.t_epoch {
            events.extend(self.step());
            if self.supervised.is_none() && (self.winner.is_some() || self.novelty == NoveltyState::Fired) {
                self.supervise(true_label)?;
            }
            if self.config.schedule == LearningSchedule::EveryTimestep {
                self.learning_phase();
            }
        }
        if self.config.schedule == LearningSchedule::EndOfEpoch {
            self.learning_phase();
        }
        let after = self.counters;
        let winner = self.winner.map(|(k, _)| k);
        Ok(EpochResult {
            winner,
            winner_label: winner.and_then(|k| self.labels[k]),
            winner_spike_time: self.winner.map(|(_, t)| t),
            novelty_fired: self.novelty == NoveltyState::Fired,
            event: self.supervised.unwrap_or_else(ModEvent::none),
            spike_count: after.spikes - before.spikes,
            synapse_update_count: after.synapse_updates - before.synapse_updates,
            rule_evaluations: after.rule_evaluations - before.rule_evaluations,
            macs: after.macs - before.macs,
            events,
        })
    }

    /// Learning-time winner for a code vector without running an epoch:
    /// the lowest-delay (then lowest-index) prototype above threshold.
    pub fn spiking_winner(&self, x_q: &[i32]) -> Result<Option<usize>> {
        check_dim(self.config.dim, x_q.len())?;
        let bins = self.config.latency_bins;
        Ok(self
            .activations(x_q)
            .into_iter()
            .enumerate()
            .filter_map(|(i, y)| latency_encode(y, self.theta_int, bins, self.y_max).map(|d| (d, i)))
            .min()
            .map(|(_, i)| i))
    }

    /// Evaluation-time prediction: the spiking winner when there is one,
    /// otherwise the host reads out the largest activation.
    pub fn predict_forced(&self, x: &FeatureVector) -> Result<Option<(usize, Option<Label>)>> {
        check_dim(self.config.dim, x.dim())?;
        let x_q = quantize_vec(x.values(), &self.config.format).codes;
        let winner = match self.spiking_winner(&x_q)? {
            Some(k) => Some(k),
            None => {
                let acts = self.activations(&x_q);
                let mut best: Option<(usize, i64)> = None;
                for (i, y) in acts.into_iter().enumerate() {
                    if best.is_none_or(|(_, b)| y > b) {
                        best = Some((i, y));
                    }
                }
                best.map(|(i, _)| i)
            }
        };
        Ok(winner.map(|k| (k, self.labels[k])))
    }
}
