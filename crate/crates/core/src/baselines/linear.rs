use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};

use super::BaselineCounters;
use crate::error::{Error, Result};
use crate::vector::{check_dim, dot_unchecked, Label};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinearRule {
    #[default]
    Perceptron,
    Finetune,
    Replay,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearConfig {
    pub dim: usize,
    pub rule: LinearRule,
    /// SGD step size for finetune and replay.
    pub lr: f64,
    /// Stored samples per class for replay.
    pub replay_capacity: usize,
}

impl LinearConfig {
    pub fn new(dim: usize, rule: LinearRule) -> Self {
        Self { dim, rule, lr: 0.01, replay_capacity: 20 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::InvalidConfig("dim must be positive".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::InvalidConfig(format!("lr {} must be positive", self.lr)));
        }
        if self.rule == LinearRule::Replay && self.replay_capacity == 0 {
            return Err(Error::InvalidConfig("replay_capacity must be positive".into()));
        }
        Ok(())
    }
}

/// Per-class FIFO of stored samples.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ReplayBuffer {
    capacity: usize,
    slots: BTreeMap<Label, VecDeque<Vec<f64>>>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        Self { capacity, slots: BTreeMap::new() }
    }

    pub fn insert(&mut self, label: Label, x: Vec<f64>) {
        let q = self.slots.entry(label).or_default();
        if q.len() == self.capacity {
            q.pop_front();
        }
        q.push_back(x);
    }

    pub fn occupancy(&self, label: Label) -> usize {
        self.slots.get(&label).map_or(0, VecDeque::len)
    }

    pub fn class(&self, label: Label) -> impl Iterator<Item = &[f64]> {
        self.slots.get(&label).into_iter().flat_map(|q| q.iter().map(Vec::as_slice))
    }

    pub fn iter(&self) -> impl Iterator<Item = (Label, &[f64])> {
        self.slots.iter().flat_map(|(&l, q)| q.iter().map(move |x| (l, x.as_slice())))
    }

    pub fn len(&self) -> usize {
        self.slots.values().map(VecDeque::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Linear classifier `argmax(W x + b)` whose rows appear as classes arrive.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearHead {
    config: LinearConfig,
    /// Sorted, so ties in the argmax resolve to the lowest label.
    labels: Vec<Label>,
    weights: Vec<Vec<f64>>,
    bias: Vec<f64>,
    buffer: ReplayBuffer,
    #[serde(skip)]
    counters: BaselineCounters,
}

/// Softmax cross-entropy loss with its gradient, rows in label order.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradient {
    pub loss: f64,
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
}

impl LinearHead {
    pub fn new(config: LinearConfig) -> Result<Self> {
        config.validate()?;
        let buffer = ReplayBuffer::new(config.replay_capacity);
        Ok(Self { config, labels: Vec::new(), weights: Vec::new(), bias: Vec::new(), buffer, counters: BaselineCounters::default() })
    }

    pub fn config(&self) -> &LinearConfig {
        &self.config
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn weights(&self) -> &[Vec<f64>] {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn buffer(&self) -> &ReplayBuffer {
        &self.buffer
    }

    pub fn counters(&self) -> BaselineCounters {
        self.counters
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().flatten().chain(&self.bias).all(|v| v.is_finite())
    }

    fn row_of(&mut self, label: Label) -> usize {
        match self.labels.binary_search(&label) {
            Ok(i) => i,
            Err(i) => {
                self.labels.insert(i, label);
                self.weights.insert(i, vec![0.0; self.config.dim]);
                self.bias.insert(i, 0.0);
                i
            }
        }
    }

    fn scores(&self, x: &[f64]) -> Vec<f64> {
        self.weights.iter().zip(&self.bias).map(|(w, b)| dot_unchecked(w, x) + b).collect()
    }

    fn argmax(scores: &[f64]) -> Option<usize> {
        let mut best: Option<usize> = None;
        for (i, &s) in scores.iter().enumerate() {
            if best.is_none_or(|b| s > scores[b]) {
                best = Some(i);
            }
        }
        best
    }

    pub fn predict(&mut self, x: &[f64]) -> Result<Label> {
        check_dim(self.config.dim, x.len())?;
        self.counters.macs += (self.labels.len() * self.config.dim) as u64;
        Self::argmax(&self.scores(x)).map(|i| self.labels[i]).ok_or(Error::EmptyModel)
    }

    /// Loss and gradient for `(x, label)`; the label must already own a row.
    pub fn loss_gradient(&self, x: &[f64], label: Label) -> Result<Gradient> {
        check_dim(self.config.dim, x.len())?;
        let t = self.labels.binary_search(&label).map_err(|_| Error::InvalidConfig(format!("label {label} has no row")))?;
        Ok(self.gradient(x, t))
    }

    /// Mutable access to weights and biases, rows in label order.
    pub fn params_mut(&mut self) -> (&mut [Vec<f64>], &mut [f64]) {
        (&mut self.weights, &mut self.bias)
    }

    pub(crate) fn gradient(&self, x: &[f64], target: usize) -> Gradient {
        let scores = self.scores(x);
        let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
        let z: f64 = exps.iter().sum();
        let loss = z.ln() + max - scores[target];
        let bias: Vec<f64> = exps.iter().enumerate().map(|(k, e)| e / z - (k == target) as u8 as f64).collect();
        let weights = bias.iter().map(|&g| x.iter().map(|v| g * v).collect()).collect();
        Gradient { loss, weights, bias }
    }

    fn apply(&mut self, g: &Gradient, scale: f64) {
        let lr = self.config.lr * scale;
        for ((w, gw), (b, gb)) in self.weights.iter_mut().zip(&g.weights).zip(self.bias.iter_mut().zip(&g.bias)) {
            for (wi, gi) in w.iter_mut().zip(gw) {
                *wi -= lr * gi;
            }
            *b -= lr * gb;
        }
        self.counters.weight_writes += (self.labels.len() * (self.config.dim + 1)) as u64;
    }

    /// Multiclass perceptron: on a mistake, add `x` to the true row and
    /// subtract it from the predicted one. Returns whether it was a mistake.
    pub fn perceptron_step(&mut self, x: &[f64], label: Label) -> Result<bool> {
        check_dim(self.config.dim, x.len())?;
        let t = self.row_of(label);
        self.counters.macs += (self.labels.len() * self.config.dim) as u64;
        let p = Self::argmax(&self.scores(x)).expect("row exists");
        if p == t {
            return Ok(false);
        }
        for (w, v) in self.weights[t].iter_mut().zip(x) {
            *w += v;
        }
        for (w, v) in self.weights[p].iter_mut().zip(x) {
            *w -= v;
        }
        self.counters.weight_writes += 2 * self.config.dim as u64;
        Ok(true)
    }

    /// One SGD step on the softmax cross-entropy of `(x, label)`.
    pub fn finetune_step(&mut self, x: &[f64], label: Label) -> Result<()> {
        check_dim(self.config.dim, x.len())?;
        let t = self.row_of(label);
        let g = self.gradient(x, t);
        self.counters.macs += (self.labels.len() * self.config.dim) as u64;
        self.apply(&g, 1.0);
        Ok(())
    }

    /// One SGD step on the mean loss over `x` and every buffered sample,
    /// then `x` enters the buffer.
    pub fn replay_step(&mut self, x: &[f64], label: Label) -> Result<()> {
        check_dim(self.config.dim, x.len())?;
        self.row_of(label);
        let c = self.labels.len();
        let mut total = self.gradient(x, self.index(label));
        let mut n = 1.0;
        for (l, sample) in self.buffer.iter() {
            let g = self.gradient(sample, self.index(l));
            for (tw, gw) in total.weights.iter_mut().zip(&g.weights) {
                for (a, b) in tw.iter_mut().zip(gw) {
                    *a += b;
                }
            }
            for (a, b) in total.bias.iter_mut().zip(&g.bias) {
                *a += b;
            }
            n += 1.0;
        }
        self.counters.macs += (n as usize * c * self.config.dim) as u64;
        self.apply(&total, 1.0 / n);
        self.buffer.insert(label, x.to_vec());
        Ok(())
    }

    fn index(&self, label: Label) -> usize {
        self.labels.binary_search(&label).expect("row allocated before use")
    }

    /// Dispatches on the configured rule.
    pub fn step(&mut self, x: &[f64], label: Label) -> Result<()> {
        match self.config.rule {
            LinearRule::Perceptron => self.perceptron_step(x, label).map(|_| ()),
            LinearRule::Finetune => self.finetune_step(x, label),
            LinearRule::Replay => self.replay_step(x, label),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;
    use crate::vector::l2_normalize;

    fn unit(rng: &mut SplitMix64, d: usize) -> Vec<f64> {
        let v: Vec<f64> = (0..d).map(|_| rng.normal()).collect();
        l2_normalize(&v).unwrap().into_values()
    }

    #[test]
    fn perceptron_mistake_bound_on_separable_instance() {
        let mut rng = SplitMix64::new(41);
        let d = 10;
        let gamma = 0.1;
        let u = unit(&mut rng, d);
        let mut data = Vec::new();
        while data.len() < 400 {
            let x = unit(&mut rng, d);
            let m = crate::vector::dot(&u, &x).unwrap();
            if m.abs() >= gamma {
                data.push((x, (m > 0.0) as Label));
            }
        }
        let mut h = LinearHead::new(LinearConfig::new(d, LinearRule::Perceptron)).unwrap();
        let mut mistakes = 0;
        let mut converged = false;
        for _ in 0..1000 {
            let mut epoch = 0;
            for (x, l) in &data {
                epoch += h.perceptron_step(x, *l).unwrap() as usize;
            }
            mistakes += epoch;
            if epoch == 0 {
                converged = true;
                break;
            }
        }
        assert!(converged);
        // Unit inputs: at most 1 / gamma^2, well inside d / gamma^2.
        assert!(mistakes as f64 <= 1.0 / (gamma * gamma), "{mistakes} mistakes");
        for (x, l) in &data {
            assert_eq!(h.predict(x).unwrap(), *l);
        }
    }

    #[test]
    fn gradient_matches_central_differences() {
        let mut rng = SplitMix64::new(42);
        let d = 6;
        let mut h = LinearHead::new(LinearConfig::new(d, LinearRule::Finetune)).unwrap();
        for l in [0, 3, 4, 9] {
            h.row_of(l);
        }
        for _ in 0..20 {
            for w in h.weights.iter_mut().flatten().chain(h.bias.iter_mut()) {
                *w = rng.normal();
            }
            let x = unit(&mut rng, d);
            let t = rng.below(4) as usize;
            let g = h.gradient(&x, t);
            let eps = 1e-5;
            for k in 0..4 {
                for j in 0..=d {
                    let mut plus = h.clone();
                    let mut minus = h.clone();
                    if j < d {
                        plus.weights[k][j] += eps;
                        minus.weights[k][j] -= eps;
                    } else {
                        plus.bias[k] += eps;
                        minus.bias[k] -= eps;
                    }
                    let fd = (plus.gradient(&x, t).loss - minus.gradient(&x, t).loss) / (2.0 * eps);
                    let an = if j < d { g.weights[k][j] } else { g.bias[k] };
                    assert!((fd - an).abs() < 1e-5, "row {k} col {j}: {fd} vs {an}");
                }
            }
        }
    }

    #[test]
    fn finetune_step_reduces_loss() {
        let mut h = LinearHead::new(LinearConfig { lr: 0.5, ..LinearConfig::new(2, LinearRule::Finetune) }).unwrap();
        h.finetune_step(&[1.0, 0.0], 0).unwrap();
        h.finetune_step(&[0.0, 1.0], 1).unwrap();
        let before = h.gradient(&[1.0, 0.0], 0).loss;
        h.finetune_step(&[1.0, 0.0], 0).unwrap();
        assert!(h.gradient(&[1.0, 0.0], 0).loss < before);
        assert!(h.is_finite());
    }

    #[test]
    fn buffer_evicts_oldest() {
        let mut b = ReplayBuffer::new(3);
        for i in 0..5 {
            b.insert(1, vec![i as f64]);
        }
        b.insert(2, vec![9.0]);
        assert_eq!(b.occupancy(1), 3);
        let kept: Vec<f64> = b.class(1).map(|x| x[0]).collect();
        assert_eq!(kept, vec![2.0, 3.0, 4.0]);
        assert_eq!(b.len(), 4);
    }

    #[test]
    fn replay_step_uses_buffer_then_stores() {
        let cfg = LinearConfig { replay_capacity: 2, ..LinearConfig::new(2, LinearRule::Replay) };
        let mut h = LinearHead::new(cfg).unwrap();
        h.replay_step(&[2.0, 0.0], 0).unwrap();
        assert_eq!(h.buffer().len(), 1);
        // Second step averages the gradients of the new and the stored sample.
        let mut manual = h.clone();
        let row = manual.row_of(1);
        let g1 = manual.gradient(&[0.0, 3.0], row);
        let g2 = manual.gradient(&[2.0, 0.0], manual.index(0));
        h.replay_step(&[0.0, 3.0], 1).unwrap();
        for k in 0..2 {
            let want = manual.bias[k] - 0.01 * (g1.bias[k] + g2.bias[k]) / 2.0;
            assert!((h.bias[k] - want).abs() < 1e-15);
        }
        for x in [[1.0, 1.0], [3.0, 1.0], [0.0, 1.0]] {
            h.replay_step(&x, 1).unwrap();
        }
        assert_eq!((h.buffer().occupancy(0), h.buffer().occupancy(1)), (1, 2));
    }

    #[test]
    fn weights_stay_finite_on_long_streams() {
        let mut rng = SplitMix64::new(43);
        for rule in [LinearRule::Perceptron, LinearRule::Finetune, LinearRule::Replay] {
            let mut h = LinearHead::new(LinearConfig { lr: 0.5, replay_capacity: 5, ..LinearConfig::new(8, rule) }).unwrap();
            for _ in 0..2000 {
                let x: Vec<f64> = (0..8).map(|_| 10.0 * rng.normal()).collect();
                h.step(&x, rng.below(5) as Label).unwrap();
                assert!(h.is_finite());
            }
        }
    }

    #[test]
    fn empty_head_cannot_predict() {
        let mut h = LinearHead::new(LinearConfig::new(2, LinearRule::Finetune)).unwrap();
        assert!(matches!(h.predict(&[1.0, 0.0]), Err(Error::EmptyModel)));
    }
}
