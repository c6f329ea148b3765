use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::io::Write;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{ClipSource, Costs, OnlineLearner, Sample, StreamProtocol};
use crate::error::Result;
use crate::snn::{LearningSchedule, SnnConfig, SnnNet};
use crate::vector::Label;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalPoint {
    pub task: usize,
    pub seen_classes: usize,
    pub samples_seen: u64,
    pub accuracy: f64,
    pub per_class: BTreeMap<Label, f64>,
    pub allocated: usize,
    pub costs: Costs,
    /// Mean training wall-clock per sample so far (informational).
    pub wall_ns_per_sample: f64,
}

/// One streamed training frame and the learner's pre-update prediction.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamRecord {
    pub id: u64,
    pub label: Option<Label>,
    pub predicted: Option<Label>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub learner: String,
    pub seed: u64,
    pub eval_points: Vec<EvalPoint>,
    pub final_accuracy: f64,
    pub allocated: usize,
    pub samples: u64,
    pub costs: Costs,
    pub wall_ns_per_sample: f64,
    /// Fraction of exactly-zero feature components over the stream.
    pub feature_sparsity: f64,
    pub stream: Vec<StreamRecord>,
}

impl RunMetrics {
    /// Equality ignoring wall-clock fields.
    pub fn same_outcome(&self, other: &RunMetrics) -> bool {
        let strip = |m: &RunMetrics| {
            let mut m = m.clone();
            m.wall_ns_per_sample = 0.0;
            m.eval_points.iter_mut().for_each(|p| p.wall_ns_per_sample = 0.0);
            m
        };
        strip(self) == strip(other)
    }
}

fn eval_frames<'a>(source: &'a ClipSource, protocol: &StreamProtocol, classes: &BTreeSet<Label>) -> Vec<&'a Sample> {
    let frames = source.frames_per_clip();
    protocol
        .scheduled_clips()
        .map(|i| &source.clips()[i])
        .filter(|c| classes.contains(&c.label))
        .flat_map(|c| &c.samples[frames - protocol.holdout..])
        .collect()
}

/// Forced-choice accuracy on the held-out frames of `classes`, overall and
/// per class. An abstention counts as an error.
pub fn evaluate(
    learner: &mut dyn OnlineLearner,
    source: &ClipSource,
    protocol: &StreamProtocol,
    classes: &BTreeSet<Label>,
) -> Result<(f64, BTreeMap<Label, f64>)> {
    let mut tally: BTreeMap<Label, (u64, u64)> = BTreeMap::new();
    for s in eval_frames(source, protocol, classes) {
        let truth = s.label.expect("clip frames are labeled");
        let hit = learner.predict(s)? == Some(truth);
        let t = tally.entry(truth).or_default();
        t.0 += hit as u64;
        t.1 += 1;
    }
    let (hits, total) = tally.values().fold((0, 0), |a, t| (a.0 + t.0, a.1 + t.1));
    let overall = if total == 0 { 0.0 } else { hits as f64 / total as f64 };
    let per_class = tally.into_iter().map(|(l, (h, n))| (l, h as f64 / n as f64)).collect();
    Ok((overall, per_class))
}

/// Streams every training frame once and evaluates after every task.
pub fn run_experiment(learner: &mut dyn OnlineLearner, source: &ClipSource, protocol: &StreamProtocol) -> Result<RunMetrics> {
    let train_len = source.frames_per_clip() - protocol.holdout;
    let mut seen = BTreeSet::new();
    let mut delivered = HashSet::new();
    let mut stream = Vec::new();
    let mut eval_points = Vec::with_capacity(protocol.tasks.len());
    let mut wall_ns = 0u128;
    let (mut zeros, mut components) = (0u64, 0u64);

    for (t, task) in protocol.tasks.iter().enumerate() {
        for &ci in &task.clips {
            let clip = &source.clips()[ci];
            seen.insert(clip.label);
            for s in &clip.samples[..train_len] {
                assert!(delivered.insert(s.id), "frame {} delivered twice", s.id);
                zeros += s.features.values().iter().filter(|v| **v == 0.0).count() as u64;
                components += s.features.dim() as u64;
                let start = Instant::now();
                let predicted = learner.learn(s)?;
                wall_ns += start.elapsed().as_nanos();
                stream.push(StreamRecord { id: s.id, label: s.label, predicted });
            }
        }
        let (accuracy, per_class) = evaluate(learner, source, protocol, &seen)?;
        let n = stream.len() as u64;
        log::debug!("{} task {t}: accuracy {accuracy:.4} over {} classes", learner.name(), seen.len());
        eval_points.push(EvalPoint {
            task: t,
            seen_classes: seen.len(),
            samples_seen: n,
            accuracy,
            per_class,
            allocated: learner.allocated(),
            costs: learner.costs(),
            wall_ns_per_sample: wall_ns as f64 / n.max(1) as f64,
        });
    }

    let samples = stream.len() as u64;
    Ok(RunMetrics {
        learner: learner.name().to_string(),
        seed: protocol.seed,
        final_accuracy: eval_points.last().map_or(0.0, |p| p.accuracy),
        eval_points,
        allocated: learner.allocated(),
        samples,
        costs: learner.costs(),
        wall_ns_per_sample: wall_ns as f64 / samples.max(1) as f64,
        feature_sparsity: if components == 0 { 0.0 } else { zeros as f64 / components as f64 },
        stream,
    })
}

/// Per-sample averages of a run's counters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub learner: String,
    pub samples: u64,
    pub weight_writes_per_sample: f64,
    pub macs_per_sample: f64,
    pub spikes_per_sample: f64,
    pub synapse_updates_per_sample: f64,
    pub rule_evaluations_per_sample: f64,
    pub max_modified_per_sample: u64,
    pub wall_ns_per_sample: f64,
    pub note: String,
}

pub fn count_costs(m: &RunMetrics) -> CostReport {
    let per = |v: u64| v as f64 / m.samples.max(1) as f64;
    CostReport {
        learner: m.learner.clone(),
        samples: m.samples,
        weight_writes_per_sample: per(m.costs.weight_writes),
        macs_per_sample: per(m.costs.macs),
        spikes_per_sample: per(m.costs.spikes),
        synapse_updates_per_sample: per(m.costs.synapse_updates),
        rule_evaluations_per_sample: per(m.costs.rule_evaluations),
        max_modified_per_sample: m.costs.max_modified_per_sample,
        wall_ns_per_sample: m.wall_ns_per_sample,
        note: "energy is not modeled; operation and spike counts stand in for it".into(),
    }
}

/// Learning-rule evaluations under both learning schedules on one stream.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScheduleRatio {
    pub end_of_epoch: u64,
    pub every_timestep: u64,
    pub t_epoch: u32,
}

impl ScheduleRatio {
    pub fn ratio(&self) -> f64 {
        self.every_timestep as f64 / self.end_of_epoch as f64
    }

    pub fn holds(&self) -> bool {
        self.every_timestep == self.t_epoch as u64 * self.end_of_epoch
    }
}

pub fn verify_schedule_ratio<'a>(config: &SnnConfig, samples: impl IntoIterator<Item = &'a Sample>) -> Result<ScheduleRatio> {
    let mut coarse = SnnNet::new(SnnConfig { schedule: LearningSchedule::EndOfEpoch, ..config.clone() })?;
    let mut fine = SnnNet::new(SnnConfig { schedule: LearningSchedule::EveryTimestep, ..config.clone() })?;
    for s in samples {
        coarse.run_epoch(&s.features, s.label)?;
        fine.run_epoch(&s.features, s.label)?;
    }
    Ok(ScheduleRatio {
        end_of_epoch: coarse.counters().rule_evaluations,
        every_timestep: fine.counters().rule_evaluations,
        t_epoch: config.t_epoch,
    })
}

pub const METRICS_COLUMNS: [&str; 13] = [
    "learner",
    "seed",
    "task",
    "seen_classes",
    "samples_seen",
    "accuracy",
    "allocated",
    "weight_writes",
    "macs",
    "spikes",
    "synapse_updates",
    "rule_evaluations",
    "wall_ns_per_sample",
];

/// One row per (run, evaluation point).
pub fn write_metrics_csv(mut w: impl Write, runs: &[RunMetrics]) -> Result<()> {
    writeln!(w, "{}", METRICS_COLUMNS.join(","))?;
    for m in runs {
        for p in &m.eval_points {
            let c = &p.costs;
            writeln!(
                w,
                "{},{},{},{},{},{:.6},{},{},{},{},{},{},{:.1}",
                m.learner,
                m.seed,
                p.task,
                p.seen_classes,
                p.samples_seen,
                p.accuracy,
                p.allocated,
                c.weight_writes,
                c.macs,
                c.spikes,
                c.synapse_updates,
                c.rule_evaluations,
                p.wall_ns_per_sample
            )?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::{build_learner, build_protocol, gen_synthetic, LearnerKind, LearnerParams, ProtocolMode, SyntheticSpec};
    use crate::rng::SplitMix64;

    struct Oracle;

    impl OnlineLearner for Oracle {
        fn name(&self) -> &str {
            "oracle"
        }
        fn learn(&mut self, s: &Sample) -> Result<Option<Label>> {
            Ok(s.label)
        }
        fn predict(&mut self, s: &Sample) -> Result<Option<Label>> {
            Ok(s.label)
        }
        fn costs(&self) -> Costs {
            Costs::default()
        }
        fn allocated(&self) -> usize {
            0
        }
    }

    struct Guess {
        rng: SplitMix64,
        classes: u64,
    }

    impl OnlineLearner for Guess {
        fn name(&self) -> &str {
            "guess"
        }
        fn learn(&mut self, _: &Sample) -> Result<Option<Label>> {
            Ok(None)
        }
        fn predict(&mut self, _: &Sample) -> Result<Option<Label>> {
            Ok(Some(self.rng.below(self.classes) as Label))
        }
        fn costs(&self) -> Costs {
            Costs::default()
        }
        fn allocated(&self) -> usize {
            0
        }
    }

    fn spec(classes: usize, clips: usize) -> SyntheticSpec {
        SyntheticSpec { dim: 32, classes, modes: 1, clips_per_class: clips, seed: 77, ..SyntheticSpec::default() }
    }

    #[test]
    fn perfect_learner_scores_one_everywhere() {
        let src = gen_synthetic(&spec(5, 2)).unwrap();
        let p = build_protocol(ProtocolMode::MultiShot(2), &src, 3).unwrap();
        let m = run_experiment(&mut Oracle, &src, &p).unwrap();
        assert_eq!(m.eval_points.len(), 2);
        assert!(m.eval_points.iter().all(|e| e.accuracy == 1.0));
    }

    #[test]
    fn random_guessing_sits_at_chance() {
        let c = 8;
        let src = gen_synthetic(&SyntheticSpec { frames_per_clip: 260, ..spec(c, 1) }).unwrap();
        let p = build_protocol(ProtocolMode::OneShot, &src, 4).unwrap();
        let mut g = Guess { rng: SplitMix64::new(5), classes: c as u64 };
        let m = run_experiment(&mut g, &src, &p).unwrap();
        let n = (c * 10) as f64;
        let p0 = 1.0 / c as f64;
        let sigma = (p0 * (1.0 - p0) / n).sqrt();
        assert!((m.final_accuracy - p0).abs() <= 3.0 * sigma, "{} vs {p0} +- {}", m.final_accuracy, 3.0 * sigma);
    }

    #[test]
    fn every_training_frame_once_and_deterministic() {
        let src = gen_synthetic(&spec(4, 3)).unwrap();
        let p = build_protocol(ProtocolMode::MultiShot(3), &src, 6).unwrap();
        for kind in LearnerKind::ALL {
            let mut a = build_learner(kind, &LearnerParams::default(), 32).unwrap();
            let ma = run_experiment(a.as_mut(), &src, &p).unwrap();
            let ids: HashSet<u64> = ma.stream.iter().map(|r| r.id).collect();
            assert_eq!(ids.len(), ma.stream.len());
            assert_eq!(ma.stream.len(), 12 * 50);
            let mut b = build_learner(kind, &LearnerParams::default(), 32).unwrap();
            let mb = run_experiment(b.as_mut(), &src, &p).unwrap();
            assert!(ma.same_outcome(&mb), "{kind} not deterministic");
            for w in ma.eval_points.windows(2) {
                let (x, y) = (&w[0].costs, &w[1].costs);
                assert!(x.weight_writes <= y.weight_writes && x.macs <= y.macs && x.spikes <= y.spikes);
            }
            assert!(ma.eval_points.iter().all(|e| (0.0..=1.0).contains(&e.accuracy)));
        }
    }

    #[test]
    fn weight_writes_per_supervised_sample() {
        let src = gen_synthetic(&spec(4, 1)).unwrap();
        let p = build_protocol(ProtocolMode::OneShot, &src, 1).unwrap();
        for (kind, per_sample) in [(LearnerKind::Clp, 32.0), (LearnerKind::Ncm, 32.0)] {
            let mut l = build_learner(kind, &LearnerParams::default(), 32).unwrap();
            let m = run_experiment(l.as_mut(), &src, &p).unwrap();
            let r = count_costs(&m);
            assert_eq!(r.weight_writes_per_sample, per_sample);
        }
    }

    #[test]
    fn schedule_ratio_is_t_epoch() {
        let src = gen_synthetic(&spec(3, 1)).unwrap();
        let r = verify_schedule_ratio(&SnnConfig::new(32), src.clips().iter().flat_map(|c| &c.samples)).unwrap();
        assert!(r.holds());
        assert_eq!(r.ratio(), 20.0);
    }

    #[test]
    fn csv_has_one_row_per_eval_point() {
        let src = gen_synthetic(&spec(3, 1)).unwrap();
        let mut runs = Vec::new();
        for seed in 0..3 {
            let p = build_protocol(ProtocolMode::OneShot, &src, seed).unwrap();
            let mut l = build_learner(LearnerKind::Ncm, &LearnerParams::default(), 32).unwrap();
            runs.push(run_experiment(l.as_mut(), &src, &p).unwrap());
        }
        let mut out = Vec::new();
        write_metrics_csv(&mut out, &runs).unwrap();
        let text = String::from_utf8(out).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], METRICS_COLUMNS.join(","));
        assert_eq!(lines.len(), 1 + 3 * 3);
        assert!(lines[1..].iter().all(|l| l.split(',').count() == METRICS_COLUMNS.len()));
    }
}
