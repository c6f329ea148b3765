use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SplitMix64;
use crate::vector::Label;

use super::Sample;

/// Frames at the end of every clip kept back for evaluation.
pub const HOLDOUT_FRAMES: usize = 10;

/// An ordered run of frames of one class.
#[derive(Clone, Debug, PartialEq)]
pub struct Clip {
    pub label: Label,
    pub samples: Vec<Sample>,
}

/// Every clip available to a protocol. All clips share one length.
#[derive(Clone, Debug, PartialEq)]
pub struct ClipSource {
    dim: usize,
    clips: Vec<Clip>,
}

impl ClipSource {
    pub fn new(dim: usize, clips: Vec<Clip>) -> Result<Self> {
        let len = clips.first().map_or(0, |c| c.samples.len());
        for (i, c) in clips.iter().enumerate() {
            if c.samples.len() != len {
                return Err(Error::Format(format!("clip {i} has {} frames, expected {len}", c.samples.len())));
            }
            for s in &c.samples {
                if s.features.dim() != dim || s.raw.len() != dim {
                    return Err(Error::DimensionMismatch { expected: dim, found: s.features.dim() });
                }
                if s.label != Some(c.label) {
                    return Err(Error::Format(format!("frame {} label differs from its clip", s.id)));
                }
            }
        }
        Ok(Self { dim, clips })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn clips(&self) -> &[Clip] {
        &self.clips
    }

    pub fn frames_per_clip(&self) -> usize {
        self.clips.first().map_or(0, |c| c.samples.len())
    }

    /// Clip indices per class, in source order.
    pub fn by_class(&self) -> BTreeMap<Label, Vec<usize>> {
        let mut m: BTreeMap<Label, Vec<usize>> = BTreeMap::new();
        for (i, c) in self.clips.iter().enumerate() {
            m.entry(c.label).or_default().push(i);
        }
        m
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProtocolMode {
    /// Each class once, one clip, one task per class.
    OneShot,
    /// `n` shots; every shot is one task holding one clip per class.
    MultiShot(u32),
}

/// Learning tasks separated by evaluation points.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Task {
    pub classes: Vec<Label>,
    /// Indices into the source, streamed in this order.
    pub clips: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StreamProtocol {
    pub mode: ProtocolMode,
    pub seed: u64,
    pub class_order: Vec<Label>,
    pub tasks: Vec<Task>,
    pub holdout: usize,
}

impl StreamProtocol {
    pub fn scheduled_clips(&self) -> impl Iterator<Item = usize> + '_ {
        self.tasks.iter().flat_map(|t| t.clips.iter().copied())
    }
}

/// Deterministic class-incremental schedule for `(mode, seed)`.
pub fn build_protocol(mode: ProtocolMode, source: &ClipSource, seed: u64) -> Result<StreamProtocol> {
    let frames = source.frames_per_clip();
    if frames <= HOLDOUT_FRAMES {
        return Err(Error::InsufficientData(format!(
            "clips need more than {HOLDOUT_FRAMES} frames, found {frames}"
        )));
    }
    let by_class = source.by_class();
    if by_class.is_empty() {
        return Err(Error::InsufficientData("source has no clips".into()));
    }
    let shots = match mode {
        ProtocolMode::OneShot => 1,
        ProtocolMode::MultiShot(0) => return Err(Error::InvalidConfig("multi-shot needs at least one shot".into())),
        ProtocolMode::MultiShot(n) => n as usize,
    };
    if let Some((label, clips)) = by_class.iter().find(|(_, c)| c.len() < shots) {
        return Err(Error::InsufficientData(format!("class {label} has {} clips, {shots} needed", clips.len())));
    }

    let mut rng = SplitMix64::new(seed);
    let labels: Vec<Label> = by_class.keys().copied().collect();
    let class_order: Vec<Label> = rng.permutation(labels.len()).into_iter().map(|i| labels[i]).collect();
    // Per class, which of its clips serve as shots 0, 1, ...
    let mut picks: BTreeMap<Label, Vec<usize>> = BTreeMap::new();
    for (&label, clips) in &by_class {
        let mut order = clips.clone();
        rng.shuffle(&mut order);
        order.truncate(shots);
        picks.insert(label, order);
    }

    let tasks = match mode {
        ProtocolMode::OneShot => class_order
            .iter()
            .map(|&l| Task { classes: vec![l], clips: vec![picks[&l][0]] })
            .collect(),
        ProtocolMode::MultiShot(_) => (0..shots)
            .map(|s| Task { classes: class_order.clone(), clips: class_order.iter().map(|l| picks[l][s]).collect() })
            .collect(),
    };
    Ok(StreamProtocol { mode, seed, class_order, tasks, holdout: HOLDOUT_FRAMES })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::{gen_synthetic, SyntheticSpec};

    fn source(classes: usize, clips: usize, frames: usize) -> ClipSource {
        let spec = SyntheticSpec { dim: 4, classes, clips_per_class: clips, frames_per_clip: frames, ..SyntheticSpec::default() };
        gen_synthetic(&spec).unwrap()
    }

    #[test]
    fn one_shot_visits_each_class_once() {
        let src = source(3, 2, 20);
        let p = build_protocol(ProtocolMode::OneShot, &src, 1).unwrap();
        assert_eq!(p.tasks.len(), 3);
        let mut seen: Vec<Label> = p.tasks.iter().map(|t| t.classes[0]).collect();
        assert_eq!(seen, p.class_order);
        seen.sort();
        assert_eq!(seen, vec![0, 1, 2]);
        for t in &p.tasks {
            assert_eq!(t.clips.len(), 1);
            assert_eq!(src.clips()[t.clips[0]].label, t.classes[0]);
        }
    }

    #[test]
    fn same_seed_same_schedule() {
        let src = source(6, 3, 20);
        let a = build_protocol(ProtocolMode::MultiShot(3), &src, 9).unwrap();
        assert_eq!(a, build_protocol(ProtocolMode::MultiShot(3), &src, 9).unwrap());
        let orders: std::collections::HashSet<_> =
            (0..10).map(|s| build_protocol(ProtocolMode::OneShot, &src, s).unwrap().class_order).collect();
        assert!(orders.len() > 1);
    }

    #[test]
    fn twenty_five_shots_forty_classes() {
        let src = source(40, 25, 12);
        let p = build_protocol(ProtocolMode::MultiShot(25), &src, 0).unwrap();
        assert_eq!(p.tasks.len(), 25);
        let clips: Vec<usize> = p.scheduled_clips().collect();
        assert_eq!(clips.len(), 1000);
        let unique: std::collections::HashSet<_> = clips.iter().collect();
        assert_eq!(unique.len(), 1000);
        for t in &p.tasks {
            let labels: Vec<Label> = t.clips.iter().map(|&c| src.clips()[c].label).collect();
            assert_eq!(labels, p.class_order);
        }
    }

    #[test]
    fn insufficient_data_is_reported() {
        let src = source(3, 2, 20);
        assert!(matches!(build_protocol(ProtocolMode::MultiShot(3), &src, 0), Err(Error::InsufficientData(_))));
        let short = source(3, 1, HOLDOUT_FRAMES);
        assert!(matches!(build_protocol(ProtocolMode::OneShot, &short, 0), Err(Error::InsufficientData(_))));
    }
}
