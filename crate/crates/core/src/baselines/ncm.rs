use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::BaselineCounters;
use crate::error::{Error, Result};
use crate::vector::{check_dim, dist_sq, FeatureVector, Label};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct ClassMean {
    mean: Vec<f64>,
    count: u64,
}

/// One running mean per class, classified by Euclidean distance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NcmModel {
    dim: usize,
    classes: BTreeMap<Label, ClassMean>,
    #[serde(skip)]
    counters: BaselineCounters,
}

impl NcmModel {
    pub fn new(dim: usize) -> Self {
        Self { dim, classes: BTreeMap::new(), counters: BaselineCounters::default() }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn mean(&self, label: Label) -> Option<&[f64]> {
        self.classes.get(&label).map(|c| c.mean.as_slice())
    }

    pub fn count(&self, label: Label) -> u64 {
        self.classes.get(&label).map_or(0, |c| c.count)
    }

    pub fn counters(&self) -> BaselineCounters {
        self.counters
    }

    /// mu <- mu + (x - mu) / (c + 1)
    pub fn update(&mut self, x: &FeatureVector, label: Label) -> Result<()> {
        check_dim(self.dim, x.dim())?;
        let dim = self.dim;
        let class = self.classes.entry(label).or_insert_with(|| ClassMean { mean: vec![0.0; dim], count: 0 });
        class.count += 1;
        let inv = 1.0 / class.count as f64;
        for (m, v) in class.mean.iter_mut().zip(x.values()) {
            *m += (v - *m) * inv;
        }
        self.counters.weight_writes += dim as u64;
        Ok(())
    }

    /// Nearest mean; ties resolve to the lowest class id.
    pub fn predict(&self, x: &FeatureVector) -> Result<Label> {
        check_dim(self.dim, x.dim())?;
        let mut best: Option<(Label, f64)> = None;
        for (&label, class) in &self.classes {
            let d = dist_sq(&class.mean, x.values());
            if best.is_none_or(|(_, b)| d < b) {
                best = Some((label, d));
            }
        }
        best.map(|(l, _)| l).ok_or(Error::EmptyModel)
    }

    pub(crate) fn count_prediction(&mut self) {
        self.counters.macs += (self.classes.len() * self.dim) as u64;
    }
}
