use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::BaselineCounters;
use crate::error::{Error, Result};
use crate::vector::{check_dim, dot_unchecked, FeatureVector, Label};

/// Pivots of the shrunk covariance below this are treated as singular.
pub const SINGULAR_TOLERANCE: f64 = 1e-10;

/// Relative shrinkage used when none is configured: `eps = 1e-4 * tr(S) / d`.
pub const DEFAULT_SHRINKAGE_FACTOR: f64 = 1e-4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SldaConfig {
    pub dim: usize,
    /// Absolute ridge added to the covariance diagonal. `None` picks
    /// `1e-4 * trace / d` at every inversion.
    pub shrinkage: Option<f64>,
    /// Covariance fixed at the identity from the start.
    pub frozen: bool,
    /// Covariance learned from the first `n` samples, then frozen.
    pub freeze_after: Option<u64>,
}

impl SldaConfig {
    pub fn new(dim: usize) -> Self {
        Self { dim, shrinkage: None, frozen: false, freeze_after: None }
    }

    pub fn frozen(dim: usize) -> Self {
        Self { frozen: true, ..Self::new(dim) }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct ClassStats {
    mean: Vec<f64>,
    count: u64,
}

#[derive(Clone, Debug, Default)]
struct Cache {
    precision: Option<DMatrix<f64>>,
    /// Per class (label, Lambda mu, -mu.Lambda mu / 2), in label order.
    scorers: Vec<(Label, Vec<f64>, f64)>,
}

/// Streaming linear discriminant analysis with a shared covariance.
///
/// The covariance is the pooled within-class scatter divided by the total
/// count, accumulated with one Welford step per sample.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SldaModel {
    config: SldaConfig,
    classes: BTreeMap<Label, ClassStats>,
    /// Row-major d x d scatter (or the identity when frozen).
    scatter: Vec<f64>,
    total: u64,
    #[serde(skip)]
    cache: Cache,
    #[serde(skip, default = "dirty")]
    dirty: bool,
    #[serde(skip)]
    counters: BaselineCounters,
}

fn dirty() -> bool {
    true
}

impl PartialEq for SldaModel {
    fn eq(&self, other: &Self) -> bool {
        self.config == other.config && self.classes == other.classes && self.scatter == other.scatter && self.total == other.total
    }
}

impl SldaModel {
    pub fn new(config: SldaConfig) -> Result<Self> {
        if config.dim == 0 {
            return Err(Error::InvalidConfig("dim must be positive".into()));
        }
        if let Some(eps) = config.shrinkage {
            if !(eps >= 0.0 && eps.is_finite()) {
                return Err(Error::InvalidConfig(format!("shrinkage {eps} must be finite and non-negative")));
            }
        }
        let d = config.dim;
        let mut scatter = vec![0.0; d * d];
        if config.frozen {
            for i in 0..d {
                scatter[i * d + i] = 1.0;
            }
        }
        Ok(Self {
            config,
            classes: BTreeMap::new(),
            scatter,
            total: 0,
            cache: Cache::default(),
            dirty: true,
            counters: BaselineCounters::default(),
        })
    }

    pub fn config(&self) -> &SldaConfig {
        &self.config
    }

    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn mean(&self, label: Label) -> Option<&[f64]> {
        self.classes.get(&label).map(|c| c.mean.as_slice())
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn counters(&self) -> BaselineCounters {
        self.counters
    }

    pub fn is_cache_dirty(&self) -> bool {
        self.dirty
    }

    fn covariance_frozen(&self) -> bool {
        self.config.frozen || self.config.freeze_after.is_some_and(|n| self.total >= n)
    }

    /// Current covariance estimate (identity when frozen from the start).
    pub fn covariance(&self) -> DMatrix<f64> {
        let d = self.config.dim;
        let m = DMatrix::from_row_slice(d, d, &self.scatter);
        if self.config.frozen {
            m
        } else {
            m / (self.total.max(1) as f64)
        }
    }

    pub fn shrinkage(&self) -> f64 {
        let cov = self.covariance();
        self.config.shrinkage.unwrap_or_else(|| {
            let mean_var = cov.trace() / self.config.dim as f64;
            if mean_var > 0.0 {
                DEFAULT_SHRINKAGE_FACTOR * mean_var
            } else {
                DEFAULT_SHRINKAGE_FACTOR
            }
        })
    }

    pub fn shrunk_covariance(&self) -> DMatrix<f64> {
        let d = self.config.dim;
        self.covariance() + DMatrix::identity(d, d) * self.shrinkage()
    }

    pub fn update(&mut self, x: &FeatureVector, label: Label) -> Result<()> {
        let d = self.config.dim;
        check_dim(d, x.dim())?;
        let update_cov = !self.covariance_frozen();
        let class = self.classes.entry(label).or_insert_with(|| ClassStats { mean: vec![0.0; d], count: 0 });
        let c = class.count as f64;
        let delta: Vec<f64> = x.values().iter().zip(&class.mean).map(|(v, m)| v - m).collect();
        class.count += 1;
        for (m, dv) in class.mean.iter_mut().zip(&delta) {
            *m += dv / (c + 1.0);
        }
        if update_cov && c > 0.0 {
            // (x - mu_old)(x - mu_new)^T = c/(c+1) (x - mu_old)(x - mu_old)^T
            let f = c / (c + 1.0);
            for i in 0..d {
                let a = f * delta[i];
                let row = &mut self.scatter[i * d..(i + 1) * d];
                for (s, b) in row.iter_mut().zip(&delta) {
                    *s += a * b;
                }
            }
        }
        if update_cov {
            self.counters.weight_writes += (d * d) as u64;
        }
        self.total += 1;
        self.counters.weight_writes += d as u64;
        self.dirty = true;
        Ok(())
    }

    fn invert(&self) -> Result<DMatrix<f64>> {
        let shrunk = self.shrunk_covariance();
        let chol = shrunk.cholesky().ok_or(Error::SingularCovariance)?;
        let l = chol.l_dirty();
        if (0..self.config.dim).any(|i| l[(i, i)] * l[(i, i)] < SINGULAR_TOLERANCE) {
            return Err(Error::SingularCovariance);
        }
        Ok(chol.inverse())
    }

    fn scorers(&self, precision: &DMatrix<f64>) -> Vec<(Label, Vec<f64>, f64)> {
        let d = self.config.dim;
        self.classes
            .iter()
            .map(|(&label, c)| {
                let mu = DMatrix::from_column_slice(d, 1, &c.mean);
                let w = precision * &mu;
                let w: Vec<f64> = w.iter().copied().collect();
                let bias = -0.5 * dot_unchecked(&w, &c.mean);
                (label, w, bias)
            })
            .collect()
    }

    /// Cached precision matrix, recomputed when stale.
    pub fn precision(&mut self) -> Result<&DMatrix<f64>> {
        self.refresh()?;
        Ok(self.cache.precision.as_ref().expect("refreshed"))
    }

    fn refresh(&mut self) -> Result<()> {
        if self.dirty || self.cache.precision.is_none() {
            let precision = self.invert()?;
            self.cache.scorers = self.scorers(&precision);
            self.cache.precision = Some(precision);
            self.dirty = false;
        }
        Ok(())
    }

    fn argmax(scorers: &[(Label, Vec<f64>, f64)], x: &[f64]) -> Label {
        let mut best: Option<(Label, f64)> = None;
        for (label, w, b) in scorers {
            let s = dot_unchecked(w, x) + b;
            if best.is_none_or(|(_, bs)| s > bs) {
                best = Some((*label, s));
            }
        }
        best.expect("at least one class").0
    }

    /// Linear discriminant prediction. With a single class seen that class
    /// is returned without inverting anything.
    pub fn predict(&mut self, x: &FeatureVector) -> Result<Label> {
        check_dim(self.config.dim, x.dim())?;
        match self.classes.len() {
            0 => Err(Error::EmptyModel),
            1 => Ok(*self.classes.keys().next().expect("one class")),
            k => {
                self.refresh()?;
                self.counters.macs += (k * self.config.dim) as u64;
                Ok(Self::argmax(&self.cache.scorers, x.values()))
            }
        }
    }

    /// Same as [`predict`](Self::predict) but inverts from scratch.
    pub fn predict_uncached(&self, x: &FeatureVector) -> Result<Label> {
        check_dim(self.config.dim, x.dim())?;
        match self.classes.len() {
            0 => Err(Error::EmptyModel),
            1 => Ok(*self.classes.keys().next().expect("one class")),
            _ => Ok(Self::argmax(&self.scorers(&self.invert()?), x.values())),
        }
    }
}
