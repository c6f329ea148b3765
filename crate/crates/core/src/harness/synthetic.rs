use serde::{Deserialize, Serialize};

use super::{Clip, ClipSource, Sample};
use crate::error::{Error, Result};
use crate::rng::SplitMix64;
use crate::vector::{dot, l2_normalize, norm, Label};

/// Shots per class in [`SyntheticSpec::benchmark`].
pub const BENCHMARK_SHOTS: u32 = 4;

/// Protocol seeds of the committed benchmark.
pub const BENCHMARK_SEEDS: [u64; 3] = [0, 1, 2];

/// Clustered clips on the unit sphere.
///
/// Every class owns `modes` directions. Consecutive clips of a class cycle
/// through its modes from a random start. A clip perturbs its mode
/// by roughly `spread` (the norm of an isotropic offset), and its frames
/// wander around the clip centre as an AR(1) walk of size `jitter`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub dim: usize,
    pub classes: usize,
    pub modes: usize,
    pub spread: f64,
    /// Minimum angle between two modes of one class, in degrees.
    pub min_mode_angle: f64,
    /// Mode directions live in a random subspace of this dimension
    /// (`None`: the full space). Smaller values crowd the classes.
    pub intrinsic_dim: Option<usize>,
    pub jitter: f64,
    /// Frame-to-frame correlation of the jitter walk.
    pub jitter_correlation: f64,
    pub frames_per_clip: usize,
    pub clips_per_class: usize,
    /// Fraction of coordinates zeroed in every frame before normalization.
    pub sparsity: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            dim: 64,
            classes: 10,
            modes: 2,
            spread: 0.3,
            min_mode_angle: 0.0,
            intrinsic_dim: None,
            jitter: 0.1,
            jitter_correlation: 0.9,
            frames_per_clip: 60,
            clips_per_class: 1,
            sparsity: 0.0,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    /// The committed desk-scale benchmark: 10 classes of 2 widely separated
    /// modes each, in 64 dimensions, 4 clips per class.
    pub fn benchmark() -> Self {
        Self {
            dim: 64,
            classes: 10,
            modes: 2,
            spread: 0.5,
            min_mode_angle: 150.0,
            intrinsic_dim: Some(32),
            jitter: 0.1,
            jitter_correlation: 0.9,
            frames_per_clip: 60,
            clips_per_class: BENCHMARK_SHOTS as usize,
            sparsity: 0.0,
            seed: 2024,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.dim == 0 || self.classes == 0 || self.modes == 0 {
            return bad("dim, classes and modes must be positive".into());
        }
        if self.frames_per_clip == 0 || self.clips_per_class == 0 {
            return bad("frames_per_clip and clips_per_class must be positive".into());
        }
        if let Some(k) = self.intrinsic_dim {
            if k == 0 || k > self.dim {
                return bad(format!("intrinsic_dim {k} outside [1, {}]", self.dim));
            }
        }
        if !(0.0..1.0).contains(&self.sparsity) {
            return bad(format!("sparsity {} outside [0, 1)", self.sparsity));
        }
        if !(0.0..=180.0).contains(&self.min_mode_angle) {
            return bad(format!("min_mode_angle {} outside [0, 180]", self.min_mode_angle));
        }
        if !(0.0..1.0).contains(&self.jitter_correlation) {
            return bad(format!("jitter_correlation {} outside [0, 1)", self.jitter_correlation));
        }
        if !(self.spread >= 0.0 && self.jitter >= 0.0) {
            return bad("spread and jitter must be non-negative".into());
        }
        Ok(())
    }
}

fn gaussian(rng: &mut SplitMix64, d: usize, scale: f64) -> Vec<f64> {
    (0..d).map(|_| scale * rng.normal()).collect()
}

fn orthonormal_basis(rng: &mut SplitMix64, d: usize, k: usize) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(k);
    while basis.len() < k {
        let mut v = gaussian(rng, d, 1.0);
        for b in &basis {
            let p = dot(&v, b).expect("same dim");
            v.iter_mut().zip(b).for_each(|(x, bj)| *x -= p * bj);
        }
        if norm(&v) > 1e-6 {
            basis.push(l2_normalize(&v).expect("checked").into_values());
        }
    }
    basis
}

fn random_direction(rng: &mut SplitMix64, d: usize, basis: Option<&[Vec<f64>]>) -> Vec<f64> {
    let v = match basis {
        None => gaussian(rng, d, 1.0),
        Some(b) => {
            let z = gaussian(rng, b.len(), 1.0);
            let mut v = vec![0.0; d];
            for (zi, bi) in z.iter().zip(b) {
                v.iter_mut().zip(bi).for_each(|(x, bj)| *x += zi * bj);
            }
            v
        }
    };
    l2_normalize(&v).map(|f| f.into_values()).unwrap_or_else(|_| {
        let mut e = vec![0.0; d];
        e[0] = 1.0;
        e
    })
}

fn mode_directions(spec: &SyntheticSpec, rng: &mut SplitMix64) -> Result<Vec<Vec<Vec<f64>>>> {
    let basis = spec.intrinsic_dim.filter(|&k| k < spec.dim).map(|k| orthonormal_basis(rng, spec.dim, k));
    let max_cos = spec.min_mode_angle.to_radians().cos();
    let mut classes = Vec::with_capacity(spec.classes);
    for c in 0..spec.classes {
        let mut modes: Vec<Vec<f64>> = Vec::with_capacity(spec.modes);
        let mut tries = 0;
        while modes.len() < spec.modes {
            let mut m = random_direction(rng, spec.dim, basis.as_deref());
            if spec.min_mode_angle > 0.0 && !modes.is_empty() {
                // Rotate an existing mode by at least the minimum angle.
                let base = &modes[rng.below(modes.len() as u64) as usize];
                let p = dot(&m, base).expect("same dim");
                m.iter_mut().zip(base).for_each(|(v, b)| *v -= p * b);
                if let Ok(u) = l2_normalize(&m) {
                    let lo = spec.min_mode_angle.to_radians();
                    let phi = lo + (std::f64::consts::PI - lo) * rng.next_f64();
                    m = base.iter().zip(u.values()).map(|(b, u)| phi.cos() * b + phi.sin() * u).collect();
                }
            }
            if modes.iter().all(|o| dot(o, &m).expect("same dim") <= max_cos + 1e-12) {
                modes.push(m);
            } else {
                tries += 1;
                if tries > 100_000 {
                    return Err(Error::InvalidConfig(format!(
                        "cannot place {} modes {}deg apart for class {c}",
                        spec.modes, spec.min_mode_angle
                    )));
                }
            }
        }
        classes.push(modes);
    }
    Ok(classes)
}

/// Generates `classes * clips_per_class` clips, class-major.
pub fn gen_synthetic(spec: &SyntheticSpec) -> Result<ClipSource> {
    spec.validate()?;
    let d = spec.dim;
    let mut rng = SplitMix64::new(spec.seed);
    let mut geometry = rng.fork(1);
    let mut frames_rng = rng.fork(2);
    let modes = mode_directions(spec, &mut geometry)?;
    let noise_scale = 1.0 / (d as f64).sqrt();
    let innovation = (1.0 - spec.jitter_correlation.powi(2)).sqrt();
    let zeroed = (spec.sparsity * d as f64).round() as usize;

    let mut clips = Vec::with_capacity(spec.classes * spec.clips_per_class);
    let mut next_id = 0u64;
    for (c, class_modes) in modes.iter().enumerate() {
        let first = frames_rng.below(spec.modes as u64) as usize;
        for k in 0..spec.clips_per_class {
            let mode = &class_modes[(first + k) % spec.modes];
            let offset = gaussian(&mut frames_rng, d, spec.spread * noise_scale);
            let centre: Vec<f64> = mode.iter().zip(&offset).map(|(m, o)| m + o).collect();
            let centre = l2_normalize(&centre).map(|f| f.into_values()).unwrap_or_else(|_| mode.clone());
            let mut walk = gaussian(&mut frames_rng, d, spec.jitter * noise_scale);
            let mut samples = Vec::with_capacity(spec.frames_per_clip);
            for _ in 0..spec.frames_per_clip {
                let step = gaussian(&mut frames_rng, d, spec.jitter * noise_scale * innovation);
                walk.iter_mut().zip(&step).for_each(|(w, s)| *w = spec.jitter_correlation * *w + s);
                let mut raw: Vec<f64> = centre.iter().zip(&walk).map(|(a, b)| a + b).collect();
                if zeroed > 0 {
                    for &j in &frames_rng.permutation(d)[..zeroed] {
                        raw[j] = 0.0;
                    }
                }
                let gain = 0.5 + 1.5 * frames_rng.next_f64();
                raw.iter_mut().for_each(|v| *v *= gain);
                let label = Some(c as Label);
                let features = l2_normalize(&raw)?.with_label(label);
                samples.push(Sample { id: next_id, label, raw, features });
                next_id += 1;
            }
            clips.push(Clip { label: c as Label, samples });
        }
    }
    ClipSource::new(d, clips)
}
