//! Prototype weight-update rules.
//!
//! Two rules move a winning prototype `w` toward (or away from) an input
//! `x` with rate `alpha` and third-factor sign `r`:
//!
//! * [`update_explicit`]: `w + alpha*r*x`, then divided by its norm.
//! * [`update_selfnorm`]: `w + alpha*r*(x - w*y)` with `y = w.x`. The decay
//!   term keeps `w` near the unit sphere without any global normalization;
//!   for unit `w` and `x` the squared norm grows by exactly
//!   `alpha^2 * (1 - y^2)` per update (see [`norm_drift`]).
//!
//! Neither rule normalizes as a side effect of the other.

use std::sync::atomic::{AtomicBool, Ordering};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vector::{check_dim, dot_unchecked, norm, ZERO_NORM};

/// Rates above this break the small-rate assumption behind the self-normalizing rule.
pub const SMALL_RATE_LIMIT: f64 = 0.3;

static LARGE_RATE_WARNED: AtomicBool = AtomicBool::new(false);

/// Sign of the third-factor (modulatory) signal.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Sign {
    Minus,
    Zero,
    Plus,
}

impl Sign {
    pub fn value(self) -> i32 {
        match self {
            Sign::Minus => -1,
            Sign::Zero => 0,
            Sign::Plus => 1,
        }
    }

    pub fn from_value(r: i32) -> Result<Self> {
        match r {
            -1 => Ok(Sign::Minus),
            0 => Ok(Sign::Zero),
            1 => Ok(Sign::Plus),
            other => Err(Error::InvalidModulation(other)),
        }
    }
}

/// Everything one update of one prototype needs.
#[derive(Clone, Copy, Debug)]
pub struct UpdateInputs<'a> {
    w: &'a [f64],
    x: &'a [f64],
    alpha: f64,
    r: Sign,
    y: f64,
}

impl<'a> UpdateInputs<'a> {
    /// Builds the inputs, computing the post-synaptic activation `y = w.x`.
    pub fn new(w: &'a [f64], x: &'a [f64], alpha: f64, r: Sign) -> Result<Self> {
        check_dim(w.len(), x.len())?;
        let y = dot_unchecked(w, x);
        Self::with_activation(w, x, alpha, r, y)
    }

    /// Builds the inputs from a caller-held activation (a stored trace).
    pub fn with_activation(w: &'a [f64], x: &'a [f64], alpha: f64, r: Sign, y: f64) -> Result<Self> {
        check_dim(w.len(), x.len())?;
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::InvalidRate(alpha));
        }
        debug_assert!(
            (dot_unchecked(w, x) - y).abs() <= 1e-9,
            "stale activation: y = {y}, w.x = {}",
            dot_unchecked(w, x)
        );
        if alpha > SMALL_RATE_LIMIT
            && r != Sign::Zero
            && w.iter().any(|&v| v != 0.0)
            && !LARGE_RATE_WARNED.swap(true, Ordering::Relaxed)
        {
            log::warn!("learning rate {alpha} exceeds {SMALL_RATE_LIMIT}; weight norms may drift");
        }
        Ok(Self { w, x, alpha, r, y })
    }

    pub fn activation(&self) -> f64 {
        self.y
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn sign(&self) -> Sign {
        self.r
    }
}

/// `w + alpha*r*(x - w*y)`, with no normalization.
pub fn update_selfnorm(u: &UpdateInputs<'_>) -> Vec<f64> {
    if u.r == Sign::Zero {
        return u.w.to_vec();
    }
    let step = u.alpha * u.r.value() as f64;
    u.w.iter()
        .zip(u.x)
        .map(|(&w, &x)| w + step * (x - w * u.y))
        .collect()
}

/// `(w + alpha*r*x) / ||w + alpha*r*x||`.
pub fn update_explicit(u: &UpdateInputs<'_>) -> Result<Vec<f64>> {
    if u.r == Sign::Zero {
        return Ok(u.w.to_vec());
    }
    let step = u.alpha * u.r.value() as f64;
    let moved: Vec<f64> = u.w.iter().zip(u.x).map(|(&w, &x)| w + step * x).collect();
    let n = norm(&moved);
    if n < ZERO_NORM {
        return Err(Error::DegenerateUpdate);
    }
    Ok(moved.into_iter().map(|v| v / n).collect())
}

/// `||update_selfnorm(u)||^2 - 1`.
///
/// For unit `w` and `x` this equals `alpha^2 * r^2 * (1 - y^2)`.
pub fn norm_drift(u: &UpdateInputs<'_>) -> f64 {
    let next = update_selfnorm(u);
    dot_unchecked(&next, &next) - 1.0
}

/// Closed form of [`norm_drift`] for unit inputs.
pub fn predicted_drift(alpha: f64, r: Sign, y: f64) -> f64 {
    let r = r.value() as f64;
    alpha * alpha * r * r * (1.0 - y * y)
}
