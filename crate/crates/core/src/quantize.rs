//! Symmetric fixed-point codes for weights and activations.
//!
//! A value `v` maps to `round_half_even(v / scale * M)` with
//! `M = 2^(bits-1) - 1` (63 for the default 7 bits); the code `-(M+1)` is
//! never produced. Activations are exact integer dot products of two code
//! vectors, so a perfect unit-norm match scores about `M^2`.
//!
//! Learning rates are unsigned fractions with `frac_bits` fractional bits.
//! The fixed-point form of the self-normalizing rule is
//!
//! ```text
//! w_j += round_half_even(alpha_fp * r * (x_j * M^2 - w_j * y) / (M^2 * 2^F))
//! ```
//!
//! where `y` is the integer activation. Multiplying `x_j` by `M^2` brings
//! it to the units of `w_j * y`; dividing by `M^2 * 2^F` returns to code
//! units. The result is clamped to `[-M, M]`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rules::Sign;
use crate::vector::check_dim;

/// Bumped whenever the rounding or rescaling rules change.
pub const FORMAT_VERSION: u32 = 1;

/// Largest goodness with its own reciprocal; larger values reuse it.
pub const RECIPROCAL_TABLE_MAX: u32 = 1024;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FixedPointFormat {
    pub bits: u32,
    /// Real value represented by the maximum code.
    pub scale: f64,
    /// Fractional bits of the learning-rate register.
    pub frac_bits: u32,
}

impl Default for FixedPointFormat {
    fn default() -> Self {
        Self { bits: 7, scale: 1.0, frac_bits: 12 }
    }
}

impl FixedPointFormat {
    pub fn validate(&self) -> Result<()> {
        if !(2..=16).contains(&self.bits) {
            return Err(Error::InvalidConfig(format!("weight bits {} outside [2, 16]", self.bits)));
        }
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            return Err(Error::InvalidConfig(format!("scale {} must be positive", self.scale)));
        }
        if !(1..=24).contains(&self.frac_bits) {
            return Err(Error::InvalidConfig(format!("frac bits {} outside [1, 24]", self.frac_bits)));
        }
        Ok(())
    }

    /// Largest code magnitude, `2^(bits-1) - 1`.
    pub fn max_code(&self) -> i32 {
        (1 << (self.bits - 1)) - 1
    }

    /// Integer activation of a full-scale perfect match, `M^2`. Also the
    /// rescaling constant applied to `x_j` in the update.
    pub fn unit_activation(&self) -> i64 {
        let m = self.max_code() as i64;
        m * m
    }

    /// Fixed-point representation of a rate of 1.
    pub fn alpha_one(&self) -> u32 {
        1 << self.frac_bits
    }

    /// Denominator of the update, `M^2 * 2^F`.
    pub fn update_normalizer(&self) -> i128 {
        self.unit_activation() as i128 * self.alpha_one() as i128
    }

    /// Converts a real similarity threshold to activation units.
    pub fn activation_threshold(&self, theta: f64) -> i64 {
        (theta * self.unit_activation() as f64).round_ties_even() as i64
    }
}

/// Result of quantizing a vector; `clamped` counts out-of-range components.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Quantized {
    pub codes: Vec<i32>,
    pub clamped: usize,
}

pub fn quantize_vec(v: &[f64], fmt: &FixedPointFormat) -> Quantized {
    let m = fmt.max_code();
    let mut clamped = 0;
    let codes = v
        .iter()
        .map(|&x| {
            let c = (x / fmt.scale * m as f64).round_ties_even();
            if c > m as f64 || c < -(m as f64) {
                clamped += 1;
            }
            c.clamp(-(m as f64), m as f64) as i32
        })
        .collect();
    if clamped > 0 {
        log::warn!("{clamped} components outside +-{} clamped during quantization", fmt.scale);
    }
    Quantized { codes, clamped }
}

pub fn dequantize(codes: &[i32], fmt: &FixedPointFormat) -> Vec<f64> {
    let step = fmt.scale / fmt.max_code() as f64;
    codes.iter().map(|&c| c as f64 * step).collect()
}

/// Exact integer dot product with a 64-bit accumulator.
pub fn int_dot(w_row: &[i32], x_q: &[i32]) -> Result<i64> {
    check_dim(w_row.len(), x_q.len())?;
    Ok(int_dot_unchecked(w_row, x_q))
}

#[inline]
pub(crate) fn int_dot_unchecked(w_row: &[i32], x_q: &[i32]) -> i64 {
    let mut acc: i64 = 0;
    for (&w, &x) in w_row.iter().zip(x_q) {
        let p = w as i64 * x as i64;
        if cfg!(debug_assertions) {
            acc = acc.checked_add(p).expect("activation accumulator overflow");
        } else {
            acc += p;
        }
    }
    acc
}

/// `num / den` rounded to nearest, ties to even. `den` must be positive.
pub fn div_round_half_even(num: i128, den: i128) -> i128 {
    debug_assert!(den > 0);
    let q = num.div_euclid(den);
    let rem = num.rem_euclid(den);
    match (2 * rem).cmp(&den) {
        std::cmp::Ordering::Less => q,
        std::cmp::Ordering::Greater => q + 1,
        std::cmp::Ordering::Equal => q + (q & 1),
    }
}

/// Fixed-point self-normalizing update of one weight row.
pub fn fixed_update(
    w_row: &[i32],
    x_q: &[i32],
    y: i64,
    alpha_fp: u32,
    r: Sign,
    fmt: &FixedPointFormat,
) -> Result<Vec<i32>> {
    check_dim(w_row.len(), x_q.len())?;
    if r == Sign::Zero {
        return Ok(w_row.to_vec());
    }
    let m = fmt.max_code();
    let s = fmt.unit_activation() as i128;
    let den = fmt.update_normalizer();
    let gain = alpha_fp as i128 * r.value() as i128;
    Ok(w_row
        .iter()
        .zip(x_q)
        .map(|(&w, &x)| {
            let num = gain * (x as i128 * s - w as i128 * y as i128);
            let delta = div_round_half_even(num, den);
            (w as i128 + delta).clamp(-(m as i128), m as i128) as i32
        })
        .collect())
}

/// Integer reciprocals `round_half_even(2^F / g)` for `g` in `[1, 1024]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ReciprocalTable {
    entries: Vec<u32>,
}

impl ReciprocalTable {
    pub fn new(fmt: &FixedPointFormat) -> Self {
        let one = fmt.alpha_one() as i128;
        let entries = (0..=RECIPROCAL_TABLE_MAX)
            .map(|g| if g == 0 { 0 } else { div_round_half_even(one, g as i128) as u32 })
            .collect();
        Self { entries }
    }

    /// Learning rate for goodness `g` (clamped to `[1, 1024]`).
    pub fn alpha(&self, g: u32) -> u32 {
        self.entries[g.clamp(1, RECIPROCAL_TABLE_MAX) as usize]
    }
}
