//! Feature vectors and the small amount of dense vector math shared by
//! every learner.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Norms below this are treated as zero.
pub const ZERO_NORM: f64 = 1e-12;

/// Class identifier.
pub type Label = u32;

/// One stream element: a feature vector with an optional class label.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    values: Vec<f64>,
    label: Option<Label>,
    normalized: bool,
}

impl FeatureVector {
    /// Wraps raw values without normalizing them.
    pub fn raw(values: Vec<f64>) -> Self {
        Self { values, label: None, normalized: false }
    }

    pub fn with_label(mut self, label: Option<Label>) -> Self {
        self.label = label;
        self
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn label(&self) -> Option<Label> {
        self.label
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
}

/// Scales `v` to unit Euclidean length.
pub fn l2_normalize(v: &[f64]) -> Result<FeatureVector> {
    let n = norm(v);
    if n < ZERO_NORM {
        return Err(Error::ZeroVector);
    }
    let values = v.iter().map(|x| x / n).collect();
    Ok(FeatureVector { values, label: None, normalized: true })
}

/// Inner product of two equal-length slices.
pub fn dot(a: &[f64], b: &[f64]) -> Result<f64> {
    check_dim(a.len(), b.len())?;
    Ok(dot_unchecked(a, b))
}

#[inline]
pub(crate) fn dot_unchecked(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(v: &[f64]) -> f64 {
    dot_unchecked(v, v).sqrt()
}

pub(crate) fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::DimensionMismatch { expected, found });
    }
    Ok(())
}

/// Squared Euclidean distance.
pub(crate) fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn normalize_pythagorean_triple() {
        let v = l2_normalize(&[3.0, 4.0]).unwrap();
        assert!((v.values()[0] - 0.6).abs() < 1e-15);
        assert!((v.values()[1] - 0.8).abs() < 1e-15);
        assert!(v.is_normalized());
    }

    #[test]
    fn normalize_unit_is_identity() {
        let v = l2_normalize(&[1.0, 0.0, 0.0]).unwrap();
        assert_eq!(v.values(), &[1.0, 0.0, 0.0]);
    }

    #[test]
    fn normalize_zero_fails() {
        assert!(matches!(l2_normalize(&[0.0, 0.0]), Err(Error::ZeroVector)));
        assert!(matches!(l2_normalize(&[1e-13, 0.0]), Err(Error::ZeroVector)));
    }

    #[test]
    fn dot_examples() {
        assert_eq!(dot(&[1.0, 0.0], &[1.0, 0.0]).unwrap(), 1.0);
        assert_eq!(dot(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert!((dot(&[0.6, 0.8], &[0.8, 0.6]).unwrap() - 0.96).abs() < 1e-15);
        assert!(matches!(
            dot(&[1.0], &[1.0, 2.0]),
            Err(Error::DimensionMismatch { expected: 1, found: 2 })
        ));
    }

    fn nonzero_vec() -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(-10.0f64..10.0, 1..32)
            .prop_filter("nonzero", |v| norm(v) > 1e-3)
    }

    proptest! {
        #[test]
        fn unit_cosine_is_bounded(a in nonzero_vec(), seed in any::<u64>()) {
            let mut rng = crate::rng::SplitMix64::new(seed);
            let b: Vec<f64> = (0..a.len()).map(|_| rng.normal()).collect();
            prop_assume!(norm(&b) > 1e-3);
            let (a, b) = (l2_normalize(&a).unwrap(), l2_normalize(&b).unwrap());
            prop_assert!(dot(a.values(), b.values()).unwrap().abs() <= 1.0 + 1e-9);
        }

        #[test]
        fn normalize_is_idempotent(a in nonzero_vec()) {
            let once = l2_normalize(&a).unwrap();
            let twice = l2_normalize(once.values()).unwrap();
            for (p, q) in once.values().iter().zip(twice.values()) {
                prop_assert!((p - q).abs() <= 1e-12);
            }
            prop_assert!((norm(once.values()) - 1.0).abs() <= 1e-6);
        }
    }
}
