//! Continually learning prototypes for streaming class-incremental
//! classification.
//!
//! * [`model`]: the reference floating-point learner.
//! * [`snn`]: an event-driven spiking simulation of the same learner with
//!   latency-coded winner-take-all, a novelty timer and INT7 synapses.
//! * [`baselines`]: NCM, streaming LDA, perceptron, fine-tuning and replay.
//! * [`harness`]: synthetic data, feature files, stream protocols and metrics.

pub mod baselines;
pub mod checkpoint;
pub mod error;
pub mod harness;
pub mod model;
pub mod quantize;
pub mod rng;
pub mod rules;
pub mod selftest;
pub mod snn;
pub mod vector;

pub use error::{Error, Result};
pub use vector::{dot, l2_normalize, FeatureVector, Label};
