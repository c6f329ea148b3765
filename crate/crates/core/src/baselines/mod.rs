//! Streaming baselines: nearest class mean, streaming LDA and linear heads.

mod linear;
mod ncm;
mod slda;

pub use linear::{Gradient, LinearConfig, LinearHead, LinearRule, ReplayBuffer};
pub use ncm::NcmModel;
pub use slda::{SldaConfig, SldaModel};

/// Operation counts shared by the baselines.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct BaselineCounters {
    pub weight_writes: u64,
    pub macs: u64,
}
