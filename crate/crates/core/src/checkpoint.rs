//! Versioned JSON checkpoints.
//!
//! ```json
//! {"format": "clp-checkpoint", "version": 1, "method": "clp", "payload": { ... }}
//! ```
//!
//! `method` is one of `clp`, `ncm`, `slda`, `linear`; the payload is the
//! model's serde form. The CLP payload holds the config (dimension,
//! capacity, theta, rule mode) and, per prototype, its weights, label,
//! goodness, rate and allocation flag. Counters are not saved.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::baselines::{LinearHead, NcmModel, SldaModel};
use crate::error::{Error, Result};
use crate::model::ClpModel;

pub const CHECKPOINT_FORMAT: &str = "clp-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub enum Checkpoint {
    Clp(ClpModel),
    Ncm(NcmModel),
    Slda(SldaModel),
    Linear(LinearHead),
}

impl Checkpoint {
    pub fn method(&self) -> &'static str {
        match self {
            Checkpoint::Clp(_) => "clp",
            Checkpoint::Ncm(_) => "ncm",
            Checkpoint::Slda(_) => "slda",
            Checkpoint::Linear(_) => "linear",
        }
    }
}

#[derive(Serialize, Deserialize)]
struct Envelope {
    format: String,
    version: u32,
    method: String,
    payload: serde_json::Value,
}

pub fn save_checkpoint(w: impl Write, ckpt: &Checkpoint) -> Result<()> {
    let payload = match ckpt {
        Checkpoint::Clp(m) => serde_json::to_value(m)?,
        Checkpoint::Ncm(m) => serde_json::to_value(m)?,
        Checkpoint::Slda(m) => serde_json::to_value(m)?,
        Checkpoint::Linear(m) => serde_json::to_value(m)?,
    };
    let env = Envelope {
        format: CHECKPOINT_FORMAT.into(),
        version: CHECKPOINT_VERSION,
        method: ckpt.method().into(),
        payload,
    };
    serde_json::to_writer(w, &env)?;
    Ok(())
}

pub fn load_checkpoint(r: impl Read) -> Result<Checkpoint> {
    let env: Envelope = serde_json::from_reader(r)?;
    if env.format != CHECKPOINT_FORMAT {
        return Err(Error::Format(format!("not a checkpoint: format `{}`", env.format)));
    }
    if env.version != CHECKPOINT_VERSION {
        return Err(Error::Format(format!("unsupported checkpoint version {}", env.version)));
    }
    let p = env.payload;
    Ok(match env.method.as_str() {
        "clp" => Checkpoint::Clp(serde_json::from_value::<ClpModel>(p)?.restore()?),
        "ncm" => Checkpoint::Ncm(serde_json::from_value(p)?),
        "slda" => Checkpoint::Slda(serde_json::from_value(p)?),
        "linear" => Checkpoint::Linear(serde_json::from_value(p)?),
        m => return Err(Error::Format(format!("unknown checkpoint method `{m}`"))),
    })
}
