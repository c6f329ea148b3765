//! Experiment configuration: one TOML file, overridable with `--set key=value`.
//!
//! ```toml
//! output_dir = "runs/clp"
//!
//! [learner]
//! kind = "clp"
//! [learner.params]
//! theta = 0.5
//!
//! [data]
//! source = "synthetic"        # or "feature_file" with `path`
//! [data.synthetic]
//! seed = 2024
//!
//! [protocol]
//! mode = "multi_shot"         # or "one_shot"
//! shots = 4
//! seeds = [0, 1, 2]
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use clp_core::harness::{LearnerKind, LearnerParams, ProtocolMode, SyntheticSpec, BENCHMARK_SEEDS, BENCHMARK_SHOTS};

use crate::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub output_dir: PathBuf,
    pub learner: LearnerSection,
    #[serde(default)]
    pub data: DataSection,
    #[serde(default)]
    pub protocol: ProtocolSection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LearnerSection {
    pub kind: LearnerKind,
    #[serde(default)]
    pub params: LearnerParams,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceKind {
    Synthetic,
    FeatureFile,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    pub source: SourceKind,
    /// Feature file to read when `source = "feature_file"`.
    pub path: Option<PathBuf>,
    pub frames_per_clip: usize,
    pub synthetic: SyntheticSpec,
}

impl Default for DataSection {
    fn default() -> Self {
        let synthetic = SyntheticSpec::benchmark();
        Self { source: SourceKind::Synthetic, path: None, frames_per_clip: synthetic.frames_per_clip, synthetic }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeName {
    OneShot,
    MultiShot,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProtocolSection {
    pub mode: ModeName,
    pub shots: u32,
    pub seeds: Vec<u64>,
}

impl Default for ProtocolSection {
    fn default() -> Self {
        Self { mode: ModeName::MultiShot, shots: BENCHMARK_SHOTS, seeds: BENCHMARK_SEEDS.to_vec() }
    }
}

impl ProtocolSection {
    pub fn mode(&self) -> ProtocolMode {
        match self.mode {
            ModeName::OneShot => ProtocolMode::OneShot,
            ModeName::MultiShot => ProtocolMode::MultiShot(self.shots),
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text, overrides)
    }

    pub fn parse(text: &str, overrides: &[String]) -> Result<Self, CliError> {
        let mut table: toml::Table = text.parse().map_err(|e| CliError::Usage(format!("config: {e}")))?;
        // A run directory's echo holds the config under `[config]`.
        if table.contains_key("metadata") {
            if let Some(toml::Value::Table(inner)) = table.remove("config") {
                table = inner;
            }
        }
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let cfg: Self = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| CliError::Usage(format!("config: {}", e.message())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), CliError> {
        if self.protocol.seeds.is_empty() {
            return Err(CliError::Usage("protocol.seeds is empty".into()));
        }
        if self.protocol.mode == ModeName::MultiShot && self.protocol.shots == 0 {
            return Err(CliError::Usage("protocol.shots must be at least 1".into()));
        }
        if self.data.source == SourceKind::FeatureFile && self.data.path.is_none() {
            return Err(CliError::Usage("data.path is required for a feature file".into()));
        }
        Ok(())
    }
}

/// Sets a dotted key, e.g. `learner.params.theta=0.6`. The value is read as
/// a TOML value and falls back to a bare string.
fn apply_override(table: &mut toml::Table, spec: &str) -> Result<(), CliError> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| CliError::Usage(format!("override `{spec}` is not key=value")))?;
    let value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let parts: Vec<&str> = key.trim().split('.').collect();
    let (last, parents) = parts.split_last().unwrap();
    let mut cur = table;
    for p in parents {
        let entry = cur.entry(p.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| CliError::Usage(format!("override `{key}`: `{p}` is not a table")))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "output_dir = \"out\"\n[learner]\nkind = \"ncm\"\n";

    #[test]
    fn defaults_to_benchmark() {
        let c = ExperimentConfig::parse(MINIMAL, &[]).unwrap();
        assert_eq!(c.learner.kind, LearnerKind::Ncm);
        assert_eq!(c.protocol.mode(), ProtocolMode::MultiShot(4));
        assert_eq!(c.protocol.seeds, vec![0, 1, 2]);
        assert_eq!(c.data.synthetic, SyntheticSpec::benchmark());
    }

    #[test]
    fn overrides_win() {
        let sets = [
            "learner.kind=clp".to_string(),
            "learner.params.theta=0.6".to_string(),
            "protocol.seeds=[5]".to_string(),
            "output_dir=elsewhere".to_string(),
            "data.synthetic.classes=4".to_string(),
        ];
        let c = ExperimentConfig::parse(MINIMAL, &sets).unwrap();
        assert_eq!(c.learner.kind, LearnerKind::Clp);
        assert_eq!(c.learner.params.theta, 0.6);
        assert_eq!(c.protocol.seeds, vec![5]);
        assert_eq!(c.output_dir, PathBuf::from("elsewhere"));
        assert_eq!(c.data.synthetic.classes, 4);
    }

    #[test]
    fn echo_round_trips() {
        let c = ExperimentConfig::parse(MINIMAL, &["learner.params.shrinkage=0.01".into()]).unwrap();
        assert_eq!(ExperimentConfig::parse(&toml::to_string(&c).unwrap(), &[]).unwrap(), c);
    }

    #[test]
    fn rejects_bad_input() {
        for (text, sets) in [
            ("output_dir = \"o\"\n[learner]\nkind = \"lstm\"\n", vec![]),
            (MINIMAL, vec!["learner.params.thetaa=1".to_string()]),
            (MINIMAL, vec!["protocol.seeds=[]".to_string()]),
            (MINIMAL, vec!["data.source=feature_file".to_string()]),
            (MINIMAL, vec!["nokey".to_string()]),
        ] {
            assert!(matches!(ExperimentConfig::parse(text, &sets), Err(CliError::Usage(_))), "{text} {sets:?}");
        }
    }
}
