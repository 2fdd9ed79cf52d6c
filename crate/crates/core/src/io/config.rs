use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::adjoint::GradCheckConfig;
use crate::error::{Error, Result};
use crate::evaluation::EvalConfig;
use crate::simulators::{SimConfig, Split};
use crate::training::{ModelConfig, TrainConfig};

/// Shipped configurations, addressable as `preset:<name>`.
pub const PRESETS: [(&str, &str); 3] = [
    ("desk_sw32", include_str!("../../presets/desk_sw32.toml")),
    ("sw80", include_str!("../../presets/sw80.toml")),
    ("euler64", include_str!("../../presets/euler64.toml")),
];

/// Everything a command can read from one TOML file. Sections other than
/// `sim` and `split` may be omitted and take their defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub sim: SimConfig,
    pub split: Split,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub eval: EvalConfig,
    #[serde(default)]
    pub gradcheck: GradCheckConfig,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn preset(name: &str) -> Result<Self> {
        let text = PRESETS
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, t)| *t)
            .ok_or_else(|| Error::Config(format!("unknown preset {name:?}")))?;
        Self::parse(text)
    }

    /// A file path, or `preset:<name>`.
    pub fn load(spec: &str) -> Result<Self> {
        if let Some(name) = spec.strip_prefix("preset:") {
            return Self::preset(name);
        }
        let text = std::fs::read_to_string(Path::new(spec))
            .map_err(|e| Error::Config(format!("cannot read {spec}: {e}")))?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.sim.validate()?;
        self.train.validate()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_parse_and_validate() {
        for (name, _) in PRESETS {
            let c = RunConfig::preset(name).unwrap();
            c.validate().unwrap();
        }
        let desk = RunConfig::preset("desk_sw32").unwrap();
        assert_eq!(desk.train, TrainConfig::default());
        assert_eq!(desk.model, ModelConfig::default());
        assert_eq!(desk.eval, EvalConfig::default());
        assert_eq!(desk.sim.frame_dt(), 3600.0);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let mut text = PRESETS[0].1.to_owned();
        text.push_str("\n[train.extra]\nfoo = 1\n");
        assert!(RunConfig::parse(&text).is_err());
        let text = PRESETS[1].1.replace("nx = 80", "nx = 80\nnz = 3");
        assert!(matches!(RunConfig::parse(&text), Err(Error::Config(_))));
    }

    #[test]
    fn toml_round_trip() {
        let c = RunConfig::preset("euler64").unwrap();
        assert_eq!(RunConfig::parse(&c.to_toml().unwrap()).unwrap(), c);
    }
}
