//! Versioned JSON configuration shared by the command-line stages.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{MlsConfig, SyntheticConfig};
use crate::error::{Error, Result};
use crate::fung::{DeConfig, FemConfig, FungBounds};
use crate::train::TrainConfig;

pub const CONFIG_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ResampleConfig {
    pub nx: usize,
    pub ny: usize,
}

impl Default for ResampleConfig {
    fn default() -> Self {
        Self { nx: 21, ny: 21 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FungConfig {
    pub bounds: FungBounds,
    pub de: DeConfig,
    pub fem: FemConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StudyConfig {
    /// Penalty weight of the physics-guided model.
    pub pg_gamma: f64,
    /// Evaluate the Fung baseline on every cycle instead of the first one.
    pub fung_all_cycles: bool,
    /// Number of test samples whose fields are dumped.
    pub dump_count: usize,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            pg_gamma: 1.0,
            fung_all_cycles: false,
            dump_count: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub format_version: u32,
    pub synthetic: SyntheticConfig,
    pub mls: MlsConfig,
    pub resample: ResampleConfig,
    pub train: TrainConfig,
    pub fung: FungConfig,
    pub study: StudyConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            format_version: CONFIG_FORMAT_VERSION,
            synthetic: SyntheticConfig::default(),
            mls: MlsConfig::default(),
            resample: ResampleConfig::default(),
            train: TrainConfig::default(),
            fung: FungConfig::default(),
            study: StudyConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(format!("invalid config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Replaces every seed with `seed`.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.synthetic.seed = seed;
        self.train.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.format_version != CONFIG_FORMAT_VERSION {
            return Err(Error::Config(format!(
                "config format_version {} is not supported; expected {CONFIG_FORMAT_VERSION}",
                self.format_version
            )));
        }
        let section = |name: &str, r: Result<()>| {
            r.map_err(|e| match e {
                Error::Config(msg) => Error::Config(format!("[{name}] {msg}")),
                other => other,
            })
        };
        section("synthetic", self.synthetic.validate())?;
        section("mls", self.mls.validate())?;
        section("train", self.train.validate())?;
        section("fung.bounds", self.fung.bounds.validate())?;
        section("fung.de", self.fung.de.validate())?;
        section("fung.fem", self.fung.fem.validate())?;
        if self.resample.nx < 2 || self.resample.ny < 2 {
            return Err(Error::Config("[resample] nx and ny must be at least 2".into()));
        }
        if !(self.study.pg_gamma >= 0.0 && self.study.pg_gamma.is_finite()) {
            return Err(Error::Config("[study] pg_gamma must be >= 0".into()));
        }
        Ok(())
    }
}
