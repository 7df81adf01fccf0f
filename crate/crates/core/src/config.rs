//! Run configuration file.
//!
//! A TOML document with the sections `[model]`, `[train]`, `[stft]`,
//! `[augment]` (with `[augment.noise]`, `[augment.mix]` and an
//! `[[augment.transforms]]` array) and `[data]`. Every key is optional and
//! falls back to its default. Command-line `--set section.key=value`
//! overrides are applied on top of the file, in order, before validation:
//!
//! ```text
//! defaults  <  base (e.g. a model preset)  <  config file  <  --set overrides
//! ```
//!
//! Tables merge key by key; arrays and scalars replace.
//!
//! Override values are parsed as TOML (`3`, `1e-4`, `true`, `[4, 4, 2]`,
//! `"pink"`); a value that does not parse is taken as a bare string.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::EatConfig;
use crate::pipeline::PipelineConfig;
use crate::signal::StftConfig;
use crate::train::TrainConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub manifest: Option<PathBuf>,
    pub audio_root: Option<PathBuf>,
    pub duration_s: f64,
    pub sample_rate: u32,
    /// Held-out folds to evaluate; all folds when empty.
    pub eval_folds: Vec<u32>,
    pub repeats: usize,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self { manifest: None, audio_root: None, duration_s: 5.0, sample_rate: 22050, eval_folds: Vec::new(), repeats: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: EatConfig,
    pub train: TrainConfig,
    pub stft: StftConfig,
    pub augment: PipelineConfig,
    pub data: DataConfig,
}

fn cfg_err(e: impl std::fmt::Display) -> Error {
    Error::Config(e.to_string())
}

fn parse_value(raw: &str) -> toml::Value {
    #[derive(Deserialize)]
    struct Wrap {
        v: toml::Value,
    }
    toml::from_str::<Wrap>(&format!("v = {raw}")).map(|w| w.v).unwrap_or_else(|_| toml::Value::String(raw.to_string()))
}

/// Applies `key.path=value` to a TOML table, creating sections as needed.
pub fn apply_override(doc: &mut toml::Table, spec: &str) -> Result<()> {
    let (key, value) = spec.split_once('=').ok_or_else(|| cfg_err(format!("override `{spec}` is not key=value")))?;
    let parts: Vec<&str> = key.trim().split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(cfg_err(format!("bad key `{key}`")));
    }
    let (last, sections) = parts.split_last().expect("non-empty");
    let mut table = doc;
    for s in sections {
        let entry = table.entry(s.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry.as_table_mut().ok_or_else(|| cfg_err(format!("`{s}` in `{key}` is not a section")))?;
    }
    table.insert(last.to_string(), parse_value(value.trim()));
    Ok(())
}

fn merge(dst: &mut toml::Table, src: toml::Table) {
    for (k, v) in src {
        match (dst.get_mut(&k), v) {
            (Some(toml::Value::Table(d)), toml::Value::Table(s)) => merge(d, s),
            (_, v) => {
                dst.insert(k, v);
            }
        }
    }
}

impl RunConfig {
    /// Parses TOML text, applies overrides, validates.
    pub fn from_toml_with(text: &str, overrides: &[String]) -> Result<Self> {
        Self::layered(&RunConfig::default(), text, overrides)
    }

    /// Like [`RunConfig::from_toml_with`] with `base` in place of the defaults.
    pub fn layered(base: &RunConfig, text: &str, overrides: &[String]) -> Result<Self> {
        let mut doc = toml::Table::try_from(base).map_err(cfg_err)?;
        merge(&mut doc, toml::from_str(text).map_err(cfg_err)?);
        for o in overrides {
            apply_override(&mut doc, o)?;
        }
        let cfg: RunConfig = doc.try_into().map_err(cfg_err)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Loads `path` (nothing when `None`) over `base` and applies overrides.
    pub fn load(base: &RunConfig, path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p)?,
            None => String::new(),
        };
        Self::layered(base, &text, overrides)
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.train.validate()?;
        self.augment.validate()?;
        crate::data::clip_len(self.data.duration_s, self.data.sample_rate)?;
        Ok(())
    }

    /// The resolved configuration as TOML.
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(cfg_err)
    }
}
