//! Plain-text configuration files.
//!
//! A config file is TOML with flat (dotted) keys:
//!
//! ```toml
//! side = 50
//! b = 1.9
//! l = 0.6
//! big_delta = 0.72
//! small_delta = 0.8
//! steps = 20000
//! tail_window = 1000
//! seeding.mode = "biased"
//! seeding.abstainer_fraction = 0.05
//! rng_seed = 7
//! replicates = 5
//! snapshot_steps = [0, 45, 1113]
//! ```
//!
//! Every key is optional; missing keys keep the value of the base config
//! (normally the active profile).

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::model::{Placement, SeedingSpec, SimConfig};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("failed to read config {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid seeding: {0}")]
    Seeding(String),
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub side: Option<usize>,
    pub b: Option<f64>,
    pub l: Option<f64>,
    pub big_delta: Option<f64>,
    pub small_delta: Option<f64>,
    pub steps: Option<usize>,
    pub tail_window: Option<usize>,
    pub seeding: Option<SeedingFile>,
    pub rng_seed: Option<u64>,
    pub replicates: Option<usize>,
    pub snapshot_steps: Option<Vec<usize>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeedingFile {
    pub mode: Option<String>,
    pub abstainer_fraction: Option<f64>,
    pub placement: Option<String>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text)
    }

    /// Overlays the values present in this file onto `base`.
    pub fn apply(&self, base: &mut SimConfig) -> Result<(), ConfigError> {
        if let Some(v) = self.side {
            base.side = v;
        }
        if let Some(v) = self.b {
            base.game.b = v;
        }
        if let Some(v) = self.l {
            base.game.l = v;
        }
        if let Some(v) = self.big_delta {
            base.coev.big_delta = v;
        }
        if let Some(v) = self.small_delta {
            base.coev.small_delta = v;
        }
        if let Some(v) = self.steps {
            base.steps = v;
        }
        if let Some(v) = self.tail_window {
            base.tail_window = v;
        }
        if let Some(v) = self.rng_seed {
            base.rng_seed = v;
        }
        if let Some(v) = self.replicates {
            base.replicates = v;
        }
        if let Some(v) = &self.snapshot_steps {
            base.snapshot_steps = v.clone();
        }
        if let Some(s) = &self.seeding {
            base.seeding = resolve_seeding(
                s.mode.as_deref(),
                s.abstainer_fraction,
                s.placement.as_deref(),
                base.seeding,
            )
            .map_err(ConfigError::Seeding)?;
        }
        Ok(())
    }
}

/// Combines a (possibly partial) seeding description with the current one.
///
/// Giving only a fraction or a placement adjusts the current mode when it
/// takes that parameter.
pub fn resolve_seeding(
    mode: Option<&str>,
    abstainer_fraction: Option<f64>,
    placement: Option<&str>,
    current: SeedingSpec,
) -> Result<SeedingSpec, String> {
    let placement = placement.map(str::parse::<Placement>).transpose()?;
    let mode = match mode {
        Some(m) => m,
        None => current.mode_name(),
    };
    match mode {
        "unbiased" => Ok(SeedingSpec::Unbiased),
        "biased" => {
            let fraction = match (abstainer_fraction, current) {
                (Some(f), _) => f,
                (None, SeedingSpec::BiasedFraction { abstainer_fraction }) => abstainer_fraction,
                (None, _) => {
                    return Err("mode `biased` requires seeding.abstainer_fraction".into());
                }
            };
            Ok(SeedingSpec::BiasedFraction {
                abstainer_fraction: fraction,
            })
        }
        "single-abstainer" => {
            let placement = match (placement, current) {
                (Some(p), _) => p,
                (None, SeedingSpec::SingleAbstainer { placement }) => placement,
                (None, _) => Placement::CenterCell,
            };
            Ok(SeedingSpec::SingleAbstainer { placement })
        }
        "all-abstainers-except-pair" => Ok(SeedingSpec::AllAbstainersExceptPair),
        other => Err(format!(
            "unknown mode `{other}` (expected unbiased|biased|single-abstainer|all-abstainers-except-pair)"
        )),
    }
}

/// Parses a complete config, starting from `base` for missing keys.
pub fn parse_config(text: &str, base: SimConfig) -> Result<SimConfig, ConfigError> {
    let mut cfg = base;
    ConfigFile::parse(text)?.apply(&mut cfg)?;
    Ok(cfg)
}

/// Renders every field as flat dotted keys. Floats use the shortest
/// representation that parses back to the same bits.
pub fn to_config_string(cfg: &SimConfig) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "side = {}", cfg.side);
    let _ = writeln!(out, "b = {:?}", cfg.game.b);
    let _ = writeln!(out, "l = {:?}", cfg.game.l);
    let _ = writeln!(out, "big_delta = {:?}", cfg.coev.big_delta);
    let _ = writeln!(out, "small_delta = {:?}", cfg.coev.small_delta);
    let _ = writeln!(out, "steps = {}", cfg.steps);
    let _ = writeln!(out, "tail_window = {}", cfg.tail_window);
    let _ = writeln!(out, "seeding.mode = \"{}\"", cfg.seeding.mode_name());
    match cfg.seeding {
        SeedingSpec::BiasedFraction { abstainer_fraction } => {
            let _ = writeln!(out, "seeding.abstainer_fraction = {abstainer_fraction:?}");
        }
        SeedingSpec::SingleAbstainer { placement } => {
            let _ = writeln!(out, "seeding.placement = \"{}\"", placement.as_str());
        }
        _ => {}
    }
    let _ = writeln!(out, "rng_seed = {}", cfg.rng_seed);
    let _ = writeln!(out, "replicates = {}", cfg.replicates);
    let steps: Vec<String> = cfg.snapshot_steps.iter().map(|s| s.to_string()).collect();
    let _ = writeln!(out, "snapshot_steps = [{}]", steps.join(", "));
    out
}
