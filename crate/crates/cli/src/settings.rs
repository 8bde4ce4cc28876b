use std::path::Path;

use nvmaser::config::{Config, Units};
use nvmaser::model::{SystemParams, TWO_PI};
use sha2::{Digest, Sha256};

use crate::{CliError, Result};

/// Resolved configuration: file, then `--preset`, then overrides in order.
#[derive(Debug, Clone)]
pub struct Settings {
    pub config: Config,
    /// First 16 hex digits of the SHA-256 of the canonical configuration.
    pub hash: String,
}

impl Settings {
    pub fn load(path: Option<&Path>, preset: Option<&str>, overrides: &[String]) -> Result<Self> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?,
            None => String::new(),
        };
        let mut config = Config::parse(&text)?;
        if let Some(name) = preset {
            config.set("preset", name);
        }
        for o in overrides {
            config.apply_override(o)?;
        }
        Ok(Settings::from_config(config))
    }

    pub fn from_config(config: Config) -> Self {
        let digest = Sha256::digest(config.canonical().as_bytes());
        let hash = digest.iter().take(8).map(|b| format!("{b:02x}")).collect();
        Settings { config, hash }
    }

    pub fn params(&self) -> Result<SystemParams> {
        Ok(self.config.system_params()?)
    }

    pub fn units(&self) -> Units {
        self.config.units
    }

    /// Internal rad/s value expressed in the configuration's units.
    pub fn out_freq(&self, w: f64) -> f64 {
        match self.config.units {
            Units::Angular => w,
            Units::Hertz => w / TWO_PI,
        }
    }

    pub fn f64_or(&self, key: &str, default: f64) -> Result<f64> {
        Ok(self.config.get_f64(key)?.unwrap_or(default))
    }

    pub fn usize_or(&self, key: &str, default: usize) -> Result<usize> {
        Ok(self.config.get_usize(key)?.unwrap_or(default))
    }

    pub fn bool_or(&self, key: &str, default: bool) -> Result<bool> {
        Ok(self.config.get_bool(key)?.unwrap_or(default))
    }

    /// Comma-separated numbers, converted to internal units like `key`.
    pub fn list(&self, key: &str) -> Result<Option<Vec<f64>>> {
        let Some(raw) = self.config.get(key) else { return Ok(None) };
        raw.split(',')
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .map(|v| self.config.to_internal(key, v))
                    .map_err(|_| CliError::Config(format!("`{key}`: `{}` is not a number", s.trim())))
            })
            .collect::<Result<Vec<_>>>()
            .map(Some)
    }
}
