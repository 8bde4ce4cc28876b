//! Plain-text `key = value` configuration.
//!
//! One key per line, `#` starts a comment. `units = angular` (default) means
//! frequencies and rates are given in rad/s; `units = hertz` means they are
//! ordinary frequencies and get multiplied by 2π when read.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{load_preset, SystemParams, TWO_PI};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Units {
    #[default]
    Angular,
    Hertz,
}

impl fmt::Display for Units {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Units::Angular => f.write_str("angular"),
            Units::Hertz => f.write_str("hertz"),
        }
    }
}

/// Keys holding a frequency or rate, rescaled by 2π under `units = hertz`.
pub const FREQUENCY_KEYS: &[&str] = &[
    "omega_c",
    "kappa_c",
    "omega_s",
    "detuning",
    "g",
    "gamma",
    "chi",
    "eta",
    "filter_g",
    "filter_kappa",
    "chi_inh",
    "window",
    "split_width",
];

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Config {
    pub units: Units,
    entries: BTreeMap<String, String>,
}

impl Config {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Config::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            cfg.insert_line(line, i + 1)?;
        }
        Ok(cfg)
    }

    fn insert_line(&mut self, line: &str, lineno: usize) -> Result<()> {
        let (key, value) = line.split_once('=').ok_or_else(|| Error::Config {
            line: lineno,
            reason: format!("expected `key = value`, got `{line}`"),
        })?;
        let key = key.trim().to_ascii_lowercase();
        let value = value.trim().to_string();
        if key.is_empty() {
            return Err(Error::Config { line: lineno, reason: "empty key".into() });
        }
        if key == "units" {
            self.units = match value.to_ascii_lowercase().as_str() {
                "angular" => Units::Angular,
                "hertz" | "hz" => Units::Hertz,
                other => {
                    return Err(Error::Config {
                        line: lineno,
                        reason: format!("units must be angular or hertz, got `{other}`"),
                    })
                }
            };
            return Ok(());
        }
        self.entries.insert(key, value);
        Ok(())
    }

    /// Applies a `key=value` override. Values follow the file's unit convention.
    pub fn apply_override(&mut self, assignment: &str) -> Result<()> {
        self.insert_line(assignment.trim(), 0)
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        self.entries.insert(key.to_ascii_lowercase(), value.into());
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    /// Numeric value in internal (angular) units.
    pub fn get_f64(&self, key: &str) -> Result<Option<f64>> {
        let Some(raw) = self.get(key) else { return Ok(None) };
        let v: f64 = raw.parse().map_err(|_| Error::Config {
            line: 0,
            reason: format!("`{key}` is not a number: `{raw}`"),
        })?;
        Ok(Some(self.to_internal(key, v)))
    }

    pub fn get_usize(&self, key: &str) -> Result<Option<usize>> {
        let Some(raw) = self.get(key) else { return Ok(None) };
        raw.parse().map(Some).map_err(|_| Error::Config {
            line: 0,
            reason: format!("`{key}` is not a non-negative integer: `{raw}`"),
        })
    }

    pub fn get_bool(&self, key: &str) -> Result<Option<bool>> {
        let Some(raw) = self.get(key) else { return Ok(None) };
        match raw.to_ascii_lowercase().as_str() {
            "true" | "yes" | "1" | "on" => Ok(Some(true)),
            "false" | "no" | "0" | "off" => Ok(Some(false)),
            _ => Err(Error::Config { line: 0, reason: format!("`{key}` is not a boolean: `{raw}`") }),
        }
    }

    pub fn to_internal(&self, key: &str, v: f64) -> f64 {
        if self.units == Units::Hertz && FREQUENCY_KEYS.contains(&key) {
            v * TWO_PI
        } else {
            v
        }
    }

    /// Builds system parameters: preset (or the reference set) first, then
    /// individual keys on top.
    pub fn system_params(&self) -> Result<SystemParams> {
        let mut p = match self.get("preset") {
            Some(name) if name != "reference" => load_preset(name)?.params,
            _ => SystemParams::reference(),
        };
        let detuning = self.get_f64("detuning")?;
        if let Some(v) = self.get_f64("omega_c")? {
            p.omega_c = v;
            p.omega_s = v;
        }
        let scalar: [(&str, &mut f64); 9] = [
            ("kappa_c", &mut p.kappa_c),
            ("n_spins", &mut p.n_spins),
            ("omega_s", &mut p.omega_s),
            ("g", &mut p.g),
            ("gamma", &mut p.gamma),
            ("chi", &mut p.chi),
            ("temperature", &mut p.temperature),
            ("filter_g", &mut p.filter_g),
            ("filter_kappa", &mut p.filter_kappa),
        ];
        for (key, slot) in scalar {
            if let Some(v) = self.get_f64(key)? {
                *slot = v;
            }
        }
        if let Some(d) = detuning {
            p.omega_s = p.omega_c + d;
        }
        if let Some(v) = self.get_f64("eta")? {
            p.eta = v;
        }
        if let Some(r) = self.get_f64("eta_over_gamma")? {
            p.eta = r * p.gamma;
        }
        p.validate()?;
        Ok(p)
    }

    /// Canonical text used for hashing: sorted keys, explicit units.
    pub fn canonical(&self) -> String {
        let mut s = format!("units={}\n", self.units);
        for (k, v) in &self.entries {
            s.push_str(k);
            s.push('=');
            s.push_str(v);
            s.push('\n');
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_units() {
        let cfg = Config::parse("# header\nunits = hertz\ng = 0.11 # coupling\n\nn_spins=4e13\n").unwrap();
        assert_eq!(cfg.units, Units::Hertz);
        let p = cfg.system_params().unwrap();
        assert!((p.g - 0.11 * TWO_PI).abs() < 1e-15);
        assert_eq!(p.n_spins, 4e13);
    }

    #[test]
    fn rejects_malformed_lines() {
        assert!(matches!(Config::parse("a = 1\nnonsense\n"), Err(Error::Config { line: 2, .. })));
        assert!(Config::parse("units = furlongs").is_err());
    }

    #[test]
    fn eta_ratio_and_detuning() {
        let mut cfg = Config::parse("eta_over_gamma = 10\n").unwrap();
        cfg.apply_override("detuning=2e6").unwrap();
        let p = cfg.system_params().unwrap();
        assert!((p.eta - 1.57).abs() < 1e-12);
        assert!((p.detuning() - 2e6).abs() < 1e-3);
    }

    #[test]
    fn preset_base() {
        let cfg = Config::parse("preset = kubo\ntemperature = 0.025\n").unwrap();
        let p = cfg.system_params().unwrap();
        assert_eq!(p.n_spins, 1e12);
        assert_eq!(p.temperature, 0.025);
    }

    #[test]
    fn canonical_is_order_independent() {
        let a = Config::parse("g = 1\nchi = 2\n").unwrap();
        let b = Config::parse("chi = 2\ng = 1\n").unwrap();
        assert_eq!(a.canonical(), b.canonical());
    }
}
