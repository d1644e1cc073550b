//! Flat `key = value` configuration files with `#` comments. Subcommands
//! validate their key sets: unknown keys are rejected, required keys must be
//! present.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default)]
pub struct Config {
    entries: BTreeMap<String, String>,
}

impl Config {
    pub fn parse(text: &str) -> Result<Config> {
        let mut entries = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = match raw.find('#') {
                Some(i) => &raw[..i],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::Format(format!(
                    "config line {}: expected `key = value`, got {raw:?}",
                    lineno + 1
                )));
            };
            let key = key.trim().to_string();
            let value = value.trim().to_string();
            if key.is_empty() {
                return Err(Error::Format(format!("config line {}: empty key", lineno + 1)));
            }
            if entries.insert(key.clone(), value).is_some() {
                return Err(Error::Format(format!("config line {}: duplicate key {key:?}", lineno + 1)));
            }
        }
        Ok(Config { entries })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Config> {
        let text = std::fs::read_to_string(path.as_ref())?;
        Self::parse(&text)
    }

    /// Reject keys outside `allowed` and require every key in `required`
    /// (which must be a subset of `allowed`).
    pub fn check_keys(&self, allowed: &[&str], required: &[&str]) -> Result<()> {
        for key in self.entries.keys() {
            if !allowed.contains(&key.as_str()) {
                return Err(Error::Format(format!("unknown config key {key:?}")));
            }
        }
        for key in required {
            if !self.entries.contains_key(*key) {
                return Err(Error::Format(format!("missing required config key {key:?}")));
            }
        }
        Ok(())
    }

    pub fn get_str(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|s| s.as_str())
    }

    pub fn require_str(&self, key: &str) -> Result<&str> {
        self.get_str(key)
            .ok_or_else(|| Error::Format(format!("missing required config key {key:?}")))
    }

    pub fn get_f64(&self, key: &str) -> Result<Option<f64>> {
        self.entries
            .get(key)
            .map(|v| {
                v.parse::<f64>()
                    .map_err(|_| Error::Format(format!("config key {key:?}: bad number {v:?}")))
            })
            .transpose()
    }

    pub fn f64_or(&self, key: &str, default: f64) -> Result<f64> {
        Ok(self.get_f64(key)?.unwrap_or(default))
    }

    pub fn require_f64(&self, key: &str) -> Result<f64> {
        self.get_f64(key)?
            .ok_or_else(|| Error::Format(format!("missing required config key {key:?}")))
    }

    pub fn get_usize(&self, key: &str) -> Result<Option<usize>> {
        self.entries
            .get(key)
            .map(|v| {
                v.parse::<usize>()
                    .map_err(|_| Error::Format(format!("config key {key:?}: bad integer {v:?}")))
            })
            .transpose()
    }

    pub fn usize_or(&self, key: &str, default: usize) -> Result<usize> {
        Ok(self.get_usize(key)?.unwrap_or(default))
    }

    pub fn require_usize(&self, key: &str) -> Result<usize> {
        self.get_usize(key)?
            .ok_or_else(|| Error::Format(format!("missing required config key {key:?}")))
    }

    pub fn u64_or(&self, key: &str, default: u64) -> Result<u64> {
        self.entries
            .get(key)
            .map(|v| {
                v.parse::<u64>()
                    .map_err(|_| Error::Format(format!("config key {key:?}: bad integer {v:?}")))
            })
            .transpose()
            .map(|o| o.unwrap_or(default))
    }

    pub fn bool_or(&self, key: &str, default: bool) -> Result<bool> {
        match self.entries.get(key).map(|s| s.as_str()) {
            None => Ok(default),
            Some("true") | Some("1") | Some("on") => Ok(true),
            Some("false") | Some("0") | Some("off") => Ok(false),
            Some(other) => Err(Error::Format(format!("config key {key:?}: bad boolean {other:?}"))),
        }
    }
}
