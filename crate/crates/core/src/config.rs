//! Flat `key = value` configuration files.
//!
//! Blank lines and `#` comments are ignored. Every key must be claimed by one
//! of the sections it is applied to; anything left over is an error.

use std::path::Path;
use std::str::FromStr;

use crate::env::EnvConfig;
use crate::error::{Error, Result};
use crate::hierarchy::GateConfig;
use crate::ppo::PpoHyper;

#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub line: usize,
    pub key: String,
    pub value: String,
}

pub fn parse_entries(text: &str) -> Result<Vec<Entry>> {
    let mut entries: Vec<Entry> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", i + 1)))?;
        let (key, value) = (key.trim(), value.trim());
        if key.is_empty() || value.is_empty() {
            return Err(Error::Config(format!("line {}: empty key or value", i + 1)));
        }
        if entries.iter().any(|e| e.key == key) {
            return Err(Error::Config(format!("line {}: duplicate key `{key}`", i + 1)));
        }
        entries.push(Entry { line: i + 1, key: key.to_string(), value: value.to_string() });
    }
    Ok(entries)
}

/// Parse one value, naming the key on failure.
pub fn parse_value<T: FromStr>(entry: &Entry) -> Result<T> {
    entry.value.parse().map_err(|_| {
        Error::Config(format!(
            "line {}: invalid value `{}` for `{}`",
            entry.line, entry.value, entry.key
        ))
    })
}

/// Environment and optimizer settings read from one file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunConfig {
    pub env: EnvConfig,
    pub ppo: PpoHyper,
    pub gate: GateConfig,
}

impl RunConfig {
    pub fn from_text(text: &str) -> Result<Self> {
        let mut config = RunConfig::default();
        for entry in parse_entries(text)? {
            if !config.env.apply(&entry)? && !config.ppo.apply(&entry)? && !config.gate.apply(&entry)? {
                return Err(Error::Config(format!(
                    "line {}: unknown key `{}`",
                    entry.line, entry.key
                )));
            }
        }
        config.env.validate()?;
        config.ppo.validate()?;
        config.gate.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }

    /// Defaults when no file is given.
    pub fn load_optional(path: Option<&Path>) -> Result<Self> {
        path.map_or_else(|| Ok(Self::default()), Self::load)
    }

    pub fn to_text(&self) -> String {
        let mut out = self.env.to_text();
        out.push_str(&self.ppo.to_text());
        out.push_str(&self.gate.to_text());
        out
    }
}
