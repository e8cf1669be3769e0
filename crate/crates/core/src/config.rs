//! Flat `key = value` text configuration.
//!
//! Blank lines and lines starting with `#` are ignored. Later assignments to
//! the same key win, which is also how command-line overrides are merged.

use std::fmt::{self, Display};
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::params::ModelConfig;
use crate::training::TrainConfig;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct KeyValues {
    entries: Vec<(String, String)>,
}

impl KeyValues {
    pub fn parse_str(text: &str) -> Result<Self> {
        let mut kv = Self::default();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(Error::Config(format!("line {}: expected `key = value`, got {line:?}", i + 1)));
            };
            let k = k.trim();
            if k.is_empty() {
                return Err(Error::Config(format!("line {}: empty key", i + 1)));
            }
            kv.set(k, v.trim());
        }
        Ok(kv)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_str(&text)
    }

    pub fn set(&mut self, key: &str, value: impl Display) {
        let value = value.to_string();
        match self.entries.iter_mut().find(|(k, _)| k == key) {
            Some(slot) => slot.1 = value,
            None => self.entries.push((key.to_string(), value)),
        }
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn remove(&mut self, key: &str) -> Option<String> {
        let pos = self.entries.iter().position(|(k, _)| k == key)?;
        Some(self.entries.remove(pos).1)
    }

    pub fn iter(&self) -> impl Iterator<Item = &(String, String)> {
        self.entries.iter()
    }

    /// Applies `other` on top of `self`.
    pub fn merge(&mut self, other: &KeyValues) {
        for (k, v) in &other.entries {
            self.set(k, v);
        }
    }

    pub fn parse<T: FromStr>(&self, key: &str, value: &str) -> Result<T>
    where
        T::Err: Display,
    {
        value.parse().map_err(|e| Error::Config(format!("{key} = {value:?}: {e}")))
    }
}

impl Display for KeyValues {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, v) in &self.entries {
            writeln!(f, "{k} = {v}")?;
        }
        Ok(())
    }
}

/// Model and training settings read from one file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Config {
    pub model: ModelConfig,
    pub train: TrainConfig,
}

impl Config {
    pub fn from_key_values(kv: &KeyValues) -> Result<Self> {
        let mut cfg = Config::default();
        for (key, value) in kv.iter() {
            if !cfg.model.apply(kv, key, value)? && !cfg.train.apply(kv, key, value)? {
                return Err(Error::Config(format!("unknown key {key:?}")));
            }
        }
        cfg.model.validate()?;
        cfg.train.validate()?;
        Ok(cfg)
    }

    pub fn to_key_values(&self) -> KeyValues {
        let mut kv = self.model.to_key_values();
        kv.merge(&self.train.to_key_values());
        kv
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_key_values(&KeyValues::load(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::Mode;

    #[test]
    fn parses_comments_blanks_and_last_wins() {
        let kv = KeyValues::parse_str("# model\nrelations = 3\n\nrelations = 6\nmode=rel-norm\n").unwrap();
        assert_eq!(kv.get("relations"), Some("6"));
        let cfg = Config::from_key_values(&kv).unwrap();
        assert_eq!(cfg.model.relations, 6);
        assert_eq!(cfg.model.mode, Mode::RelNorm);
    }

    #[test]
    fn rejects_unknown_keys_and_garbage() {
        assert!(Config::from_key_values(&KeyValues::parse_str("colour = blue").unwrap()).is_err());
        assert!(KeyValues::parse_str("no equals sign").is_err());
        assert!(Config::from_key_values(&KeyValues::parse_str("relations = x").unwrap()).is_err());
        assert!(Config::from_key_values(&KeyValues::parse_str("relations = 0").unwrap()).is_err());
    }

    #[test]
    fn resolved_config_round_trips() {
        let cfg = Config::default();
        let text = cfg.to_key_values().to_string();
        let back = Config::from_key_values(&KeyValues::parse_str(&text).unwrap()).unwrap();
        assert_eq!(cfg, back);
    }
}
