//! Flat `key=value` run configuration. Lines are `key = value`, `#`
//! comments and blank lines are skipped, duplicate keys are rejected.
//! Environment variables prefixed `TEMPREL_` override file values
//! (`TEMPREL_N_TRAIN=100` overrides key `n_train`).

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};

pub const ENV_PREFIX: &str = "TEMPREL_";

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FlatConfig {
    values: BTreeMap<String, String>,
}

impl FlatConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut values = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected key=value, got {raw:?}", i + 1))
            })?;
            let key = key.trim().to_string();
            let value = value.trim().to_string();
            if key.is_empty() {
                return Err(Error::Config(format!("line {}: empty key", i + 1)));
            }
            if values.insert(key.clone(), value).is_some() {
                return Err(Error::Config(format!(
                    "line {}: duplicate key {key:?}",
                    i + 1
                )));
            }
        }
        Ok(FlatConfig { values })
    }

    pub fn load(path: &Path) -> Result<Self> {
        FlatConfig::parse(&std::fs::read_to_string(path)?)
    }

    /// Fold in `TEMPREL_*` overrides. The variable name after the prefix is
    /// lowercased to form the key, so `TEMPREL_LEARNING_RATE` targets
    /// `learning_rate`.
    pub fn apply_env(&mut self, vars: impl Iterator<Item = (String, String)>) {
        for (name, value) in vars {
            if let Some(rest) = name.strip_prefix(ENV_PREFIX) {
                if !rest.is_empty() {
                    self.values.insert(rest.to_lowercase(), value);
                }
            }
        }
    }

    pub fn set(&mut self, key: &str, value: &str) {
        self.values.insert(key.to_string(), value.to_string());
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.values.keys().map(String::as_str)
    }

    fn parsed<T: std::str::FromStr>(&self, key: &str, what: &str) -> Result<Option<T>> {
        match self.values.get(key) {
            None => Ok(None),
            Some(raw) => raw.parse::<T>().map(Some).map_err(|_| {
                Error::Config(format!("key {key:?}: expected {what}, got {raw:?}"))
            }),
        }
    }

    pub fn get_f64(&self, key: &str) -> Result<Option<f64>> {
        self.parsed(key, "a number")
    }

    pub fn get_usize(&self, key: &str) -> Result<Option<usize>> {
        self.parsed(key, "a non-negative integer")
    }

    pub fn get_u64(&self, key: &str) -> Result<Option<u64>> {
        self.parsed(key, "a non-negative integer")
    }

    pub fn get_bool(&self, key: &str) -> Result<Option<bool>> {
        match self.values.get(key).map(String::as_str) {
            None => Ok(None),
            Some("true") | Some("1") => Ok(Some(true)),
            Some("false") | Some("0") => Ok(Some(false)),
            Some(raw) => Err(Error::Config(format!(
                "key {key:?}: expected true/false/1/0, got {raw:?}"
            ))),
        }
    }

    /// Reject keys outside the given schema — typo protection for run
    /// configs.
    pub fn require_known(&self, known: &[&str]) -> Result<()> {
        for key in self.values.keys() {
            if !known.contains(&key.as_str()) {
                return Err(Error::Config(format!(
                    "unknown config key {key:?} (known: {})",
                    known.join(", ")
                )));
            }
        }
        Ok(())
    }
}
