//! Flat `key = value` configuration with CLI overrides.
//!
//! Resolution order: file entries, then command-line overrides, then
//! defaults the experiment materializes via [`Config::ensure`]. Later
//! assignments to the same key replace the value in place, so the echo
//! order is first-assignment order and stays stable across runs.

use std::fmt::Write as _;
use std::path::Path;

use crate::{LabError, Result};

#[derive(Clone, Debug, Default)]
pub struct Config {
    entries: Vec<(String, String)>,
}

impl Config {
    pub fn new() -> Self {
        Config::default()
    }

    /// Parse a config file. `#` starts a comment anywhere on a line; blank
    /// lines are skipped; everything else must be `key = value`.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| LabError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg = Config::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = match raw.find('#') {
                Some(i) => &raw[..i],
                None => raw,
            };
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                LabError::Config(format!(
                    "{}:{}: expected `key = value`, got `{raw}`",
                    path.display(),
                    lineno + 1
                ))
            })?;
            cfg.set(key.trim(), value.trim());
        }
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: &str) {
        if let Some(slot) = self.entries.iter_mut().find(|(k, _)| k == key) {
            slot.1 = value.to_string();
        } else {
            self.entries.push((key.to_string(), value.to_string()));
        }
    }

    /// Materialize a default so it shows up in the echoed config.
    pub fn ensure(&mut self, key: &str, default: &str) {
        if !self.entries.iter().any(|(k, _)| k == key) {
            self.entries.push((key.to_string(), default.to_string()));
        }
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn require(&self, key: &str) -> Result<&str> {
        self.get(key)
            .ok_or_else(|| LabError::Config(format!("missing required key `{key}`")))
    }

    pub fn f64(&self, key: &str) -> Result<f64> {
        parse_f64(key, self.require(key)?)
    }

    pub fn u64(&self, key: &str) -> Result<u64> {
        let s = self.require(key)?;
        s.parse::<u64>()
            .map_err(|_| bad_value(key, s, "a non-negative integer"))
    }

    pub fn u32(&self, key: &str) -> Result<u32> {
        let s = self.require(key)?;
        s.parse::<u32>()
            .map_err(|_| bad_value(key, s, "a non-negative integer"))
    }

    pub fn usize(&self, key: &str) -> Result<usize> {
        let s = self.require(key)?;
        s.parse::<usize>()
            .map_err(|_| bad_value(key, s, "a non-negative integer"))
    }

    /// Comma-separated list of floats.
    pub fn f64_list(&self, key: &str) -> Result<Vec<f64>> {
        self.require(key)?
            .split(',')
            .map(|s| parse_f64(key, s.trim()))
            .collect()
    }

    /// Comma-separated list of raw items.
    pub fn str_list(&self, key: &str) -> Result<Vec<String>> {
        Ok(self
            .require(key)?
            .split(',')
            .map(|s| s.trim().to_string())
            .collect())
    }

    /// Entries in first-assignment order, final values.
    pub fn entries(&self) -> &[(String, String)] {
        &self.entries
    }

    /// The `# key = value` prologue placed above every CSV header.
    pub fn echo_lines(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.entries {
            writeln!(out, "# {k} = {v}").expect("string write");
        }
        out
    }
}

fn parse_f64(key: &str, s: &str) -> Result<f64> {
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(bad_value(key, s, "a finite number")),
    }
}

fn bad_value(key: &str, s: &str, want: &str) -> LabError {
    LabError::Config(format!("key `{key}`: `{s}` is not {want}"))
}
