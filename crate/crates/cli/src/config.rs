//! Flat `key = value` run configuration. Values from the file are
//! overridden by command-line flags; unknown keys are rejected.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use anyhow::{anyhow, bail, Context as _, Result};

#[derive(Debug, Clone, Default)]
pub struct Settings {
    values: BTreeMap<String, String>,
}

fn normalize(key: &str) -> String {
    key.trim().replace('-', "_")
}

/// Parses `key = value` lines. `#` starts a comment; blank lines are
/// ignored; a repeated key is an error.
pub fn parse_config(text: &str) -> Result<Vec<(String, String)>> {
    let mut out: Vec<(String, String)> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| anyhow!("line {}: expected `key = value`, got {raw:?}", i + 1))?;
        let k = normalize(k);
        if k.is_empty() {
            bail!("line {}: empty key", i + 1);
        }
        if out.iter().any(|(existing, _)| *existing == k) {
            bail!("line {}: key {k:?} given twice", i + 1);
        }
        out.push((k, v.trim().to_string()));
    }
    Ok(out)
}

impl Settings {
    /// Merges the optional config file with flag overrides, checking every
    /// key against `allowed`.
    pub fn load(
        file: Option<&Path>,
        overrides: impl IntoIterator<Item = (&'static str, String)>,
        allowed: &[&str],
    ) -> Result<Self> {
        let mut values = BTreeMap::new();
        if let Some(path) = file {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading config {}", path.display()))?;
            for (k, v) in parse_config(&text).with_context(|| format!("in config {}", path.display()))? {
                if !allowed.contains(&k.as_str()) {
                    bail!(
                        "unknown key {k:?} in {}; allowed keys: {}",
                        path.display(),
                        allowed.join(", ")
                    );
                }
                values.insert(k, v);
            }
        }
        for (k, v) in overrides {
            debug_assert!(allowed.contains(&k), "flag {k} not in allowed list");
            values.insert(k.to_string(), v);
        }
        Ok(Self { values })
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    pub fn opt<T>(&self, key: &str) -> Result<Option<T>>
    where
        T: FromStr,
        T::Err: Display,
    {
        self.raw(key)
            .map(|v| v.parse::<T>().map_err(|e| anyhow!("invalid value {v:?} for {key}: {e}")))
            .transpose()
    }

    pub fn get<T>(&self, key: &str, default: T) -> Result<T>
    where
        T: FromStr,
        T::Err: Display,
    {
        Ok(self.opt(key)?.unwrap_or(default))
    }

    /// A list separated by commas and/or whitespace.
    pub fn list<T>(&self, key: &str, default: Vec<T>) -> Result<Vec<T>>
    where
        T: FromStr,
        T::Err: Display,
    {
        let Some(v) = self.raw(key) else {
            return Ok(default);
        };
        let items: Vec<T> = v
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|s| !s.is_empty())
            .map(|s| s.parse::<T>().map_err(|e| anyhow!("invalid item {s:?} in {key}: {e}")))
            .collect::<Result<_>>()?;
        if items.is_empty() {
            bail!("{key} must not be empty");
        }
        Ok(items)
    }

    pub fn flag(&self, key: &str) -> Result<bool> {
        match self.raw(key) {
            None => Ok(false),
            Some(v) => match v.to_ascii_lowercase().as_str() {
                "true" | "yes" | "1" | "on" => Ok(true),
                "false" | "no" | "0" | "off" => Ok(false),
                _ => bail!("invalid boolean {v:?} for {key}"),
            },
        }
    }
}
