//! Flat `key = value` configuration files.
//!
//! Blank lines and `#` comments are ignored. Keys are case-sensitive and
//! underscores are read as dashes, so `n_star` and `n-star` are the same key.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use crate::error::{invalid, CliError, Result};

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Config {
    source: String,
    values: BTreeMap<String, (String, usize)>,
}

impl Config {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn parse(text: &str, source: &str) -> Result<Self> {
        let mut values = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| invalid(format!("{source}: line {}: expected `key = value`", i + 1)))?;
            let key = key.trim().replace('_', "-");
            if key.is_empty() {
                return Err(invalid(format!("{source}: line {}: empty key", i + 1)));
            }
            if values.insert(key.clone(), (value.trim().to_string(), i + 1)).is_some() {
                return Err(invalid(format!("{source}: line {}: `{key}` given twice", i + 1)));
            }
        }
        Ok(Self { source: source.to_string(), values })
    }

    /// Rejects keys outside `known`, which catches typos.
    pub fn check_keys(&self, known: &[&str]) -> Result<()> {
        match self.values.iter().find(|(k, _)| !known.contains(&k.as_str())) {
            Some((k, (_, line))) => Err(invalid(format!("{}: line {line}: unknown key `{k}`", self.source))),
            None => Ok(()),
        }
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(|(v, _)| v.as_str())
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        match self.values.get(key) {
            None => Ok(None),
            Some((v, line)) => v
                .parse()
                .map(Some)
                .map_err(|e| invalid(format!("{}: line {line}: bad value for `{key}`: {e}", self.source))),
        }
    }

    /// Comma-separated list.
    pub fn list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>>
    where
        T::Err: std::fmt::Display,
    {
        match self.values.get(key) {
            None => Ok(None),
            Some((v, line)) => v
                .split(',')
                .map(|item| {
                    item.trim().parse().map_err(|e| {
                        invalid(format!("{}: line {line}: bad item `{}` in `{key}`: {e}", self.source, item.trim()))
                    })
                })
                .collect::<Result<_>>()
                .map(Some),
        }
    }

    /// Flag value if given, else the config value.
    pub fn or<T: FromStr>(&self, flag: Option<T>, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        match flag {
            Some(v) => Ok(Some(v)),
            None => self.get(key),
        }
    }
}
