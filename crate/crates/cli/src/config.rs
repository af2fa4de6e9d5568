//! TOML experiment files. Every key is a default for the flag of the same
//! name (dashes become underscores); flags given on the command line win.

use std::path::Path;

use toml::{Table, Value};

use crate::numbers::{parse_count, parse_real};

const KNOWN_KEYS: &[&str] = &[
    "command", "threads", "out_dir", "band_file", "band_key", "band_margin", "x", "y", "sets", "ks",
    "k", "a", "psi", "k_lo", "k_hi", "xi_lo", "xi_hi", "limit", "lo", "seed", "samples", "tail_eps",
    "segment_size", "stream", "emit_samples", "grid", "name",
];

#[derive(Debug, Clone, Default)]
pub struct Defaults {
    table: Table,
}

impl Defaults {
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        Self::parse(&text).map_err(|e| format!("{}: {e}", path.display()))
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        let table: Table = text.parse().map_err(|e: toml::de::Error| e.message().to_string())?;
        if let Some(k) = table.keys().find(|k| !KNOWN_KEYS.contains(&k.as_str())) {
            return Err(format!("unknown config key {k:?}"));
        }
        Ok(Self { table })
    }

    pub fn table(&self) -> &Table {
        &self.table
    }

    fn count_value(key: &str, v: &Value) -> Result<u64, String> {
        match v {
            Value::Integer(i) => u64::try_from(*i).map_err(|_| format!("{key} must be ≥ 0")),
            Value::String(s) => parse_count(s),
            _ => Err(format!("{key} must be an integer")),
        }
    }

    pub fn count_opt(&self, flag: Option<u64>, key: &str) -> Result<Option<u64>, String> {
        match (flag, self.table.get(key)) {
            (Some(v), _) => Ok(Some(v)),
            (None, Some(v)) => Self::count_value(key, v).map(Some),
            (None, None) => Ok(None),
        }
    }

    pub fn count(&self, flag: Option<u64>, key: &str) -> Result<u64, String> {
        self.count_opt(flag, key)?
            .ok_or_else(|| format!("missing --{}", key.replace('_', "-")))
    }

    pub fn small_opt(&self, flag: Option<u64>, key: &str) -> Result<Option<u32>, String> {
        self.count_opt(flag, key)?
            .map(|v| u32::try_from(v).map_err(|_| format!("{key} = {v} is too large")))
            .transpose()
    }

    pub fn small(&self, flag: Option<u64>, key: &str) -> Result<u32, String> {
        self.small_opt(flag, key)?
            .ok_or_else(|| format!("missing --{}", key.replace('_', "-")))
    }

    pub fn real_opt(&self, flag: Option<f64>, key: &str) -> Result<Option<f64>, String> {
        match (flag, self.table.get(key)) {
            (Some(v), _) => Ok(Some(v)),
            (None, Some(Value::Float(f))) => Ok(Some(*f)),
            (None, Some(Value::Integer(i))) => Ok(Some(*i as f64)),
            (None, Some(Value::String(s))) => parse_real(s).map(Some),
            (None, Some(_)) => Err(format!("{key} must be a number")),
            (None, None) => Ok(None),
        }
    }

    pub fn string_opt(&self, flag: Option<&str>, key: &str) -> Result<Option<String>, String> {
        match (flag, self.table.get(key)) {
            (Some(v), _) => Ok(Some(v.to_string())),
            (None, Some(Value::String(s))) => Ok(Some(s.clone())),
            (None, Some(_)) => Err(format!("{key} must be a string")),
            (None, None) => Ok(None),
        }
    }

    pub fn flag(&self, flag: bool, key: &str) -> Result<bool, String> {
        match (flag, self.table.get(key)) {
            (true, _) => Ok(true),
            (false, Some(Value::Boolean(b))) => Ok(*b),
            (false, Some(_)) => Err(format!("{key} must be true or false")),
            (false, None) => Ok(false),
        }
    }

    pub fn strings(&self, flag: &[String], key: &str) -> Result<Vec<String>, String> {
        if !flag.is_empty() {
            return Ok(flag.to_vec());
        }
        match self.table.get(key) {
            None => Ok(Vec::new()),
            Some(Value::Array(items)) => items
                .iter()
                .map(|v| match v {
                    Value::String(s) => Ok(s.clone()),
                    _ => Err(format!("{key} must be a list of strings")),
                })
                .collect(),
            Some(_) => Err(format!("{key} must be a list of strings")),
        }
    }

    pub fn counts(&self, flag: &[u64], key: &str) -> Result<Vec<u64>, String> {
        if !flag.is_empty() {
            return Ok(flag.to_vec());
        }
        match self.table.get(key) {
            None => Ok(Vec::new()),
            Some(Value::Array(items)) => items.iter().map(|v| Self::count_value(key, v)).collect(),
            Some(_) => Err(format!("{key} must be a list of integers")),
        }
    }
}
