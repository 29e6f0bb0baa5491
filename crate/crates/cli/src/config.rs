//! Minimal INI-style configuration: `[section]` headers over `key = value`
//! lines, `#`/`;` comments. Flat, diff-friendly, no schema machinery.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("io error reading {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("line {line}: expected `key = value` or `[section]`, got {text:?}")]
    Malformed { line: usize, text: String },
    #[error("missing required key `{section}.{key}`")]
    Missing { section: String, key: String },
    #[error("bad value for `{section}.{key}`: {value:?} ({expected})")]
    BadValue { section: String, key: String, value: String, expected: &'static str },
}

/// Parsed configuration with deterministic section/key order.
#[derive(Debug, Clone, Default)]
pub struct Ini {
    sections: BTreeMap<String, BTreeMap<String, String>>,
}

impl Ini {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut sections: BTreeMap<String, BTreeMap<String, String>> = BTreeMap::new();
        let mut current = String::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = strip_comment(raw).trim().to_string();
            if line.is_empty() {
                continue;
            }
            if line.starts_with('[') && line.ends_with(']') {
                current = line[1..line.len() - 1].trim().to_string();
                sections.entry(current.clone()).or_default();
            } else if let Some((key, value)) = line.split_once('=') {
                sections
                    .entry(current.clone())
                    .or_default()
                    .insert(key.trim().to_string(), value.trim().to_string());
            } else {
                return Err(ConfigError::Malformed { line: idx + 1, text: raw.to_string() });
            }
        }
        Ok(Self { sections })
    }

    pub fn has_section(&self, section: &str) -> bool {
        self.sections.contains_key(section)
    }

    pub fn set(&mut self, section: &str, key: &str, value: &str) {
        self.sections
            .entry(section.to_string())
            .or_default()
            .insert(key.to_string(), value.to_string());
    }

    pub fn get(&self, section: &str, key: &str) -> Option<&str> {
        self.sections.get(section).and_then(|s| s.get(key)).map(|v| v.as_str())
    }

    pub fn require(&self, section: &str, key: &str) -> Result<&str, ConfigError> {
        self.get(section, key).ok_or_else(|| ConfigError::Missing {
            section: section.to_string(),
            key: key.to_string(),
        })
    }

    pub fn get_f64(&self, section: &str, key: &str) -> Result<Option<f64>, ConfigError> {
        self.get(section, key)
            .map(|v| {
                v.parse().map_err(|_| ConfigError::BadValue {
                    section: section.to_string(),
                    key: key.to_string(),
                    value: v.to_string(),
                    expected: "a number",
                })
            })
            .transpose()
    }

    pub fn require_f64(&self, section: &str, key: &str) -> Result<f64, ConfigError> {
        self.get_f64(section, key)?.ok_or_else(|| ConfigError::Missing {
            section: section.to_string(),
            key: key.to_string(),
        })
    }

    pub fn get_u64(&self, section: &str, key: &str) -> Result<Option<u64>, ConfigError> {
        self.get(section, key)
            .map(|v| {
                v.parse().map_err(|_| ConfigError::BadValue {
                    section: section.to_string(),
                    key: key.to_string(),
                    value: v.to_string(),
                    expected: "a non-negative integer",
                })
            })
            .transpose()
    }

    pub fn require_u64(&self, section: &str, key: &str) -> Result<u64, ConfigError> {
        self.get_u64(section, key)?.ok_or_else(|| ConfigError::Missing {
            section: section.to_string(),
            key: key.to_string(),
        })
    }

    /// Comma-separated list of floats.
    pub fn get_f64_list(&self, section: &str, key: &str) -> Result<Option<Vec<f64>>, ConfigError> {
        self.get(section, key)
            .map(|v| {
                v.split(',')
                    .map(|item| {
                        item.trim().parse().map_err(|_| ConfigError::BadValue {
                            section: section.to_string(),
                            key: key.to_string(),
                            value: v.to_string(),
                            expected: "a comma-separated list of numbers",
                        })
                    })
                    .collect()
            })
            .transpose()
    }
}

fn strip_comment(line: &str) -> &str {
    match line.find(['#', ';']) {
        Some(idx) => &line[..idx],
        None => line,
    }
}
