//! Whole-document quality filtering.
//!
//! Rules are evaluated independently and reported in a fixed order:
//! `min_chars`, `max_chars`, `min_ja_ratio`, `min_mean_line_length`,
//! `max_duplicate_line_ratio`, `max_char_run`, `max_ngword_hits`.

use std::collections::{BTreeSet, HashSet};
use std::path::{Path, PathBuf};

use aho_corasick::AhoCorasick;
use serde::{Deserialize, Serialize};

use crate::ingest::score_japanese;
use crate::markdown::Document;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterMetrics {
    pub char_count: u64,
    pub ja_char_ratio: f64,
    pub mean_line_length: f64,
    pub duplicate_line_ratio: f64,
    pub max_char_run: u64,
    pub ngword_hits: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterVerdict {
    pub passed: bool,
    pub failed_rules: Vec<String>,
    pub metrics: FilterMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterConfig {
    pub min_chars: u64,
    pub max_chars: u64,
    pub min_ja_ratio: f64,
    pub min_mean_line_length: f64,
    pub max_duplicate_line_ratio: f64,
    pub max_char_run: u64,
    pub max_ngword_hits: u64,
    pub ngwords: BTreeSet<String>,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            min_chars: 400,
            max_chars: 200_000,
            min_ja_ratio: 0.5,
            min_mean_line_length: 10.0,
            max_duplicate_line_ratio: 0.30,
            max_char_run: 50,
            max_ngword_hits: 0,
            ngwords: BTreeSet::new(),
        }
    }
}

pub const RULES: [&str; 7] = [
    "min_chars",
    "max_chars",
    "min_ja_ratio",
    "min_mean_line_length",
    "max_duplicate_line_ratio",
    "max_char_run",
    "max_ngword_hits",
];

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("config error at `{key}`: {reason}")]
pub struct ConfigError {
    pub key: String,
    pub reason: String,
}

impl ConfigError {
    pub fn new(key: impl Into<String>, reason: impl Into<String>) -> Self {
        Self {
            key: key.into(),
            reason: reason.into(),
        }
    }
}

impl FilterConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.min_chars > self.max_chars {
            return Err(ConfigError::new("min_chars", "must not exceed max_chars"));
        }
        for (key, v) in [
            ("min_ja_ratio", self.min_ja_ratio),
            ("max_duplicate_line_ratio", self.max_duplicate_line_ratio),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(ConfigError::new(key, "must be in [0, 1]"));
            }
        }
        if !(self.min_mean_line_length >= 0.0) {
            return Err(ConfigError::new("min_mean_line_length", "must be >= 0"));
        }
        Ok(())
    }

    /// Builds a config from a TOML table. Keys not listed in the table keep
    /// their defaults; unknown keys are rejected. A relative `ngword_file`
    /// is resolved against `base_dir`.
    pub fn from_table(table: &toml::Table, base_dir: &Path) -> Result<Self, ConfigError> {
        let mut cfg = FilterConfig::default();
        for (key, value) in table {
            let int = || {
                value
                    .as_integer()
                    .filter(|v| *v >= 0)
                    .map(|v| v as u64)
                    .ok_or_else(|| ConfigError::new(key, "expected a non-negative integer"))
            };
            let float = || {
                value
                    .as_float()
                    .or_else(|| value.as_integer().map(|i| i as f64))
                    .ok_or_else(|| ConfigError::new(key, "expected a number"))
            };
            match key.as_str() {
                "min_chars" => cfg.min_chars = int()?,
                "max_chars" => cfg.max_chars = int()?,
                "min_ja_ratio" => cfg.min_ja_ratio = float()?,
                "min_mean_line_length" => cfg.min_mean_line_length = float()?,
                "max_duplicate_line_ratio" => cfg.max_duplicate_line_ratio = float()?,
                "max_char_run" => cfg.max_char_run = int()?,
                "max_ngword_hits" => cfg.max_ngword_hits = int()?,
                "ngword_file" => {
                    let path = value
                        .as_str()
                        .ok_or_else(|| ConfigError::new(key, "expected a path string"))?;
                    let path = resolve(base_dir, path);
                    cfg.ngwords = load_ngwords(&path).map_err(|e| {
                        ConfigError::new(key, format!("cannot read {}: {e}", path.display()))
                    })?;
                }
                _ => return Err(ConfigError::new(key, "unknown key")),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn resolve(base: &Path, path: &str) -> PathBuf {
    let p = Path::new(path);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

/// One NG word per line, UTF-8; blank lines are ignored.
pub fn load_ngwords(path: &Path) -> std::io::Result<BTreeSet<String>> {
    let text = std::fs::read_to_string(path)?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(String::from)
        .collect())
}

/// Loads a standalone filter config file (TOML, filter keys at top level).
pub fn load_filter_config(path: &Path) -> Result<FilterConfig, ConfigError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigError::new(path.display().to_string(), e.to_string()))?;
    let table: toml::Table = text
        .parse()
        .map_err(|e: toml::de::Error| ConfigError::new(path.display().to_string(), e.to_string()))?;
    let base = path.parent().unwrap_or(Path::new("."));
    FilterConfig::from_table(&table, base)
}

/// Substring matcher over an NG-word list.
#[derive(Debug, Clone)]
pub struct NgMatcher(Option<AhoCorasick>);

impl NgMatcher {
    pub fn new<'a>(words: impl IntoIterator<Item = &'a String>) -> Self {
        let words: Vec<&String> = words.into_iter().filter(|w| !w.is_empty()).collect();
        if words.is_empty() {
            return Self(None);
        }
        Self(Some(AhoCorasick::new(words).expect("NG-word automaton")))
    }

    /// Occurrences of any word, overlapping matches included.
    pub fn count(&self, text: &str) -> u64 {
        match &self.0 {
            None => 0,
            Some(ac) => ac.find_overlapping_iter(text).count() as u64,
        }
    }
}

pub fn compute_metrics(doc: &Document, ngwords: &NgMatcher) -> FilterMetrics {
    metrics_for_text(&doc.markdown, ngwords)
}

pub fn metrics_for_text(text: &str, ngwords: &NgMatcher) -> FilterMetrics {
    let char_count = text.chars().count() as u64;
    let ja_char_ratio = score_japanese(text).score;

    let mut seen: HashSet<&str> = HashSet::new();
    let (mut lines, mut line_chars, mut duplicates) = (0u64, 0u64, 0u64);
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        lines += 1;
        line_chars += line.chars().count() as u64;
        if !seen.insert(line) {
            duplicates += 1;
        }
    }
    let (mean_line_length, duplicate_line_ratio) = if lines == 0 {
        (0.0, 0.0)
    } else {
        (line_chars as f64 / lines as f64, duplicates as f64 / lines as f64)
    };

    let mut max_char_run = 0u64;
    let mut run = 0u64;
    let mut prev = None;
    for c in text.chars() {
        run = if Some(c) == prev { run + 1 } else { 1 };
        prev = Some(c);
        max_char_run = max_char_run.max(run);
    }

    FilterMetrics {
        char_count,
        ja_char_ratio,
        mean_line_length,
        duplicate_line_ratio,
        max_char_run,
        ngword_hits: ngwords.count(text),
    }
}

pub fn evaluate_document(m: &FilterMetrics, cfg: &FilterConfig) -> FilterVerdict {
    let checks = [
        m.char_count < cfg.min_chars,
        m.char_count > cfg.max_chars,
        m.ja_char_ratio < cfg.min_ja_ratio,
        m.mean_line_length < cfg.min_mean_line_length,
        m.duplicate_line_ratio > cfg.max_duplicate_line_ratio,
        m.max_char_run > cfg.max_char_run,
        m.ngword_hits > cfg.max_ngword_hits,
    ];
    let failed_rules: Vec<String> = RULES
        .iter()
        .zip(checks)
        .filter(|(_, failed)| *failed)
        .map(|(name, _)| name.to_string())
        .collect();
    FilterVerdict {
        passed: failed_rules.is_empty(),
        failed_rules,
        metrics: m.clone(),
    }
}
