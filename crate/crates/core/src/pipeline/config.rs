//! The pipeline config file.
//!
//! ```toml
//! seed = 42
//!
//! [ingest]
//! lang_threshold = 0.30
//! charset_fallbacks = ["shift_jis", "euc-jp", "iso-2022-jp"]
//!
//! [filter]
//! min_chars = 400
//! ngword_file = "ngwords.txt"   # optional, relative to this file
//! quarantine = true             # keep rejected docs with their verdicts
//!
//! [dedup]
//! shingle_size = 5
//! num_hashes = 128
//! bands = 16
//! rows = 8
//! threshold = 0.8
//! mode = "verify"               # or "approx"
//! bucket_cap = 5000
//!
//! [shard]
//! target_bytes = 268435456
//!
//! [mix]
//! budget_tokens = 1000000
//! max_epochs = 1.0
//! buckets = [
//!   { name = "ja", ratio = 0.42, source = "run" },
//!   { name = "en", ratio = 0.58, source = "/data/en/shard" },
//! ]
//! ```
//!
//! Every key is optional; absent keys and sections take their defaults.
//! `source = "run"` means this run's own shards; any other source is a
//! directory holding a `shards.json` written by the shard stage.

use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::dedup::{DedupMode, DedupParams};
use crate::filter::{ConfigError, FilterConfig};
use crate::ingest::CharsetFallbacks;
use crate::mix::MixSpec;
use crate::shard::DEFAULT_TARGET_BYTES;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IngestConfig {
    pub lang_threshold: f64,
    pub charset_fallbacks: Vec<String>,
}

impl Default for IngestConfig {
    fn default() -> Self {
        Self {
            lang_threshold: 0.30,
            charset_fallbacks: vec!["shift_jis".into(), "euc-jp".into(), "iso-2022-jp".into()],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShardConfig {
    pub target_bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MixBucket {
    pub name: String,
    pub ratio: f64,
    pub source: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MixConfig {
    pub budget_tokens: u64,
    pub max_epochs: f64,
    pub buckets: Vec<MixBucket>,
}

impl MixConfig {
    pub fn spec(&self) -> MixSpec {
        MixSpec {
            targets: self.buckets.iter().map(|b| (b.name.clone(), b.ratio)).collect(),
            budget_tokens: self.budget_tokens,
            max_epochs: self.max_epochs,
        }
    }
}

/// A fully resolved config: NG words are loaded and paths made absolute,
/// so the hash covers everything that can change results.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Config {
    pub seed: u64,
    pub ingest: IngestConfig,
    pub filter: FilterConfig,
    pub quarantine: bool,
    pub dedup: DedupParams,
    pub shard: ShardConfig,
    pub mix: Option<MixConfig>,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            seed: 0,
            ingest: IngestConfig::default(),
            filter: FilterConfig::default(),
            quarantine: false,
            dedup: DedupParams::default(),
            shard: ShardConfig {
                target_bytes: DEFAULT_TARGET_BYTES,
            },
            mix: None,
        }
    }
}

fn err(key: impl Into<String>, reason: impl Into<String>) -> ConfigError {
    ConfigError::new(key, reason)
}

fn table<'a>(value: &'a toml::Value, key: &str) -> Result<&'a toml::Table, ConfigError> {
    value.as_table().ok_or_else(|| err(key, "expected a table"))
}

fn uint(value: &toml::Value, key: &str) -> Result<u64, ConfigError> {
    value
        .as_integer()
        .filter(|v| *v >= 0)
        .map(|v| v as u64)
        .ok_or_else(|| err(key, "expected a non-negative integer"))
}

fn real(value: &toml::Value, key: &str) -> Result<f64, ConfigError> {
    value
        .as_float()
        .or_else(|| value.as_integer().map(|v| v as f64))
        .ok_or_else(|| err(key, "expected a number"))
}

fn string<'a>(value: &'a toml::Value, key: &str) -> Result<&'a str, ConfigError> {
    value.as_str().ok_or_else(|| err(key, "expected a string"))
}

impl Config {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| err(path.display().to_string(), e.to_string()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base)
    }

    /// Parses config text; relative paths inside resolve against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self, ConfigError> {
        let root: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| err("<file>", e.message().to_string()))?;
        let mut cfg = Config::default();
        for (key, value) in &root {
            match key.as_str() {
                "seed" => cfg.seed = uint(value, "seed")?,
                "ingest" => cfg.ingest = parse_ingest(table(value, key)?)?,
                "filter" => {
                    let mut t = table(value, key)?.clone();
                    if let Some(q) = t.remove("quarantine") {
                        cfg.quarantine = q
                            .as_bool()
                            .ok_or_else(|| err("filter.quarantine", "expected a boolean"))?;
                    }
                    cfg.filter = FilterConfig::from_table(&t, base)
                        .map_err(|e| err(format!("filter.{}", e.key), e.reason))?;
                }
                "dedup" => cfg.dedup = parse_dedup(table(value, key)?)?,
                "shard" => {
                    for (k, v) in table(value, key)? {
                        match k.as_str() {
                            "target_bytes" => cfg.shard.target_bytes = uint(v, "shard.target_bytes")?,
                            _ => return Err(err(format!("shard.{k}"), "unknown key")),
                        }
                    }
                    if cfg.shard.target_bytes == 0 {
                        return Err(err("shard.target_bytes", "must be positive"));
                    }
                }
                "mix" => cfg.mix = Some(parse_mix(table(value, key)?, base)?),
                _ => return Err(err(key, "unknown key")),
            }
        }
        Ok(cfg)
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serialises");
        hex::encode(Sha256::digest(bytes))
    }

    pub fn charset_fallbacks(&self) -> CharsetFallbacks {
        CharsetFallbacks::from_labels(&self.ingest.charset_fallbacks)
            .expect("fallbacks validated at load")
    }
}

/// Seed for one stage, derived from the root seed and the stage name.
pub fn stage_seed(root: u64, stage: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(root.to_le_bytes());
    h.update(stage.as_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().unwrap())
}

fn parse_ingest(t: &toml::Table) -> Result<IngestConfig, ConfigError> {
    let mut cfg = IngestConfig::default();
    for (k, v) in t {
        let key = format!("ingest.{k}");
        match k.as_str() {
            "lang_threshold" => {
                cfg.lang_threshold = real(v, &key)?;
                if !(0.0..=1.0).contains(&cfg.lang_threshold) {
                    return Err(err(key, "must be in [0, 1]"));
                }
            }
            "charset_fallbacks" => {
                let list = v.as_array().ok_or_else(|| err(&key, "expected an array"))?;
                cfg.charset_fallbacks = list
                    .iter()
                    .map(|x| string(x, &key).map(|s| s.to_ascii_lowercase()))
                    .collect::<Result<_, _>>()?;
                CharsetFallbacks::from_labels(&cfg.charset_fallbacks).map_err(|e| err(&key, e))?;
            }
            _ => return Err(err(key, "unknown key")),
        }
    }
    Ok(cfg)
}

fn parse_dedup(t: &toml::Table) -> Result<DedupParams, ConfigError> {
    let mut p = DedupParams::default();
    for (k, v) in t {
        let key = format!("dedup.{k}");
        match k.as_str() {
            "shingle_size" => p.shingle_size = uint(v, &key)? as usize,
            "num_hashes" => p.num_hashes = uint(v, &key)? as usize,
            "bands" => p.bands = uint(v, &key)? as usize,
            "rows" => p.rows = uint(v, &key)? as usize,
            "threshold" => p.threshold = real(v, &key)?,
            "bucket_cap" => p.bucket_cap = uint(v, &key)? as usize,
            "mode" => {
                p.mode = match string(v, &key)? {
                    "verify" => DedupMode::Verify,
                    "approx" => DedupMode::Approx,
                    _ => return Err(err(key, "expected \"verify\" or \"approx\"")),
                }
            }
            _ => return Err(err(key, "unknown key")),
        }
    }
    if !(2..=u16::MAX as usize).contains(&p.shingle_size) {
        return Err(err("dedup.shingle_size", "must be in [2, 65535]"));
    }
    if !(1..=u16::MAX as usize).contains(&p.num_hashes) {
        return Err(err("dedup.num_hashes", "must be in [1, 65535]"));
    }
    if p.bands * p.rows != p.num_hashes {
        return Err(err("dedup.bands", "bands x rows must equal num_hashes"));
    }
    if !(p.threshold > 0.0 && p.threshold <= 1.0) {
        return Err(err("dedup.threshold", "must be in (0, 1]"));
    }
    Ok(p)
}

fn parse_mix(t: &toml::Table, base: &Path) -> Result<MixConfig, ConfigError> {
    let mut cfg = MixConfig {
        budget_tokens: 0,
        max_epochs: 1.0,
        buckets: Vec::new(),
    };
    let mut have_budget = false;
    for (k, v) in t {
        let key = format!("mix.{k}");
        match k.as_str() {
            "budget_tokens" => {
                cfg.budget_tokens = uint(v, &key)?;
                have_budget = true;
            }
            "max_epochs" => cfg.max_epochs = real(v, &key)?,
            "buckets" => {
                let list = v.as_array().ok_or_else(|| err(&key, "expected an array of tables"))?;
                for item in list {
                    cfg.buckets.push(parse_bucket(table(item, &key)?, base)?);
                }
            }
            _ => return Err(err(key, "unknown key")),
        }
    }
    if !have_budget {
        return Err(err("mix.budget_tokens", "required when [mix] is present"));
    }
    cfg.spec().validate().map_err(|e| match e {
        crate::mix::MixError::InvalidEpochs(_) => err("mix.max_epochs", e.to_string()),
        _ => err("mix.buckets", e.to_string()),
    })?;
    Ok(cfg)
}

fn parse_bucket(t: &toml::Table, base: &Path) -> Result<MixBucket, ConfigError> {
    let (mut name, mut ratio, mut source) = (None, None, None);
    for (k, v) in t {
        let key = format!("mix.buckets.{k}");
        match k.as_str() {
            "name" => name = Some(string(v, &key)?.to_string()),
            "ratio" => ratio = Some(real(v, &key)?),
            "source" => {
                let s = string(v, &key)?;
                source = Some(if s == "run" {
                    s.to_string()
                } else {
                    absolute(base, s).display().to_string()
                });
            }
            _ => return Err(err(key, "unknown key")),
        }
    }
    Ok(MixBucket {
        name: name.ok_or_else(|| err("mix.buckets.name", "required"))?,
        ratio: ratio.ok_or_else(|| err("mix.buckets.ratio", "required"))?,
        source: source.ok_or_else(|| err("mix.buckets.source", "required"))?,
    })
}

fn absolute(base: &Path, p: &str) -> PathBuf {
    let p = Path::new(p);
    let joined = if p.is_absolute() { p.to_path_buf() } else { base.join(p) };
    std::path::absolute(&joined).unwrap_or(joined)
}
