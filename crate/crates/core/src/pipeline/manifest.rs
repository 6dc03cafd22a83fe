use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

/// Document and volume counts for one work unit or one whole stage.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub docs_in: u64,
    pub docs_out: u64,
    pub drops: BTreeMap<String, u64>,
    pub bytes_out: u64,
    pub tokens_out: u64,
}

impl Counts {
    pub fn drop(&mut self, reason: &str, n: u64) {
        if n > 0 {
            *self.drops.entry(reason.to_string()).or_insert(0) += n;
        }
    }

    pub fn dropped(&self) -> u64 {
        self.drops.values().sum()
    }

    /// `docs_in = docs_out + Σ drops`.
    pub fn conserves(&self) -> bool {
        self.docs_in == self.docs_out + self.dropped()
    }

    pub fn add(&mut self, other: &Counts) {
        self.docs_in += other.docs_in;
        self.docs_out += other.docs_out;
        self.bytes_out += other.bytes_out;
        self.tokens_out += other.tokens_out;
        for (k, v) in &other.drops {
            self.drop(k, *v);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StageStatus {
    Pending,
    Partial,
    Complete,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: String,
    pub status: StageStatus,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    pub totals: Counts,
    pub wall_time_secs: f64,
    /// Completion markers: finished work units and their counts.
    pub units: BTreeMap<String, Counts>,
    /// Dedup only: cluster size -> number of clusters.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub cluster_sizes: BTreeMap<u64, u64>,
    /// Mix only: realised tokens per bucket.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub bucket_tokens: BTreeMap<String, u64>,
}

impl StageRecord {
    pub fn new(stage: &str) -> Self {
        Self {
            stage: stage.to_string(),
            status: StageStatus::Pending,
            inputs: Vec::new(),
            outputs: Vec::new(),
            totals: Counts::default(),
            wall_time_secs: 0.0,
            units: BTreeMap::new(),
            cluster_sizes: BTreeMap::new(),
            bucket_tokens: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArchiveEntry {
    pub file: u32,
    pub path: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DumpEntry {
    pub label: String,
    pub archives: Vec<ArchiveEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub config_hash: String,
    pub created: String,
    pub dumps: Vec<DumpEntry>,
    pub stages: BTreeMap<String, StageRecord>,
}

impl RunManifest {
    pub fn new(run_id: &str, config_hash: &str) -> Self {
        Self {
            run_id: run_id.to_string(),
            config_hash: config_hash.to_string(),
            created: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
            dumps: Vec::new(),
            stages: BTreeMap::new(),
        }
    }

    pub fn stage(&self, name: &str) -> Option<&StageRecord> {
        self.stages.get(name)
    }

    pub fn stage_mut(&mut self, name: &str) -> &mut StageRecord {
        self.stages
            .entry(name.to_string())
            .or_insert_with(|| StageRecord::new(name))
    }

    pub fn is_done(&self, stage: &str, unit: &str) -> bool {
        self.stage(stage).is_some_and(|s| s.units.contains_key(unit))
    }
}

/// Writes `bytes` to `path` through a sibling temp file and a rename, so
/// readers see either the old content or the new, never a mix.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = path.parent().unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

pub fn write_manifest(path: &Path, manifest: &RunManifest) -> std::io::Result<()> {
    let mut bytes = serde_json::to_vec_pretty(manifest)?;
    bytes.push(b'\n');
    atomic_write(path, &bytes)
}

pub fn read_manifest(path: &Path) -> std::io::Result<RunManifest> {
    let bytes = std::fs::read(path)?;
    Ok(serde_json::from_slice(&bytes)?)
}
