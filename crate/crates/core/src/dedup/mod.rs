//! Near-duplicate detection with MinHash signatures and LSH banding.

mod cluster;
mod minhash;
mod sigfile;

pub use cluster::{
    build_candidate_pairs, cluster_duplicates, select_survivors, write_clusters_jsonl, Candidates,
    Cluster, DisjointSet, DuplicateClusters,
};
pub use minhash::{
    band_partition, estimate_jaccard, exact_jaccard, minhash_signature, normalize_for_shingles,
    params_id, shingle_text, BandKey, MinHashSignature, ShingleSet,
};
pub use sigfile::{read_signatures, write_signatures, SignatureHeader, SIGNATURE_MAGIC};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DedupMode {
    /// Union every LSH candidate pair.
    Approx,
    /// Union a candidate pair only when its exact Jaccard reaches the threshold.
    Verify,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DedupParams {
    pub shingle_size: usize,
    pub num_hashes: usize,
    pub bands: usize,
    pub rows: usize,
    pub threshold: f64,
    pub mode: DedupMode,
    pub bucket_cap: usize,
}

impl Default for DedupParams {
    fn default() -> Self {
        Self {
            shingle_size: 5,
            num_hashes: 128,
            bands: 16,
            rows: 8,
            threshold: 0.8,
            mode: DedupMode::Verify,
            bucket_cap: 5000,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum DedupError {
    #[error("text too short for shingling: {len} chars, need {n}")]
    TooShort { len: usize, n: usize },
    #[error("shingle size must be at least 2, got {0}")]
    InvalidShingleSize(usize),
    #[error("signatures were built with different parameters")]
    ParamsMismatch,
    #[error("{bands} bands x {rows} rows does not cover {k} hashes")]
    BandShape { k: usize, bands: usize, rows: usize },
    #[error("verify mode needs shingle sets for every document")]
    MissingShingles,
    #[error("bad signature file: {0}")]
    BadSignatureFile(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
