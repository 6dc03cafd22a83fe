use unicode_normalization::UnicodeNormalization;
use xxhash_rust::xxh3::{xxh3_64, xxh3_64_with_seed};

use super::DedupError;

/// Sorted, deduplicated hashes of the character n-grams of a text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShingleSet {
    pub n: usize,
    pub hashes: Vec<u64>,
}

impl ShingleSet {
    pub fn from_hashes(n: usize, mut hashes: Vec<u64>) -> Self {
        hashes.sort_unstable();
        hashes.dedup();
        Self { n, hashes }
    }

    pub fn len(&self) -> usize {
        self.hashes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hashes.is_empty()
    }
}

/// NFKC, lowercase, whitespace runs collapsed to one space and trimmed.
pub fn normalize_for_shingles(text: &str) -> Vec<char> {
    let mut out = Vec::with_capacity(text.len());
    let mut pending_space = false;
    for c in text.nfkc().flat_map(char::to_lowercase) {
        if c.is_whitespace() {
            pending_space = !out.is_empty();
            continue;
        }
        if pending_space {
            out.push(' ');
            pending_space = false;
        }
        out.push(c);
    }
    out
}

pub fn shingle_text(text: &str, n: usize) -> Result<ShingleSet, DedupError> {
    if n < 2 {
        return Err(DedupError::InvalidShingleSize(n));
    }
    let chars = normalize_for_shingles(text);
    if chars.len() < n {
        return Err(DedupError::TooShort { len: chars.len(), n });
    }
    let mut buf = String::new();
    let hashes = chars
        .windows(n)
        .map(|w| {
            buf.clear();
            buf.extend(w);
            xxh3_64(buf.as_bytes())
        })
        .collect();
    Ok(ShingleSet::from_hashes(n, hashes))
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MinHashSignature {
    pub values: Vec<u64>,
    pub params_id: u64,
}

pub fn params_id(k: usize, n: usize, seed: u64) -> u64 {
    let mut bytes = Vec::with_capacity(24);
    bytes.extend_from_slice(&(k as u64).to_le_bytes());
    bytes.extend_from_slice(&(n as u64).to_le_bytes());
    bytes.extend_from_slice(&seed.to_le_bytes());
    xxh3_64(&bytes)
}

// splitmix64 finaliser
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Two independent 64-bit keys for hash function `i`.
fn hash_keys(seed: u64, i: usize) -> (u64, u64) {
    let base = mix64(seed ^ 0x9e37_79b9_7f4a_7c15).wrapping_add((i as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
    (mix64(base), mix64(base ^ 0xd1b5_4a32_d192_ed03))
}

#[inline]
fn apply(x: u64, (a, b): (u64, u64)) -> u64 {
    mix64(mix64(x ^ a).wrapping_add(b))
}

pub fn minhash_signature(set: &ShingleSet, k: usize, seed: u64) -> MinHashSignature {
    let keys: Vec<(u64, u64)> = (0..k).map(|i| hash_keys(seed, i)).collect();
    let mut values = vec![u64::MAX; k];
    for &x in &set.hashes {
        for (v, &key) in values.iter_mut().zip(&keys) {
            *v = (*v).min(apply(x, key));
        }
    }
    MinHashSignature {
        values,
        params_id: params_id(k, set.n, seed),
    }
}

pub fn estimate_jaccard(a: &MinHashSignature, b: &MinHashSignature) -> Result<f64, DedupError> {
    if a.params_id != b.params_id || a.values.len() != b.values.len() {
        return Err(DedupError::ParamsMismatch);
    }
    if a.values.is_empty() {
        return Ok(1.0);
    }
    let agree = a.values.iter().zip(&b.values).filter(|(x, y)| x == y).count();
    Ok(agree as f64 / a.values.len() as f64)
}

pub fn exact_jaccard(a: &ShingleSet, b: &ShingleSet) -> f64 {
    if a.is_empty() && b.is_empty() {
        return 1.0;
    }
    let (mut i, mut j, mut inter) = (0, 0, 0usize);
    while i < a.hashes.len() && j < b.hashes.len() {
        match a.hashes[i].cmp(&b.hashes[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                inter += 1;
                i += 1;
                j += 1;
            }
        }
    }
    inter as f64 / (a.len() + b.len() - inter) as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BandKey {
    pub band: u32,
    pub hash: u64,
}

pub fn band_partition(
    sig: &MinHashSignature,
    bands: usize,
    rows: usize,
) -> Result<Vec<BandKey>, DedupError> {
    let k = sig.values.len();
    if bands == 0 || rows == 0 || bands * rows != k {
        return Err(DedupError::BandShape { k, bands, rows });
    }
    let mut bytes = Vec::with_capacity(rows * 8);
    Ok(sig
        .values
        .chunks_exact(rows)
        .enumerate()
        .map(|(i, chunk)| {
            bytes.clear();
            for v in chunk {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
            BandKey {
                band: i as u32,
                hash: xxh3_64_with_seed(&bytes, i as u64),
            }
        })
        .collect())
}
