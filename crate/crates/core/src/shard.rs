//! Order-preserving packing of documents into fixed-size gzip JSONL shards.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use flate2::read::MultiGzDecoder;
use flate2::write::GzEncoder;
use flate2::{Compression, GzBuilder};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::doc::DocId;
use crate::markdown::Document;

pub const DEFAULT_TARGET_BYTES: u64 = 256 * 1024 * 1024;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShardAssignment {
    pub shard_id: u32,
    pub doc_ids: Vec<DocId>,
    pub byte_size: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShardPlan {
    pub target_bytes: u64,
    pub assignments: Vec<ShardAssignment>,
}

/// Greedy sequential packing: a shard is closed when the next document
/// would push it past `target_bytes`. A document larger than the target
/// lands in a shard of its own.
pub fn plan_shards<'a>(
    docs: impl IntoIterator<Item = (&'a DocId, u64)>,
    target_bytes: u64,
) -> ShardPlan {
    assert!(target_bytes > 0, "target_bytes must be positive");
    let mut assignments: Vec<ShardAssignment> = Vec::new();
    let mut current = ShardAssignment {
        shard_id: 0,
        doc_ids: Vec::new(),
        byte_size: 0,
    };
    for (id, size) in docs {
        if !current.doc_ids.is_empty() && current.byte_size + size > target_bytes {
            let next_id = current.shard_id + 1;
            assignments.push(std::mem::replace(
                &mut current,
                ShardAssignment {
                    shard_id: next_id,
                    doc_ids: Vec::new(),
                    byte_size: 0,
                },
            ));
        }
        current.doc_ids.push(id.clone());
        current.byte_size += size;
    }
    if !current.doc_ids.is_empty() {
        assignments.push(current);
    }
    ShardPlan {
        target_bytes,
        assignments,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShardManifest {
    pub shard_id: u32,
    pub file_name: String,
    pub doc_count: u64,
    /// Uncompressed markdown bytes.
    pub byte_size: u64,
    /// Hex SHA-256 of the file on disk.
    pub checksum: String,
}

#[derive(Debug, thiserror::Error)]
pub enum ShardError {
    #[error("document {0} is not in the store")]
    MissingDocument(DocId),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub fn shard_file_name(shard_id: u32) -> String {
    format!("shard-{shard_id:06}.jsonl.gz")
}

/// Gzip encoder with a fixed header so identical input yields identical
/// bytes.
fn deterministic_gzip<W: Write>(w: W) -> GzEncoder<W> {
    GzBuilder::new().mtime(0).write(w, Compression::default())
}

/// Writes one shard into `dir` and returns its manifest.
pub fn write_shard(
    entry: &ShardAssignment,
    store: &HashMap<DocId, Document>,
    dir: &Path,
) -> Result<ShardManifest, ShardError> {
    let docs: Vec<&Document> = entry
        .doc_ids
        .iter()
        .map(|id| store.get(id).ok_or_else(|| ShardError::MissingDocument(id.clone())))
        .collect::<Result<_, _>>()?;

    let file_name = shard_file_name(entry.shard_id);
    let path = dir.join(&file_name);
    let tmp = dir.join(format!(".{file_name}.tmp"));
    let mut gz = deterministic_gzip(BufWriter::new(File::create(&tmp)?));
    let mut byte_size = 0;
    for doc in &docs {
        serde_json::to_writer(&mut gz, doc).map_err(std::io::Error::from)?;
        gz.write_all(b"\n")?;
        byte_size += doc.byte_size();
    }
    gz.finish()?.into_inner().map_err(|e| e.into_error())?.sync_all()?;
    std::fs::rename(&tmp, &path)?;

    Ok(ShardManifest {
        shard_id: entry.shard_id,
        file_name,
        doc_count: docs.len() as u64,
        byte_size,
        checksum: sha256_file(&path)?,
    })
}

pub fn sha256_file(path: &Path) -> std::io::Result<String> {
    let mut hasher = Sha256::new();
    let mut f = File::open(path)?;
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = f.read(&mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex::encode(hasher.finalize()))
}

/// Reads every decodable document line of a shard file; stops at the first
/// undecodable byte or line.
pub fn read_shard(path: &Path) -> std::io::Result<Vec<Document>> {
    let reader = BufReader::new(MultiGzDecoder::new(File::open(path)?));
    let mut docs = Vec::new();
    for line in reader.lines() {
        let Ok(line) = line else { break };
        match serde_json::from_str(&line) {
            Ok(doc) => docs.push(doc),
            Err(_) => break,
        }
    }
    Ok(docs)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShardCheck {
    pub ok: bool,
    /// Any of "missing", "checksum", "doc_count", "byte_size".
    pub reasons: Vec<&'static str>,
}

pub fn verify_shard(manifest: &ShardManifest, path: &Path) -> ShardCheck {
    let mut reasons = Vec::new();
    match sha256_file(path) {
        Err(_) => reasons.push("missing"),
        Ok(sum) => {
            if sum != manifest.checksum {
                reasons.push("checksum");
            }
            let docs = read_shard(path).unwrap_or_default();
            if docs.len() as u64 != manifest.doc_count {
                reasons.push("doc_count");
            }
            if docs.iter().map(Document::byte_size).sum::<u64>() != manifest.byte_size {
                reasons.push("byte_size");
            }
        }
    }
    ShardCheck {
        ok: reasons.is_empty(),
        reasons,
    }
}
