use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use super::{exact_jaccard, BandKey, DedupError, DedupMode, ShingleSet};
use crate::doc::DocId;

/// Unordered pairs of document indices, stored as `(low, high)`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Candidates {
    pub pairs: BTreeSet<(u32, u32)>,
    /// Buckets that exceeded the configured size cap (expanded anyway).
    pub oversized_buckets: usize,
}

/// Groups documents by band key and expands every bucket into pairs.
/// `band_keys[d]` holds the keys of document `d`.
pub fn build_candidate_pairs(band_keys: &[Vec<BandKey>], bucket_cap: usize) -> Candidates {
    let bands = band_keys.iter().map(Vec::len).max().unwrap_or(0);
    let per_band: Vec<(BTreeSet<(u32, u32)>, usize)> = (0..bands)
        .into_par_iter()
        .map(|band| {
            let mut buckets: HashMap<u64, Vec<u32>> = HashMap::new();
            for (doc, keys) in band_keys.iter().enumerate() {
                if let Some(key) = keys.get(band) {
                    buckets.entry(key.hash).or_default().push(doc as u32);
                }
            }
            let mut pairs = BTreeSet::new();
            let mut oversized = 0;
            for members in buckets.values().filter(|m| m.len() > 1) {
                if members.len() > bucket_cap {
                    oversized += 1;
                }
                for (i, &a) in members.iter().enumerate() {
                    for &b in &members[i + 1..] {
                        pairs.insert((a.min(b), a.max(b)));
                    }
                }
            }
            (pairs, oversized)
        })
        .collect();

    let mut out = Candidates::default();
    for (pairs, oversized) in per_band {
        out.pairs.extend(pairs);
        out.oversized_buckets += oversized;
    }
    if out.oversized_buckets > 0 {
        log::warn!(
            "{} LSH buckets exceeded {bucket_cap} members",
            out.oversized_buckets
        );
    }
    out
}

/// Disjoint-set forest with union by size and path compression.
#[derive(Debug, Clone)]
pub struct DisjointSet {
    parent: Vec<u32>,
    size: Vec<u32>,
}

impl DisjointSet {
    pub fn new(n: usize) -> Self {
        Self {
            parent: (0..n as u32).collect(),
            size: vec![1; n],
        }
    }

    pub fn len(&self) -> usize {
        self.parent.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parent.is_empty()
    }

    pub fn find(&mut self, x: u32) -> u32 {
        let mut root = x;
        while self.parent[root as usize] != root {
            root = self.parent[root as usize];
        }
        let mut cur = x;
        while self.parent[cur as usize] != root {
            let next = self.parent[cur as usize];
            self.parent[cur as usize] = root;
            cur = next;
        }
        root
    }

    pub fn union(&mut self, a: u32, b: u32) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        let (big, small) = if self.size[ra as usize] >= self.size[rb as usize] {
            (ra, rb)
        } else {
            (rb, ra)
        };
        self.parent[small as usize] = big;
        self.size[big as usize] += self.size[small as usize];
        true
    }
}

/// Unions candidate pairs into a forest over `n` documents. In verify mode
/// `shingles` must hold one set per document.
pub fn cluster_duplicates(
    n: usize,
    candidates: &Candidates,
    mode: DedupMode,
    threshold: f64,
    shingles: Option<&[ShingleSet]>,
) -> Result<DisjointSet, DedupError> {
    let mut forest = DisjointSet::new(n);
    let accepted: Vec<(u32, u32)> = match mode {
        DedupMode::Approx => candidates.pairs.iter().copied().collect(),
        DedupMode::Verify => {
            let sets = shingles.filter(|s| s.len() == n).ok_or(DedupError::MissingShingles)?;
            let pairs: Vec<(u32, u32)> = candidates.pairs.iter().copied().collect();
            pairs
                .into_par_iter()
                .filter(|&(a, b)| exact_jaccard(&sets[a as usize], &sets[b as usize]) >= threshold)
                .collect()
        }
    };
    for (a, b) in accepted {
        forest.union(a, b);
    }
    Ok(forest)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Cluster {
    pub survivor: DocId,
    pub members: Vec<DocId>,
}

/// The partition induced by a forest, with members sorted and clusters
/// ordered by survivor.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DuplicateClusters {
    pub clusters: Vec<Cluster>,
}

impl DuplicateClusters {
    pub fn from_forest(ids: &[DocId], forest: &mut DisjointSet) -> Self {
        assert_eq!(ids.len(), forest.len());
        let mut groups: HashMap<u32, Vec<DocId>> = HashMap::new();
        for (i, id) in ids.iter().enumerate() {
            groups.entry(forest.find(i as u32)).or_default().push(id.clone());
        }
        let mut clusters: Vec<Cluster> = groups
            .into_values()
            .map(|mut members| {
                members.sort();
                Cluster {
                    survivor: members[0].clone(),
                    members,
                }
            })
            .collect();
        clusters.sort_by(|a, b| a.survivor.cmp(&b.survivor));
        Self { clusters }
    }

    /// Maps every document to its cluster's survivor.
    pub fn survivor_of(&self) -> BTreeMap<&DocId, &DocId> {
        self.clusters
            .iter()
            .flat_map(|c| c.members.iter().map(move |m| (m, &c.survivor)))
            .collect()
    }

    pub fn removed(&self) -> usize {
        self.clusters.iter().map(|c| c.members.len() - 1).sum()
    }
}

pub fn select_survivors(clusters: &DuplicateClusters) -> BTreeSet<DocId> {
    clusters.clusters.iter().map(|c| c.survivor.clone()).collect()
}

/// Writes clusters with more than one member as JSONL.
pub fn write_clusters_jsonl<W: Write>(clusters: &DuplicateClusters, mut w: W) -> std::io::Result<()> {
    for c in clusters.clusters.iter().filter(|c| c.members.len() > 1) {
        serde_json::to_writer(&mut w, c)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}
