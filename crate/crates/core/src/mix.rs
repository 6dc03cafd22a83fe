//! Per-bucket token accounting and mixture sampling plans.

use std::collections::{BTreeMap, HashMap};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use xxhash_rust::xxh3::xxh3_64;

use crate::doc::DocId;
use crate::markdown::Document;

pub trait TokenCounter: Send + Sync {
    fn count(&self, text: &str) -> u64;
}

/// Counts Unicode scalar values.
#[derive(Debug, Clone, Copy, Default)]
pub struct CharCounter;

impl TokenCounter for CharCounter {
    fn count(&self, text: &str) -> u64 {
        text.chars().count() as u64
    }
}

pub fn count_tokens(doc: &Document, counter: &dyn TokenCounter) -> u64 {
    counter.count(&doc.markdown)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BucketStats {
    pub bucket_name: String,
    pub available_tokens: u64,
    pub doc_count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixSpec {
    pub targets: Vec<(String, f64)>,
    pub budget_tokens: u64,
    pub max_epochs: f64,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MixError {
    #[error("ratios must be non-negative and sum to 1, got sum {0}")]
    InvalidRatios(f64),
    #[error("max_epochs must be at least 1, got {0}")]
    InvalidEpochs(f64),
    #[error("bucket {0:?} appears more than once in the targets")]
    DuplicateBucket(String),
    #[error("target bucket {0:?} has no stats")]
    UnknownBucket(String),
    #[error("plan is infeasible")]
    Infeasible,
    #[error("bucket {0:?} holds fewer tokens than its stats claim")]
    ExhaustedBucket(String),
}

impl MixSpec {
    pub fn validate(&self) -> Result<(), MixError> {
        let sum: f64 = self.targets.iter().map(|(_, r)| r).sum();
        if self.targets.iter().any(|(_, r)| !(*r >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
            return Err(MixError::InvalidRatios(sum));
        }
        if !(self.max_epochs >= 1.0) {
            return Err(MixError::InvalidEpochs(self.max_epochs));
        }
        let mut seen = std::collections::HashSet::new();
        for (name, _) in &self.targets {
            if !seen.insert(name) {
                return Err(MixError::DuplicateBucket(name.clone()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Draw {
    pub bucket_name: String,
    pub ratio: f64,
    pub tokens_drawn: u64,
    pub available_tokens: u64,
    pub epochs_used: f64,
    /// Tokens missing beyond `max_epochs` passes; 0 when the bucket suffices.
    pub shortfall: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixPlan {
    pub budget_tokens: u64,
    pub max_epochs: f64,
    pub feasible: bool,
    pub draws: Vec<Draw>,
}

/// Splits `total` in proportion to `weights` so the parts sum to `total`
/// exactly: floors first, then one extra unit to the largest remainders
/// (earlier entries win ties).
pub fn largest_remainder(total: u64, weights: &[f64]) -> Vec<u64> {
    let exact: Vec<f64> = weights.iter().map(|w| w * total as f64).collect();
    let mut parts: Vec<u64> = exact.iter().map(|x| x.floor() as u64).collect();
    let assigned: u64 = parts.iter().sum();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = exact[a] - exact[a].floor();
        let rb = exact[b] - exact[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    if assigned <= total {
        for &i in order.iter().cycle().take((total - assigned) as usize) {
            parts[i] += 1;
        }
    } else {
        // only reachable through float error on huge totals
        for &i in order.iter().rev().cycle().take((assigned - total) as usize) {
            parts[i] = parts[i].saturating_sub(1);
        }
    }
    parts
}

pub fn plan_mixture(stats: &[BucketStats], spec: &MixSpec) -> Result<MixPlan, MixError> {
    spec.validate()?;
    let by_name: HashMap<&str, &BucketStats> =
        stats.iter().map(|s| (s.bucket_name.as_str(), s)).collect();
    for (name, _) in &spec.targets {
        if !by_name.contains_key(name.as_str()) {
            return Err(MixError::UnknownBucket(name.clone()));
        }
    }
    let ratios: Vec<f64> = spec.targets.iter().map(|(_, r)| *r).collect();
    let quotas = largest_remainder(spec.budget_tokens, &ratios);

    let draws: Vec<Draw> = spec
        .targets
        .iter()
        .zip(quotas)
        .map(|((name, ratio), drawn)| {
            let available = by_name[name.as_str()].available_tokens;
            let ceiling = (spec.max_epochs * available as f64).floor() as u64;
            let epochs_used = if drawn == 0 {
                0.0
            } else if available == 0 {
                f64::INFINITY
            } else {
                drawn as f64 / available as f64
            };
            Draw {
                bucket_name: name.clone(),
                ratio: *ratio,
                tokens_drawn: drawn,
                available_tokens: available,
                epochs_used,
                shortfall: drawn.saturating_sub(ceiling),
            }
        })
        .collect();
    Ok(MixPlan {
        budget_tokens: spec.budget_tokens,
        max_epochs: spec.max_epochs,
        feasible: draws.iter().all(|d| d.shortfall == 0),
        draws,
    })
}

/// Documents of one bucket with their token counts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BucketInventory {
    pub bucket_name: String,
    pub docs: Vec<(DocId, u64)>,
}

impl BucketInventory {
    pub fn total_tokens(&self) -> u64 {
        self.docs.iter().map(|(_, t)| t).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sample {
    pub bucket: String,
    pub doc_id: DocId,
    pub tokens: u64,
}

fn rng_for(seed: u64, label: &str, pass: u64) -> ChaCha20Rng {
    let mut bytes = seed.to_le_bytes().to_vec();
    bytes.extend_from_slice(&pass.to_le_bytes());
    bytes.extend_from_slice(label.as_bytes());
    ChaCha20Rng::seed_from_u64(xxh3_64(&bytes))
}

/// Draws documents from each bucket in seeded random order until its quota
/// is met, reshuffling for every further pass, then interleaves all
/// buckets with a seeded shuffle.
pub fn realize_mixture(
    plan: &MixPlan,
    inventories: &[BucketInventory],
    seed: u64,
) -> Result<Vec<Sample>, MixError> {
    if !plan.feasible {
        return Err(MixError::Infeasible);
    }
    let by_name: BTreeMap<&str, &BucketInventory> =
        inventories.iter().map(|b| (b.bucket_name.as_str(), b)).collect();

    let mut out = Vec::new();
    for draw in &plan.draws {
        if draw.tokens_drawn == 0 {
            continue;
        }
        let inv = by_name
            .get(draw.bucket_name.as_str())
            .ok_or_else(|| MixError::ExhaustedBucket(draw.bucket_name.clone()))?;
        if inv.total_tokens() < draw.available_tokens || inv.total_tokens() == 0 {
            return Err(MixError::ExhaustedBucket(draw.bucket_name.clone()));
        }
        let mut taken = 0u64;
        let mut pass = 0u64;
        'passes: loop {
            let mut order: Vec<&(DocId, u64)> = inv.docs.iter().collect();
            order.shuffle(&mut rng_for(seed, &draw.bucket_name, pass));
            for (id, tokens) in order {
                if taken >= draw.tokens_drawn {
                    break 'passes;
                }
                out.push(Sample {
                    bucket: draw.bucket_name.clone(),
                    doc_id: id.clone(),
                    tokens: *tokens,
                });
                taken += tokens;
            }
            if taken >= draw.tokens_drawn {
                break;
            }
            pass += 1;
        }
    }
    out.shuffle(&mut rng_for(seed, "\0interleave", 0));
    Ok(out)
}
