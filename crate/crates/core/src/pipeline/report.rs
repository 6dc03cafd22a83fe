use std::collections::BTreeMap;
use std::fmt::Write as _;

use super::{Counts, RunManifest, Stage};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FunnelRow {
    pub stage: String,
    pub counts: Counts,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub run_id: String,
    pub config_hash: String,
    pub funnel: Vec<FunnelRow>,
    /// Duplicates removed over documents entering dedup.
    pub dedup_rate: f64,
    pub cluster_sizes: BTreeMap<u64, u64>,
    pub bucket_tokens: BTreeMap<String, u64>,
}

/// Summarises a run manifest: per-stage funnel, dedup cluster sizes and
/// per-bucket mixture tokens. Stages that never ran show zeros.
pub fn report_stats(m: &RunManifest) -> Report {
    let funnel: Vec<FunnelRow> = Stage::ALL[..6]
        .iter()
        .map(|s| FunnelRow {
            stage: s.as_str().to_string(),
            counts: m.stage(s.as_str()).map(|r| r.totals.clone()).unwrap_or_default(),
        })
        .collect();
    let dedup = m.stage(Stage::Dedup.as_str());
    let dedup_rate = dedup
        .map(|r| &r.totals)
        .filter(|c| c.docs_in > 0)
        .map_or(0.0, |c| c.drops.get("duplicate").copied().unwrap_or(0) as f64 / c.docs_in as f64);
    Report {
        run_id: m.run_id.clone(),
        config_hash: m.config_hash.clone(),
        funnel,
        dedup_rate,
        cluster_sizes: dedup.map(|r| r.cluster_sizes.clone()).unwrap_or_default(),
        bucket_tokens: m
            .stage(Stage::Mix.as_str())
            .map(|r| r.bucket_tokens.clone())
            .unwrap_or_default(),
    }
}

impl Report {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let hash = self.config_hash.get(..12).unwrap_or(&self.config_hash);
        let _ = writeln!(s, "run {} (config {hash})", self.run_id);
        let _ = writeln!(s);
        let _ = writeln!(
            s,
            "{:<8} {:>10} {:>10} {:>10} {:>14} {:>14}",
            "stage", "docs_in", "docs_out", "dropped", "bytes_out", "tokens_out"
        );
        for row in &self.funnel {
            let c = &row.counts;
            let _ = writeln!(
                s,
                "{:<8} {:>10} {:>10} {:>10} {:>14} {:>14}",
                row.stage,
                c.docs_in,
                c.docs_out,
                c.dropped(),
                c.bytes_out,
                c.tokens_out
            );
        }
        let drops: Vec<&FunnelRow> = self.funnel.iter().filter(|r| !r.counts.drops.is_empty()).collect();
        if !drops.is_empty() {
            let _ = writeln!(s, "\ndrop reasons");
            for row in drops {
                for (reason, n) in &row.counts.drops {
                    let _ = writeln!(s, "  {:<8} {:<26} {:>10}", row.stage, reason, n);
                }
            }
        }
        let _ = writeln!(s, "\ndedup rate {:.4}", self.dedup_rate);
        if !self.cluster_sizes.is_empty() {
            let _ = writeln!(s, "cluster sizes");
            for (size, n) in &self.cluster_sizes {
                let _ = writeln!(s, "  {size:>6} {n:>10}");
            }
        }
        if !self.bucket_tokens.is_empty() {
            let total: u64 = self.bucket_tokens.values().sum();
            let _ = writeln!(s, "\nmixture tokens");
            for (name, t) in &self.bucket_tokens {
                let share = if total == 0 { 0.0 } else { *t as f64 / total as f64 };
                let _ = writeln!(s, "  {name:<12} {t:>14} {:>8.4}", share);
            }
        }
        s
    }

    /// One row per stage and drop reason; the `reason` column is empty on
    /// the stage total row.
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> std::io::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["stage", "reason", "docs_in", "docs_out", "dropped", "bytes_out", "tokens_out"])?;
        for row in &self.funnel {
            let c = &row.counts;
            out.write_record([
                row.stage.clone(),
                String::new(),
                c.docs_in.to_string(),
                c.docs_out.to_string(),
                c.dropped().to_string(),
                c.bytes_out.to_string(),
                c.tokens_out.to_string(),
            ])?;
            for (reason, n) in &c.drops {
                out.write_record([row.stage.as_str(), reason, "", "", &n.to_string(), "", ""])?;
            }
        }
        out.flush()?;
        Ok(())
    }
}
