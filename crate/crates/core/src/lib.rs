//! Building a deduplicated, quality-filtered, uniformly sharded Japanese
//! pre-training corpus from CommonCrawl WARC archives, and planning
//! dataset mixtures to per-source token ratios.

pub mod dedup;
pub mod doc;
pub mod filter;
pub mod ingest;
pub mod markdown;
pub mod mix;
pub mod pipeline;
pub mod shard;
pub mod synth;

pub use doc::DocId;
