//! Stage orchestration: run directories, manifests, resume and reports.
//!
//! A run lives in `<output>/<run_id>/` and is described by `manifest.json`.
//! Ingest, convert and filter work per archive; dedup computes signatures
//! per archive and then clusters globally once every dump has been
//! filtered; shard writes shards in parallel; mix samples the final shards
//! into a mixture.

mod config;
mod io;
mod manifest;
mod report;
mod stages;

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Mutex;
use std::time::Instant;

pub use config::{stage_seed, Config, IngestConfig, MixBucket, MixConfig, ShardConfig};
pub use manifest::{
    atomic_write, read_manifest, write_manifest, ArchiveEntry, Counts, DumpEntry, RunManifest,
    StageRecord, StageStatus,
};
pub use report::{report_stats, FunnelRow, Report};

use crate::filter::ConfigError;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Stage {
    Ingest,
    Convert,
    Filter,
    Dedup,
    Shard,
    Mix,
    Report,
}

impl Stage {
    pub const ALL: [Stage; 7] = [
        Stage::Ingest,
        Stage::Convert,
        Stage::Filter,
        Stage::Dedup,
        Stage::Shard,
        Stage::Mix,
        Stage::Report,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Convert => "convert",
            Stage::Filter => "filter",
            Stage::Dedup => "dedup",
            Stage::Shard => "shard",
            Stage::Mix => "mix",
            Stage::Report => "report",
        }
    }

    fn previous(&self) -> Option<Stage> {
        match self {
            Stage::Ingest | Stage::Report => None,
            Stage::Convert => Some(Stage::Ingest),
            Stage::Filter => Some(Stage::Convert),
            Stage::Dedup => Some(Stage::Filter),
            Stage::Shard => Some(Stage::Dedup),
            Stage::Mix => Some(Stage::Shard),
        }
    }
}

impl FromStr for Stage {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Stage::ALL
            .into_iter()
            .find(|st| st.as_str() == s)
            .ok_or_else(|| format!("unknown stage {s:?}"))
    }
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("config changed since the run started (run {expected}, now {found})")]
    ConfigMismatch { expected: String, found: String },
    #[error("missing input: {0}")]
    MissingInput(String),
    #[error("data error: {0}")]
    Data(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl PipelineError {
    /// Process exit code for the CLI.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) | PipelineError::ConfigMismatch { .. } => 2,
            PipelineError::MissingInput(_) => 3,
            PipelineError::Data(_) => 4,
            PipelineError::Io(_) => 1,
        }
    }
}

pub type Result<T, E = PipelineError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunOptions {
    pub workers: usize,
    /// Stop after this many work units, leaving the rest for a resume.
    pub max_units: Option<usize>,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            workers: 1,
            max_units: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StageOutcome {
    Completed(Counts),
    /// Every unit was already done, or the stage is not configured.
    Skipped,
    Interrupted { done: usize, remaining: usize },
}

/// An open run directory.
pub struct Run {
    dir: PathBuf,
    config: Config,
    manifest: Mutex<RunManifest>,
}

impl Run {
    /// Starts a new run under `output_root`. Without an explicit id the id
    /// is a UTC timestamp plus the config-hash prefix.
    pub fn create(output_root: &Path, run_id: Option<&str>, config: Config) -> Result<Run> {
        let hash = config.hash();
        let run_id = match run_id {
            Some(id) => id.to_string(),
            None => format!("{}-{}", chrono::Utc::now().format("%Y%m%dT%H%M%SZ"), &hash[..8]),
        };
        if run_id.is_empty() || run_id.contains(['/', '\\']) || run_id.starts_with('.') {
            return Err(ConfigError::new("run_id", "must be a plain directory name").into());
        }
        let dir = output_root.join(&run_id);
        if dir.join(MANIFEST_FILE).exists() {
            return Err(ConfigError::new("run_id", format!("run {run_id} already exists")).into());
        }
        std::fs::create_dir_all(&dir)?;
        let run = Run {
            dir,
            config,
            manifest: Mutex::new(RunManifest::new(&run_id, &hash)),
        };
        run.save()?;
        Ok(run)
    }

    /// Reopens an existing run; the config must hash to the recorded value.
    pub fn open(output_root: &Path, run_id: &str, config: Config) -> Result<Run> {
        let dir = output_root.join(run_id);
        let path = dir.join(MANIFEST_FILE);
        if !path.exists() {
            return Err(PipelineError::MissingInput(format!("no run {run_id} in {}", output_root.display())));
        }
        let manifest = read_manifest(&path)?;
        let found = config.hash();
        if manifest.config_hash != found {
            return Err(PipelineError::ConfigMismatch {
                expected: manifest.config_hash,
                found,
            });
        }
        Ok(Run {
            dir,
            config,
            manifest: Mutex::new(manifest),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn id(&self) -> String {
        self.manifest().run_id
    }

    pub fn config(&self) -> &Config {
        &self.config
    }

    pub fn manifest(&self) -> RunManifest {
        self.manifest.lock().unwrap().clone()
    }

    fn save(&self) -> std::io::Result<()> {
        let m = self.manifest.lock().unwrap();
        write_manifest(&self.dir.join(MANIFEST_FILE), &m)
    }

    fn update<T>(&self, f: impl FnOnce(&mut RunManifest) -> T) -> std::io::Result<T> {
        let mut m = self.manifest.lock().unwrap();
        let out = f(&mut m);
        write_manifest(&self.dir.join(MANIFEST_FILE), &m)?;
        Ok(out)
    }

    /// Records a finished work unit.
    fn mark(&self, stage: Stage, unit: &str, counts: Counts) -> std::io::Result<()> {
        self.update(|m| {
            let rec = m.stage_mut(stage.as_str());
            rec.units.insert(unit.to_string(), counts);
            if rec.status == StageStatus::Pending {
                rec.status = StageStatus::Partial;
            }
        })
    }

    /// Registers the archives of new dumps. Dump labels must be new, and
    /// no dump may be added once deduplication has started.
    pub fn add_inputs(&self, dumps: Vec<(String, Vec<PathBuf>)>) -> Result<()> {
        let m = self.manifest();
        if m.stage(Stage::Dedup.as_str()).is_some_and(|s| !s.units.is_empty()) {
            return Err(PipelineError::Data("cannot add dumps after dedup has started".into()));
        }
        let mut labels: BTreeSet<String> = m.dumps.iter().map(|d| d.label.clone()).collect();
        let mut entries = Vec::new();
        for (label, archives) in dumps {
            if label.is_empty() || label.contains('/') {
                return Err(ConfigError::new("dump_label", format!("invalid label {label:?}")).into());
            }
            if !labels.insert(label.clone()) {
                return Err(ConfigError::new("dump_label", format!("dump {label} already in run")).into());
            }
            let archives = archives
                .iter()
                .enumerate()
                .map(|(i, p)| {
                    let p = std::path::absolute(p).unwrap_or_else(|_| p.clone());
                    ArchiveEntry {
                        file: i as u32,
                        path: p.display().to_string(),
                    }
                })
                .collect();
            entries.push(DumpEntry { label, archives });
        }
        self.update(|m| {
            m.dumps.extend(entries);
            m.dumps.sort_by(|a, b| a.label.cmp(&b.label));
        })?;
        Ok(())
    }

    fn archive_units(&self) -> Vec<stages::ArchiveUnit> {
        let m = self.manifest.lock().unwrap();
        m.dumps
            .iter()
            .flat_map(|d| {
                d.archives.iter().map(|a| stages::ArchiveUnit {
                    dump: d.label.clone(),
                    file: a.file,
                    path: PathBuf::from(&a.path),
                })
            })
            .collect()
    }

    /// All work units a stage must finish, as far as they are known yet.
    fn expected_units(&self, stage: Stage) -> Vec<String> {
        let archives = || self.archive_units().iter().map(|u| u.key()).collect::<Vec<_>>();
        match stage {
            Stage::Ingest | Stage::Convert | Stage::Filter => archives(),
            Stage::Dedup => {
                let mut units = archives();
                units.push(stages::CLUSTER_UNIT.to_string());
                units
            }
            Stage::Shard => stages::shard_units(self),
            Stage::Mix => {
                if self.config.mix.is_some() {
                    vec![stages::MIX_UNIT.to_string()]
                } else {
                    Vec::new()
                }
            }
            Stage::Report => Vec::new(),
        }
    }

    fn pending_units(&self, stage: Stage) -> Vec<String> {
        let m = self.manifest();
        self.expected_units(stage)
            .into_iter()
            .filter(|u| !m.is_done(stage.as_str(), u))
            .collect()
    }

    pub fn is_complete(&self, stage: Stage) -> bool {
        let expected = self.expected_units(stage);
        match stage {
            Stage::Mix if expected.is_empty() => true,
            _ => !expected.is_empty() && self.pending_units(stage).is_empty(),
        }
    }
}

/// Finds input archives. A directory that directly holds `.warc` /
/// `.warc.gz` files is one dump, labelled `label` or the directory name;
/// otherwise every subdirectory holding archives is a dump named after it.
pub fn discover_inputs(dir: &Path, label: Option<&str>) -> Result<Vec<(String, Vec<PathBuf>)>> {
    let listing = |d: &Path| -> std::io::Result<(Vec<PathBuf>, Vec<PathBuf>)> {
        let mut files = Vec::new();
        let mut dirs = Vec::new();
        for entry in std::fs::read_dir(d)? {
            let path = entry?.path();
            if path.is_dir() {
                dirs.push(path);
            } else if is_archive(&path) {
                files.push(path);
            }
        }
        files.sort();
        dirs.sort();
        Ok((files, dirs))
    };
    if !dir.is_dir() {
        return Err(PipelineError::MissingInput(format!("{} is not a directory", dir.display())));
    }
    let (files, dirs) = listing(dir)?;
    if !files.is_empty() {
        let name = match label {
            Some(l) => l.to_string(),
            None => dir_name(dir),
        };
        return Ok(vec![(name, files)]);
    }
    if label.is_some() {
        return Err(ConfigError::new(
            "dump_label",
            "only valid when the input directory holds archives directly",
        )
        .into());
    }
    let mut dumps = Vec::new();
    for sub in dirs {
        let (files, _) = listing(&sub)?;
        if !files.is_empty() {
            dumps.push((dir_name(&sub), files));
        }
    }
    if dumps.is_empty() {
        return Err(PipelineError::MissingInput(format!("no WARC files under {}", dir.display())));
    }
    Ok(dumps)
}

fn is_archive(path: &Path) -> bool {
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("");
    name.ends_with(".warc") || name.ends_with(".warc.gz")
}

fn dir_name(dir: &Path) -> String {
    std::path::absolute(dir)
        .ok()
        .and_then(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
        .unwrap_or_else(|| "dump".to_string())
}

/// Where a reopened run stands: the earliest stage with unfinished work
/// and its unfinished units. `stage` is `None` once everything through
/// mix is done.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Continuation {
    pub stage: Option<Stage>,
    pub units: Vec<String>,
}

pub fn resume_run(output_root: &Path, run_id: &str, config: Config) -> Result<(Run, Continuation)> {
    let run = Run::open(output_root, run_id, config)?;
    let cont = continuation(&run);
    Ok((run, cont))
}

pub fn continuation(run: &Run) -> Continuation {
    for stage in &Stage::ALL[..6] {
        let pending = run.pending_units(*stage);
        if !pending.is_empty() {
            return Continuation {
                stage: Some(*stage),
                units: pending,
            };
        }
    }
    Continuation {
        stage: None,
        units: Vec::new(),
    }
}

/// Remaining unit allowance for one invocation.
pub(crate) struct Budget(Option<usize>);

impl Budget {
    fn take(&mut self, wanted: usize) -> usize {
        match &mut self.0 {
            None => wanted,
            Some(left) => {
                let n = wanted.min(*left);
                *left -= n;
                n
            }
        }
    }
}

fn require_complete(run: &Run, stage: Stage, before: Stage) -> Result<()> {
    if run.is_complete(stage) {
        return Ok(());
    }
    if stage == Stage::Filter {
        let m = run.manifest();
        let incomplete: Vec<String> = m
            .dumps
            .iter()
            .filter(|d| {
                d.archives.iter().any(|a| {
                    !m.is_done(stage.as_str(), &stages::archive_key(&d.label, a.file))
                })
            })
            .map(|d| d.label.clone())
            .collect();
        if !incomplete.is_empty() {
            return Err(PipelineError::MissingInput(format!(
                "{before} needs every dump filtered; unfinished: {}",
                incomplete.join(", ")
            )));
        }
    }
    Err(PipelineError::MissingInput(format!("{before} needs a complete {stage} stage")))
}

/// Runs one stage to completion (or until `opts.max_units` units ran).
pub fn run_stage(run: &Run, stage: Stage, opts: &RunOptions) -> Result<StageOutcome> {
    if let Some(prev) = stage.previous() {
        require_complete(run, prev, stage)?;
    }
    if stage == Stage::Ingest && run.archive_units().is_empty() {
        return Err(PipelineError::MissingInput("run has no input archives".into()));
    }
    if stage == Stage::Mix && run.config.mix.is_none() {
        return Ok(StageOutcome::Skipped);
    }
    if stage != Stage::Report && run.is_complete(stage) {
        log::info!("{stage}: already complete, skipping");
        return Ok(StageOutcome::Skipped);
    }

    let started = Instant::now();
    let mut budget = Budget(opts.max_units);
    let workers = opts.workers.max(1);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| PipelineError::Io(std::io::Error::other(e)))?;
    pool.install(|| stages::execute(run, stage, &mut budget))?;

    let complete = stage == Stage::Report || run.is_complete(stage);
    let remaining = run.pending_units(stage).len();
    let elapsed = started.elapsed().as_secs_f64();
    let totals = run.update(|m| {
        let rec = m.stage_mut(stage.as_str());
        rec.wall_time_secs += elapsed;
        rec.totals = stages::stage_totals(stage, rec);
        rec.status = if complete {
            StageStatus::Complete
        } else {
            StageStatus::Partial
        };
        rec.totals.clone()
    })?;
    if complete {
        Ok(StageOutcome::Completed(totals))
    } else {
        let done = run.manifest().stage(stage.as_str()).map_or(0, |s| s.units.len());
        Ok(StageOutcome::Interrupted { done, remaining })
    }
}

/// Runs every stage in order, stopping early if one is interrupted.
pub fn run_all(run: &Run, opts: &RunOptions) -> Result<Vec<(Stage, StageOutcome)>> {
    let mut out = Vec::new();
    let mut left = opts.max_units;
    for stage in Stage::ALL {
        let before = run.manifest().stage(stage.as_str()).map_or(0, |s| s.units.len());
        let outcome = run_stage(run, stage, &RunOptions { max_units: left, ..*opts })?;
        let after = run.manifest().stage(stage.as_str()).map_or(0, |s| s.units.len());
        if let Some(l) = &mut left {
            *l = l.saturating_sub(after - before);
        }
        let stop = matches!(outcome, StageOutcome::Interrupted { .. });
        out.push((stage, outcome));
        if stop {
            break;
        }
    }
    Ok(out)
}
