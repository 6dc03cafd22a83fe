use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use super::io::{read_json, read_jsonl, write_json, write_jsonl, OutputFile};
use super::{report_stats, stage_seed, Budget, Counts, MixBucket, PipelineError, Result, Run, Stage, StageRecord};
use crate::dedup::{
    band_partition, build_candidate_pairs, cluster_duplicates, minhash_signature, params_id,
    read_signatures, select_survivors, shingle_text, write_clusters_jsonl, write_signatures,
    BandKey, DedupError, DedupMode, DuplicateClusters, MinHashSignature, ShingleSet,
    SignatureHeader,
};
use crate::doc::DocId;
use crate::filter::{compute_metrics, evaluate_document, FilterVerdict, NgMatcher};
use crate::ingest::{
    extract_response_document, iterate_warc, ContentKind, LanguageDetector, RatioDetector, RawDocument,
    ReadError,
};
use crate::markdown::{parse_html, to_document, visible_text, Document};
use crate::mix::{
    plan_mixture, realize_mixture, BucketInventory, BucketStats, CharCounter, MixError, TokenCounter,
};
use crate::shard::{plan_shards, read_shard, verify_shard, write_shard, ShardError, ShardManifest, ShardPlan};

pub(crate) const CLUSTER_UNIT: &str = "clusters";
pub(crate) const MIX_UNIT: &str = "mix";
const PLAN_UNIT: &str = "plan";
const SHARD_MANIFEST_UNIT: &str = "manifest";

pub const SHARDS_FILE: &str = "shards.json";

impl From<DedupError> for PipelineError {
    fn from(e: DedupError) -> Self {
        match e {
            DedupError::Io(e) => PipelineError::Io(e),
            other => PipelineError::Data(other.to_string()),
        }
    }
}

impl From<ShardError> for PipelineError {
    fn from(e: ShardError) -> Self {
        match e {
            ShardError::Io(e) => PipelineError::Io(e),
            other => PipelineError::Data(other.to_string()),
        }
    }
}

impl From<MixError> for PipelineError {
    fn from(e: MixError) -> Self {
        PipelineError::Data(e.to_string())
    }
}

#[derive(Debug, Clone)]
pub(crate) struct ArchiveUnit {
    pub dump: String,
    pub file: u32,
    pub path: PathBuf,
}

pub(crate) fn archive_key(dump: &str, file: u32) -> String {
    format!("{dump}/{file:05}")
}

impl ArchiveUnit {
    pub fn key(&self) -> String {
        archive_key(&self.dump, self.file)
    }

    fn output(&self, run: &Run, stage: &str, ext: &str) -> PathBuf {
        run.dir().join(stage).join(&self.dump).join(format!("{:05}.{ext}", self.file))
    }
}

fn filtered(run: &Run, u: &ArchiveUnit) -> PathBuf {
    u.output(run, "filter", "jsonl")
}

pub(crate) fn execute(run: &Run, stage: Stage, budget: &mut Budget) -> Result<()> {
    let (inputs, outputs): (&[&str], &[&str]) = match stage {
        Stage::Ingest => (&["<archives>"], &["ingest/"]),
        Stage::Convert => (&["ingest/"], &["convert/"]),
        Stage::Filter => (&["convert/"], &["filter/"]),
        Stage::Dedup => (
            &["filter/"],
            &["dedup/signatures/", "dedup/clusters.jsonl", "dedup/survivors.txt"],
        ),
        Stage::Shard => (&["filter/", "dedup/survivors.txt"], &["shard/"]),
        Stage::Mix => (&["shard/"], &["mix/plan.json", "mix/samples.jsonl"]),
        Stage::Report => (&[MANIFEST], &["report/report.txt", "report/funnel.csv"]),
    };
    run.update(|m| {
        let rec = m.stage_mut(stage.as_str());
        rec.inputs = inputs.iter().map(|s| s.to_string()).collect();
        rec.outputs = outputs.iter().map(|s| s.to_string()).collect();
    })?;
    match stage {
        Stage::Ingest => per_archive(run, stage, budget, ingest_unit),
        Stage::Convert => per_archive(run, stage, budget, convert_unit),
        Stage::Filter => per_archive(run, stage, budget, filter_unit),
        Stage::Dedup => dedup(run, budget),
        Stage::Shard => shard(run, budget),
        Stage::Mix => mix(run, budget),
        Stage::Report => report(run),
    }
}

const MANIFEST: &str = super::MANIFEST_FILE;

pub(crate) fn stage_totals(stage: Stage, rec: &StageRecord) -> Counts {
    let single = |unit: &str| rec.units.get(unit).cloned().unwrap_or_default();
    match stage {
        Stage::Dedup => single(CLUSTER_UNIT),
        Stage::Mix => single(MIX_UNIT),
        _ => {
            let mut total = Counts::default();
            for c in rec.units.values() {
                total.add(c);
            }
            total
        }
    }
}

fn per_archive(
    run: &Run,
    stage: Stage,
    budget: &mut Budget,
    f: impl Fn(&Run, &ArchiveUnit) -> Result<Counts> + Sync,
) -> Result<()> {
    let m = run.manifest();
    let pending: Vec<ArchiveUnit> = run
        .archive_units()
        .into_iter()
        .filter(|u| !m.is_done(stage.as_str(), &u.key()))
        .collect();
    let n = budget.take(pending.len());
    pending[..n].par_iter().try_for_each(|u| {
        let counts = f(run, u)?;
        debug_assert!(counts.conserves(), "{stage} {}: {counts:?}", u.key());
        run.mark(stage, &u.key(), counts)?;
        log::info!("{stage}: finished {}", u.key());
        Ok(())
    })
}

fn not_found(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            PipelineError::MissingInput(format!("{} not found", path.display()))
        } else {
            e.into()
        }
    }
}

fn ingest_unit(run: &Run, u: &ArchiveUnit) -> Result<Counts> {
    let file = File::open(&u.path).map_err(not_found(&u.path))?;
    let mut reader = iterate_warc(BufReader::with_capacity(1 << 16, file)).map_err(|e| match e {
        ReadError::UnreadableArchive => {
            PipelineError::Data(format!("{} is not a WARC archive", u.path.display()))
        }
        ReadError::Io(e) => e.into(),
    })?;
    let fallbacks = run.config().charset_fallbacks();
    let detector = RatioDetector {
        threshold: run.config().ingest.lang_threshold,
    };
    let mut out = OutputFile::create(&u.output(run, "ingest", "jsonl"))?;
    let mut c = Counts::default();
    for record in reader.by_ref() {
        c.docs_in += 1;
        let id = DocId::new(&u.dump, u.file, record.index);
        let mut raw: RawDocument = match extract_response_document(&record, id, &fallbacks) {
            Ok(raw) => raw,
            Err(drop) => {
                c.drop(drop.as_str(), 1);
                continue;
            }
        };
        // markup and scripts would swamp the letter count of an HTML page
        let score = match raw.content_kind {
            ContentKind::Html => detector.score(&visible_text(&parse_html(&raw.text))),
            ContentKind::Plain => detector.score(&raw.text),
        };
        if !detector.is_japanese(&score) {
            c.drop("non_japanese", 1);
            continue;
        }
        raw.lang_score = score.score;
        c.docs_out += 1;
        c.bytes_out += raw.text.len() as u64;
        c.tokens_out += raw.text.chars().count() as u64;
        out.write_json_line(&raw)?;
    }
    if let Some(e) = reader.take_error() {
        return Err(e.into());
    }
    for (reason, n) in reader.stats().skip_counts() {
        c.docs_in += n;
        c.drop(reason.as_str(), n);
    }
    out.commit()?;
    Ok(c)
}

fn convert_unit(run: &Run, u: &ArchiveUnit) -> Result<Counts> {
    let raws: Vec<RawDocument> = read_jsonl(&u.output(run, "ingest", "jsonl"))?;
    let mut out = OutputFile::create(&u.output(run, "convert", "jsonl"))?;
    let mut c = Counts {
        docs_in: raws.len() as u64,
        ..Default::default()
    };
    let docs: Vec<Option<Document>> = raws.par_iter().map(|r| to_document(r, r.lang_score).ok()).collect();
    for doc in docs {
        match doc {
            Some(doc) => {
                c.docs_out += 1;
                c.bytes_out += doc.byte_size();
                c.tokens_out += doc.char_count;
                out.write_json_line(&doc)?;
            }
            None => c.drop("empty_after_conversion", 1),
        }
    }
    out.commit()?;
    Ok(c)
}

#[derive(Serialize)]
struct Quarantined<'a> {
    document: &'a Document,
    verdict: &'a FilterVerdict,
}

fn filter_unit(run: &Run, u: &ArchiveUnit) -> Result<Counts> {
    let cfg = &run.config().filter;
    let docs: Vec<Document> = read_jsonl(&u.output(run, "convert", "jsonl"))?;
    let matcher = NgMatcher::new(&cfg.ngwords);
    let verdicts: Vec<FilterVerdict> = docs
        .par_iter()
        .map(|d| evaluate_document(&compute_metrics(d, &matcher), cfg))
        .collect();

    let mut out = OutputFile::create(&filtered(run, u))?;
    let mut quarantine = if run.config().quarantine {
        Some(OutputFile::create(&u.output(run, "filter/quarantine", "jsonl"))?)
    } else {
        None
    };
    let mut c = Counts {
        docs_in: docs.len() as u64,
        ..Default::default()
    };
    for (doc, verdict) in docs.iter().zip(&verdicts) {
        if verdict.passed {
            c.docs_out += 1;
            c.bytes_out += doc.byte_size();
            c.tokens_out += doc.char_count;
            out.write_json_line(doc)?;
        } else {
            c.drop(&verdict.failed_rules[0], 1);
            if let Some(q) = &mut quarantine {
                q.write_json_line(&Quarantined { document: doc, verdict })?;
            }
        }
    }
    out.commit()?;
    if let Some(q) = quarantine {
        q.commit()?;
    }
    Ok(c)
}

fn dedup_seed(run: &Run) -> u64 {
    stage_seed(run.config().seed, "dedup")
}

fn signature_header(run: &Run) -> SignatureHeader {
    let p = &run.config().dedup;
    SignatureHeader {
        k: p.num_hashes as u16,
        n: p.shingle_size as u16,
        seed: dedup_seed(run),
    }
}

fn signature_unit(run: &Run, u: &ArchiveUnit) -> Result<Counts> {
    let p = &run.config().dedup;
    let seed = dedup_seed(run);
    let docs: Vec<Document> = read_jsonl(&filtered(run, u))?;
    // documents too short to shingle get no signature and stay singletons
    let sigs: Vec<Option<MinHashSignature>> = docs
        .par_iter()
        .map(|d| {
            shingle_text(&d.markdown, p.shingle_size)
                .ok()
                .map(|s| minhash_signature(&s, p.num_hashes, seed))
        })
        .collect();
    let mut out = OutputFile::create(&u.output(run, "dedup/signatures", "mhsg"))?;
    let entries = docs
        .iter()
        .zip(&sigs)
        .filter_map(|(d, s)| s.as_ref().map(|s| (&d.doc_id, s)));
    write_signatures(&mut out, signature_header(run), entries)?;
    out.commit()?;
    Ok(Counts {
        docs_in: docs.len() as u64,
        docs_out: docs.len() as u64,
        ..Default::default()
    })
}

fn dedup(run: &Run, budget: &mut Budget) -> Result<()> {
    per_archive(run, Stage::Dedup, budget, signature_unit)?;
    let m = run.manifest();
    let all_signed = run
        .archive_units()
        .iter()
        .all(|u| m.is_done(Stage::Dedup.as_str(), &u.key()));
    if !all_signed || m.is_done(Stage::Dedup.as_str(), CLUSTER_UNIT) || budget.take(1) == 0 {
        return Ok(());
    }
    let (counts, sizes) = cluster_all(run)?;
    run.update(|m| m.stage_mut(Stage::Dedup.as_str()).cluster_sizes = sizes)?;
    run.mark(Stage::Dedup, CLUSTER_UNIT, counts)?;
    Ok(())
}

struct DocMeta {
    id: DocId,
    bytes: u64,
    chars: u64,
}

fn cluster_all(run: &Run) -> Result<(Counts, BTreeMap<u64, u64>)> {
    let p = &run.config().dedup;
    let units = run.archive_units();

    let metas: Vec<Vec<DocMeta>> = units
        .par_iter()
        .map(|u| {
            let docs: Vec<Document> = read_jsonl(&filtered(run, u))?;
            Ok(docs
                .into_iter()
                .map(|d| DocMeta {
                    bytes: d.byte_size(),
                    chars: d.char_count,
                    id: d.doc_id,
                })
                .collect())
        })
        .collect::<Result<_>>()?;
    let metas: Vec<DocMeta> = metas.into_iter().flatten().collect();
    let n = metas.len();
    let index: HashMap<&DocId, u32> = metas.iter().enumerate().map(|(i, m)| (&m.id, i as u32)).collect();
    if index.len() != n {
        return Err(PipelineError::Data("duplicate doc ids in filter output".into()));
    }

    let header = signature_header(run);
    let banded: Vec<Vec<(u32, Vec<BandKey>)>> = units
        .par_iter()
        .map(|u| {
            let path = u.output(run, "dedup/signatures", "mhsg");
            let file = File::open(&path).map_err(not_found(&path))?;
            let (h, sigs) = read_signatures(BufReader::new(file))?;
            if h != header || sigs.iter().any(|(_, s)| s.params_id != params_id(p.num_hashes, p.shingle_size, header.seed)) {
                return Err(PipelineError::Data(format!("{} was built with other parameters", path.display())));
            }
            sigs.into_iter()
                .map(|(id, sig)| {
                    let i = *index.get(&id).ok_or_else(|| {
                        PipelineError::Data(format!("signature for unknown doc {id}"))
                    })?;
                    Ok((i, band_partition(&sig, p.bands, p.rows)?))
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    let mut keys: Vec<Vec<BandKey>> = vec![Vec::new(); n];
    for (i, k) in banded.into_iter().flatten() {
        keys[i as usize] = k;
    }
    let candidates = build_candidate_pairs(&keys, p.bucket_cap);
    drop(keys);
    log::info!("dedup: {} candidate pairs over {n} documents", candidates.pairs.len());

    let shingles = match p.mode {
        DedupMode::Approx => None,
        DedupMode::Verify => {
            let needed: HashSet<u32> = candidates.pairs.iter().flat_map(|&(a, b)| [a, b]).collect();
            let found: Vec<Vec<(u32, ShingleSet)>> = units
                .par_iter()
                .map(|u| {
                    let docs: Vec<Document> = read_jsonl(&filtered(run, u))?;
                    Ok(docs
                        .iter()
                        .filter_map(|d| {
                            let i = index[&d.doc_id];
                            if !needed.contains(&i) {
                                return None;
                            }
                            shingle_text(&d.markdown, p.shingle_size).ok().map(|s| (i, s))
                        })
                        .collect())
                })
                .collect::<Result<_>>()?;
            let mut sets = vec![ShingleSet::from_hashes(p.shingle_size, Vec::new()); n];
            for (i, s) in found.into_iter().flatten() {
                sets[i as usize] = s;
            }
            Some(sets)
        }
    };

    let mut forest = cluster_duplicates(n, &candidates, p.mode, p.threshold, shingles.as_deref())?;
    drop(shingles);
    let ids: Vec<DocId> = metas.iter().map(|m| m.id.clone()).collect();
    let clusters = DuplicateClusters::from_forest(&ids, &mut forest);

    let mut out = OutputFile::create(&run.dir().join("dedup/clusters.jsonl"))?;
    write_clusters_jsonl(&clusters, &mut out)?;
    out.commit()?;

    let survivors = select_survivors(&clusters);
    let mut out = OutputFile::create(&run.dir().join("dedup/survivors.txt"))?;
    for id in &survivors {
        writeln!(out, "{id}")?;
    }
    out.commit()?;

    let mut c = Counts {
        docs_in: n as u64,
        docs_out: survivors.len() as u64,
        ..Default::default()
    };
    c.drop("duplicate", clusters.removed() as u64);
    for m in metas.iter().filter(|m| survivors.contains(&m.id)) {
        c.bytes_out += m.bytes;
        c.tokens_out += m.chars;
    }
    let mut sizes = BTreeMap::new();
    for cl in &clusters.clusters {
        *sizes.entry(cl.members.len() as u64).or_insert(0) += 1;
    }
    Ok((c, sizes))
}

fn read_survivors(run: &Run) -> Result<BTreeSet<DocId>> {
    let path = run.dir().join("dedup/survivors.txt");
    let file = File::open(&path).map_err(not_found(&path))?;
    BufReader::new(file)
        .lines()
        .filter(|l| l.as_ref().map_or(true, |l| !l.is_empty()))
        .map(|l| {
            l?.parse::<DocId>()
                .map_err(|e| PipelineError::Data(format!("{}: {e}", path.display())))
        })
        .collect()
}

fn shard_dir(run: &Run) -> PathBuf {
    run.dir().join("shard")
}

fn shard_key(id: u32) -> String {
    format!("shard-{id:06}")
}

fn plan_path(run: &Run) -> PathBuf {
    shard_dir(run).join("plan.json")
}

pub(crate) fn shard_units(run: &Run) -> Vec<String> {
    let mut units = vec![PLAN_UNIT.to_string()];
    if run.manifest().is_done(Stage::Shard.as_str(), PLAN_UNIT) {
        if let Ok(plan) = read_json::<ShardPlan>(&plan_path(run)) {
            units.extend(plan.assignments.iter().map(|a| shard_key(a.shard_id)));
            units.push(SHARD_MANIFEST_UNIT.to_string());
        }
    }
    units
}

/// Loads the filtered documents whose ids satisfy `keep`, in doc-id order.
fn load_filtered(run: &Run, keep: impl Fn(&DocId) -> bool + Sync) -> Result<Vec<Document>> {
    let per_unit: Vec<Vec<Document>> = run
        .archive_units()
        .par_iter()
        .map(|u| {
            let docs: Vec<Document> = read_jsonl(&filtered(run, u))?;
            Ok(docs.into_iter().filter(|d| keep(&d.doc_id)).collect())
        })
        .collect::<Result<_>>()?;
    let mut docs: Vec<Document> = per_unit.into_iter().flatten().collect();
    docs.sort_by(|a, b| a.doc_id.cmp(&b.doc_id));
    Ok(docs)
}

fn shard(run: &Run, budget: &mut Budget) -> Result<()> {
    let dir = shard_dir(run);
    std::fs::create_dir_all(&dir)?;
    let done = |unit: &str| run.manifest().is_done(Stage::Shard.as_str(), unit);

    if !done(PLAN_UNIT) {
        if budget.take(1) == 0 {
            return Ok(());
        }
        let survivors = read_survivors(run)?;
        let docs = load_filtered(run, |id| survivors.contains(id))?;
        if docs.len() != survivors.len() {
            return Err(PipelineError::Data(format!(
                "{} survivors listed but {} found in filter output",
                survivors.len(),
                docs.len()
            )));
        }
        let plan = plan_shards(docs.iter().map(|d| (&d.doc_id, d.byte_size())), run.config().shard.target_bytes);
        write_json(&plan_path(run), &plan)?;
        run.mark(Stage::Shard, PLAN_UNIT, Counts::default())?;
    }

    let plan: ShardPlan = read_json(&plan_path(run))?;
    let snapshot = run.manifest();
    let pending: Vec<_> = plan
        .assignments
        .iter()
        .filter(|a| !snapshot.is_done(Stage::Shard.as_str(), &shard_key(a.shard_id)))
        .collect();
    let todo = &pending[..budget.take(pending.len())];
    if !todo.is_empty() {
        let needed: HashSet<&DocId> = todo.iter().flat_map(|a| &a.doc_ids).collect();
        let store: HashMap<DocId, Document> = load_filtered(run, |id| needed.contains(id))?
            .into_iter()
            .map(|d| (d.doc_id.clone(), d))
            .collect();
        todo.par_iter().try_for_each(|a| -> Result<()> {
            let manifest = write_shard(a, &store, &dir)?;
            let key = shard_key(a.shard_id);
            write_json(&dir.join(format!("{key}.manifest.json")), &manifest)?;
            let tokens = a.doc_ids.iter().map(|id| store[id].char_count).sum();
            run.mark(
                Stage::Shard,
                &key,
                Counts {
                    docs_in: manifest.doc_count,
                    docs_out: manifest.doc_count,
                    bytes_out: manifest.byte_size,
                    tokens_out: tokens,
                    ..Default::default()
                },
            )?;
            Ok(())
        })?;
    }

    let snapshot = run.manifest();
    let all_written = plan
        .assignments
        .iter()
        .all(|a| snapshot.is_done(Stage::Shard.as_str(), &shard_key(a.shard_id)));
    if all_written && !done(SHARD_MANIFEST_UNIT) && budget.take(1) == 1 {
        let mut manifests = Vec::with_capacity(plan.assignments.len());
        for a in &plan.assignments {
            let m: ShardManifest = read_json(&dir.join(format!("{}.manifest.json", shard_key(a.shard_id))))?;
            let check = verify_shard(&m, &dir.join(&m.file_name));
            if !check.ok {
                return Err(PipelineError::Data(format!(
                    "{} failed verification: {}",
                    m.file_name,
                    check.reasons.join(", ")
                )));
            }
            manifests.push(m);
        }
        write_json(&dir.join(SHARDS_FILE), &manifests)?;
        run.mark(Stage::Shard, SHARD_MANIFEST_UNIT, Counts::default())?;
    }
    Ok(())
}

/// Reads a bucket's shards into a token inventory.
fn load_inventory(run: &Run, bucket: &MixBucket) -> Result<BucketInventory> {
    let dir = if bucket.source == "run" {
        shard_dir(run)
    } else {
        PathBuf::from(&bucket.source)
    };
    let manifests: Vec<ShardManifest> = read_json(&dir.join(SHARDS_FILE))?;
    let counter = CharCounter;
    let mut docs = Vec::new();
    for m in &manifests {
        let shard = read_shard(&dir.join(&m.file_name)).map_err(not_found(&dir.join(&m.file_name)))?;
        if shard.len() as u64 != m.doc_count {
            return Err(PipelineError::Data(format!(
                "{}: {} documents, manifest says {}",
                m.file_name,
                shard.len(),
                m.doc_count
            )));
        }
        docs.extend(shard.into_iter().map(|d| {
            let tokens = counter.count(&d.markdown);
            (d.doc_id, tokens)
        }));
    }
    Ok(BucketInventory {
        bucket_name: bucket.name.clone(),
        docs,
    })
}

fn mix(run: &Run, budget: &mut Budget) -> Result<()> {
    let Some(cfg) = &run.config().mix else {
        return Ok(());
    };
    if run.manifest().is_done(Stage::Mix.as_str(), MIX_UNIT) || budget.take(1) == 0 {
        return Ok(());
    }
    let inventories: Vec<BucketInventory> = cfg
        .buckets
        .par_iter()
        .map(|b| load_inventory(run, b))
        .collect::<Result<_>>()?;
    let stats: Vec<BucketStats> = inventories
        .iter()
        .map(|inv| BucketStats {
            bucket_name: inv.bucket_name.clone(),
            available_tokens: inv.total_tokens(),
            doc_count: inv.docs.len() as u64,
        })
        .collect();
    let plan = plan_mixture(&stats, &cfg.spec())?;
    write_json(&run.dir().join("mix/plan.json"), &plan)?;
    if !plan.feasible {
        let short: Vec<String> = plan
            .draws
            .iter()
            .filter(|d| d.shortfall > 0)
            .map(|d| format!("{} short by {} tokens", d.bucket_name, d.shortfall))
            .collect();
        return Err(PipelineError::Data(format!("mixture is infeasible: {}", short.join(", "))));
    }
    let samples = realize_mixture(&plan, &inventories, stage_seed(run.config().seed, "mix"))?;
    write_jsonl(&run.dir().join("mix/samples.jsonl"), &samples)?;

    let distinct: HashSet<(&str, &DocId)> = samples.iter().map(|s| (s.bucket.as_str(), &s.doc_id)).collect();
    let mut c = Counts {
        docs_in: inventories.iter().map(|i| i.docs.len() as u64).sum(),
        docs_out: distinct.len() as u64,
        tokens_out: samples.iter().map(|s| s.tokens).sum(),
        ..Default::default()
    };
    c.drop("not_sampled", c.docs_in - c.docs_out);
    let mut per_bucket: BTreeMap<String, u64> = cfg.buckets.iter().map(|b| (b.name.clone(), 0)).collect();
    for s in &samples {
        *per_bucket.get_mut(&s.bucket).unwrap() += s.tokens;
    }
    run.update(|m| m.stage_mut(Stage::Mix.as_str()).bucket_tokens = per_bucket)?;
    run.mark(Stage::Mix, MIX_UNIT, c)?;
    Ok(())
}

fn report(run: &Run) -> Result<()> {
    let report = report_stats(&run.manifest());
    let dir = run.dir().join("report");
    std::fs::create_dir_all(&dir)?;
    super::atomic_write(&dir.join("report.txt"), report.to_text().as_bytes())?;
    let mut csv = Vec::new();
    report.write_csv(&mut csv)?;
    super::atomic_write(&dir.join("funnel.csv"), &csv)?;
    Ok(())
}
