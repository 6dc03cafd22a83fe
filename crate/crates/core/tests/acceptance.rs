//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails. Tolerances are pinned below.

mod common;

use std::collections::{BTreeSet, HashMap};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::Rng;

use corpusforge::dedup::{
    band_partition, build_candidate_pairs, estimate_jaccard, minhash_signature, select_survivors,
    DedupParams,
};
use corpusforge::markdown::{parse_html, render_markdown, Document};
use corpusforge::mix::{
    plan_mixture, realize_mixture, BucketInventory, BucketStats, MixSpec,
};
use corpusforge::pipeline::{
    run_stage, stage_seed, Config, Run, RunOptions, Stage, StageOutcome,
};
use corpusforge::shard::{plan_shards, read_shard, write_shard};
use corpusforge::synth::write_volume_archive;
use corpusforge::DocId;

const K: usize = 128;
const BIAS_TOL: f64 = 0.02;
const CONCENTRATION_MIN: f64 = 0.99;
const RECALL_MIN: f64 = 0.95;
const SHARE_TOL: f64 = 0.005;
const TABLE1: [&str; 4] = [
    "RefinedWeb",
    "Other English Dataset",
    "Proprietary CommonCrawl-JP",
    "Other Japanese Dataset",
];
const PHASE1: [f64; 4] = [0.42, 0.28, 0.18, 0.12];
const PHASE2: [f64; 4] = [0.17, 0.33, 0.46, 0.04];

type Outcome = Result<String, String>;

fn check(cond: bool, what: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(what())
    }
}

fn minhash_accuracy() -> Outcome {
    let seed = stage_seed(0, "dedup");
    let mut rng = common::rng(101);
    let mut parts = Vec::new();
    let mut failures = Vec::new();
    for j in [0.1, 0.3, 0.5, 0.7, 0.9] {
        let band = 3.0 * (j * (1.0 - j) / K as f64).sqrt();
        let (mut sum, mut abs, mut within) = (0.0, 0.0, 0usize);
        for _ in 0..1000 {
            let (a, b) = common::pair_with_jaccard(&mut rng, 1000, j);
            let exact = common::oracle_jaccard(&common::as_hashset(&a), &common::as_hashset(&b));
            if (exact - j).abs() > 1e-12 {
                return Err(format!("constructed pair has J={exact}, wanted {j}"));
            }
            let est = estimate_jaccard(&minhash_signature(&a, K, seed), &minhash_signature(&b, K, seed))
                .map_err(|e| e.to_string())?;
            sum += est;
            abs += (est - j).abs();
            within += usize::from((est - j).abs() <= band);
        }
        let bias = (sum / 1000.0 - j).abs();
        let mae = abs / 1000.0;
        let frac = within as f64 / 1000.0;
        parts.push(format!("J={j}: |mean-J|={bias:.4} mae={mae:.4} in3σ={frac:.3}"));
        if bias > BIAS_TOL || frac < CONCENTRATION_MIN {
            failures.push(format!("J={j}"));
        }
    }
    let detail = parts.join("; ");
    check(failures.is_empty(), || format!("{} out of tolerance: {detail}", failures.join(",")))?;
    Ok(detail)
}

fn lsh_recall() -> Outcome {
    let p = DedupParams::default();
    check(p.bands == 16 && p.rows == 8, || "default banding is not 16x8".into())?;
    let seed = stage_seed(0, "dedup");
    let mut rng = common::rng(202);
    let (mut hits, mut expected) = (0usize, 0.0);
    for _ in 0..1000 {
        let j = rng.gen_range(850..=1000) as f64 / 1000.0;
        let (a, b) = common::pair_with_jaccard(&mut rng, 1000, j);
        let keys: Vec<_> = [&a, &b]
            .iter()
            .map(|s| band_partition(&minhash_signature(s, K, seed), p.bands, p.rows).unwrap())
            .collect();
        hits += usize::from(build_candidate_pairs(&keys, p.bucket_cap).pairs.contains(&(0, 1)));
        expected += 1.0 - (1.0 - j.powi(p.rows as i32)).powi(p.bands as i32);
    }
    let recall = hits as f64 / 1000.0;
    let detail = format!("recall {recall:.3} over 1000 pairs, theory {:.3}", expected / 1000.0);
    check(recall >= RECALL_MIN, || detail.clone())?;
    Ok(detail)
}

fn dedup_oracle() -> Outcome {
    let mut rng = common::rng(303);
    let mut docs_total = 0;
    let mut dup_clusters = 0;
    for corpus in 0..50 {
        let n = rng.gen_range(20..=500);
        let docs = common::dedup_corpus(1000 + corpus, n);
        let ids: Vec<DocId> = docs.iter().map(|d| d.0.clone()).collect();
        let sets = common::shingles(&docs);
        let got = common::verify_exhaustive(&ids, &sets, 0.8);
        let want = common::oracle_components(&ids, &sets, 0.8);
        check(common::partition(&got) == want, || format!("corpus {corpus} (n={n}): partitions differ"))?;
        let want_survivors: BTreeSet<DocId> = want.iter().map(|c| c[0].clone()).collect();
        check(select_survivors(&got) == want_survivors, || format!("corpus {corpus}: survivors differ"))?;
        docs_total += n;
        dup_clusters += want.iter().filter(|c| c.len() > 1).count();
    }
    Ok(format!("50 corpora, {docs_total} docs, {dup_clusters} multi-member clusters, all identical"))
}

fn table1_mixture() -> Outcome {
    let mut details = Vec::new();
    // arithmetic realization at budget 1000
    for (ratios, want) in [(PHASE1, [420, 280, 180, 120]), (PHASE2, [170, 330, 460, 40])] {
        let draws: Vec<u64> = plan(&ratios, 1000, &[1000; 4])?.draws.iter().map(|d| d.tokens_drawn).collect();
        check(draws == want, || format!("budget 1000 draws {draws:?}, wanted {want:?}"))?;
    }
    // the two phases add up to 1.3T English and 0.7T Japanese tokens
    let p1 = plan(&PHASE1, 1_500_000_000_000, &[u64::MAX / 8; 4])?;
    let p2 = plan(&PHASE2, 500_000_000_000, &[u64::MAX / 8; 4])?;
    let sum = |idx: &[usize]| -> u64 { idx.iter().map(|&i| p1.draws[i].tokens_drawn + p2.draws[i].tokens_drawn).sum() };
    check(sum(&[0, 1]) == 1_300_000_000_000 && sum(&[2, 3]) == 700_000_000_000, || "phase totals differ from 1.3T/0.7T".into())?;
    details.push("1.5T+0.5T phases give 1.3T en / 0.7T ja".to_string());

    let mut rng = common::rng(404);
    let mut worst: f64 = 0.0;
    for (row, ratios) in [PHASE1, PHASE2].iter().enumerate() {
        for budget in [100_000u64, 1_000_000, 10_000_000] {
            // each bucket holds at least the whole budget: ample supply
            let inventories: Vec<BucketInventory> = TABLE1
                .iter()
                .map(|name| {
                    let mut docs = Vec::new();
                    let mut total = 0;
                    while total < budget + 1000 {
                        let t = rng.gen_range(20..=400u64);
                        docs.push((DocId::new(name.replace(' ', "_"), 0, docs.len() as u32), t));
                        total += t;
                    }
                    BucketInventory {
                        bucket_name: name.to_string(),
                        docs,
                    }
                })
                .collect();
            let avail: Vec<u64> = inventories.iter().map(|b| b.total_tokens()).collect();
            let p = plan(ratios, budget, &avail)?;
            let drawn: u64 = p.draws.iter().map(|d| d.tokens_drawn).sum();
            check(drawn == budget, || format!("draws sum to {drawn}, budget {budget}"))?;
            check(p.feasible, || "plan infeasible with ample buckets".into())?;
            let samples = realize_mixture(&p, &inventories, row as u64 * 7 + budget).map_err(|e| e.to_string())?;
            let total: u64 = samples.iter().map(|s| s.tokens).sum();
            for (name, ratio) in TABLE1.iter().zip(ratios) {
                let got: u64 = samples.iter().filter(|s| s.bucket == *name).map(|s| s.tokens).sum();
                let err = (got as f64 / total as f64 - ratio).abs();
                worst = worst.max(err);
                check(err <= SHARE_TOL, || format!("{name} at budget {budget}: share off by {err:.5}"))?;
            }
        }
    }
    details.push(format!("worst realized share error {worst:.5} (budgets 1e5..1e7)"));
    Ok(details.join("; "))
}

fn plan(ratios: &[f64; 4], budget: u64, avail: &[u64]) -> Result<corpusforge::mix::MixPlan, String> {
    let stats: Vec<BucketStats> = TABLE1
        .iter()
        .zip(avail)
        .map(|(n, &a)| BucketStats {
            bucket_name: n.to_string(),
            available_tokens: a,
            doc_count: 1,
        })
        .collect();
    let spec = MixSpec {
        targets: TABLE1.iter().zip(ratios).map(|(n, &r)| (n.to_string(), r)).collect(),
        budget_tokens: budget,
        max_epochs: 1.0,
    };
    plan_mixture(&stats, &spec).map_err(|e| e.to_string())
}

struct FixtureRuns {
    _dir: tempfile::TempDir,
    summary: corpusforge::synth::FixtureSummary,
    runs: Vec<(String, common::RunFingerprint, corpusforge::pipeline::RunManifest)>,
    out: std::path::PathBuf,
}

fn fixture_runs() -> FixtureRuns {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus");
    let out = dir.path().join("runs");
    let summary = common::write_fixture(&corpus);
    let mut runs = Vec::new();
    for (name, workers, slice) in [("w1", 1, None), ("w4", 4, None), ("w8", 8, None), ("resumed", 4, Some(3))] {
        let (fp, manifest) = common::run_pipeline(&corpus, &out, name, workers, slice);
        runs.push((name.to_string(), fp, manifest));
    }
    FixtureRuns {
        _dir: dir,
        summary,
        runs,
        out,
    }
}

fn determinism(f: &FixtureRuns) -> Outcome {
    check(f.summary.archives.len() >= 3 && f.summary.records >= 1000, || "fixture too small".into())?;
    let (_, first, _) = &f.runs[0];
    for (name, fp, _) in &f.runs[1..] {
        check(fp.shard_checksums == first.shard_checksums, || format!("{name}: shard checksums differ"))?;
        check(fp.survivors == first.survivors, || format!("{name}: survivor sets differ"))?;
    }
    let resumed = &f.runs[3].1;
    check(resumed.interruptions > 0, || "resume run was never interrupted".into())?;
    Ok(format!(
        "{} archives, {} records; workers 1/4/8 and a run resumed {} times agree on {} shards and {} survivors",
        f.summary.archives.len(),
        f.summary.records,
        resumed.interruptions,
        first.shard_checksums.len(),
        first.survivors.len()
    ))
}

fn funnel(f: &FixtureRuns) -> Outcome {
    for (name, _, m) in &f.runs {
        for stage in &Stage::ALL[..6] {
            let t = &m.stage(stage.as_str()).ok_or(format!("{name}: no {stage} record"))?.totals;
            check(t.conserves(), || format!("{name}/{stage}: {} in != {} out + {} dropped", t.docs_in, t.docs_out, t.dropped()))?;
        }
        let ingest = &m.stage("ingest").unwrap().totals;
        check(ingest.docs_in == f.summary.records, || format!("{name}: ingest saw {} of {} records", ingest.docs_in, f.summary.records))?;
        let dedup = &m.stage("dedup").unwrap().totals;
        let removed = dedup.drops.get("duplicate").copied().unwrap_or(0);
        check(removed == f.summary.planted_duplicates, || {
            format!("{name}: dedup removed {removed}, planted {}", f.summary.planted_duplicates)
        })?;
    }
    // the removed documents are the planted copies, not their originals
    let dir = f.out.join(&f.runs[0].0).join("shard");
    let mut urls = BTreeSet::new();
    for entry in std::fs::read_dir(&dir).map_err(|e| e.to_string())? {
        let path = entry.map_err(|e| e.to_string())?.path();
        if path.to_string_lossy().ends_with(".jsonl.gz") {
            urls.extend(read_shard(&path).map_err(|e| e.to_string())?.into_iter().map(|d| d.url));
        }
    }
    for (orig, copy) in &f.summary.planted_pairs {
        check(urls.contains(orig), || format!("original {orig} missing from shards"))?;
        check(!urls.contains(copy), || format!("copy {copy} survived"))?;
    }
    let m = &f.runs[0].2;
    let dedup = &m.stage("dedup").unwrap().totals;
    Ok(format!(
        "6 stages conserve in all 4 runs; dedup removed {} of {} docs, exactly the planted copies",
        f.summary.planted_duplicates, dedup.docs_in
    ))
}

fn shard_uniformity() -> Outcome {
    let mut rng = common::rng(707);
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut shards = 0;
    for case in 0..100 {
        let n = rng.gen_range(1..=200);
        let shape = case % 4;
        let sizes: Vec<u64> = (0..n)
            .map(|_| match shape {
                0 => rng.gen_range(1..2000),
                1 => 500,
                2 => (rng.gen_range(0.0f64..7.5)).exp() as u64 + 1,
                _ => if rng.gen_bool(0.05) { rng.gen_range(5000..20000) } else { rng.gen_range(1..300) },
            })
            .collect();
        let target = rng.gen_range(500..10_000u64);
        let docs: Vec<Document> = sizes
            .iter()
            .enumerate()
            .map(|(i, &s)| {
                let body: String = "かなカナ漢字abc".chars().cycle().take(s as usize).collect();
                Document::new(DocId::new("u", case, i as u32), format!("http://u.jp/{case}/{i}"), body, 1.0)
            })
            .collect();
        let max_doc = docs.iter().map(|d| d.byte_size()).max().unwrap();
        let plan = plan_shards(docs.iter().map(|d| (&d.doc_id, d.byte_size())), target);
        let last = plan.assignments.len() - 1;
        for (i, a) in plan.assignments.iter().enumerate() {
            if i < last {
                let ok = a.byte_size + max_doc >= target && a.byte_size <= target + max_doc;
                check(ok, || format!("case {case}: shard {i} holds {} bytes, target {target}±{max_doc}", a.byte_size))?;
            }
        }
        let store: HashMap<DocId, Document> = docs.iter().map(|d| (d.doc_id.clone(), d.clone())).collect();
        let dir = tmp.path().join(case.to_string());
        std::fs::create_dir_all(&dir).map_err(|e| e.to_string())?;
        let mut back = Vec::new();
        for a in &plan.assignments {
            let m = write_shard(a, &store, &dir).map_err(|e| e.to_string())?;
            back.extend(read_shard(&dir.join(&m.file_name)).map_err(|e| e.to_string())?);
        }
        check(back == docs, || format!("case {case}: concatenated shards differ from input"))?;
        shards += plan.assignments.len();
    }
    Ok(format!("100 size distributions, {shards} shards, bound and order hold"))
}

fn conversion_and_filter() -> Outcome {
    let cases = common::RENDER_CASES;
    check(cases.len() >= 20, || format!("only {} fixtures", cases.len()))?;
    for (html, want) in cases {
        let got = render_markdown(&parse_html(html));
        check(got == *want, || format!("{html:?} rendered {got:?}, wanted {want:?}"))?;
    }
    let (passing, bad) = common::monotonicity_trials(1000, 808);
    check(bad.is_empty(), || format!("{} monotonicity violations: {}", bad.len(), bad[0]))?;
    Ok(format!("{} render fixtures exact; 1000 filter trials ({passing} passing) monotone", cases.len()))
}

fn throughput_smoke() -> Outcome {
    let mb: u64 = std::env::var("CORPUSFORGE_SMOKE_MB").ok().and_then(|v| v.parse().ok()).unwrap_or(100);
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let dump = tmp.path().join("in/CC-MAIN-2024-10");
    std::fs::create_dir_all(&dump).map_err(|e| e.to_string())?;
    let files = 8u64;
    let (mut records, mut bytes) = (0, 0);
    for i in 0..files {
        let path = dump.join(format!("volume-{i:05}.warc.gz"));
        let (r, b) = write_volume_archive(&path, mb * 1_000_000 / files, 9000 + i).map_err(|e| e.to_string())?;
        records += r;
        bytes += b;
    }
    let started = Instant::now();
    let run = Run::create(&tmp.path().join("runs"), Some("smoke"), Config::default()).map_err(|e| e.to_string())?;
    run.add_inputs(common::fixture_inputs(&tmp.path().join("in"))).map_err(|e| e.to_string())?;
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get());
    let opts = RunOptions {
        workers,
        max_units: None,
    };
    let mut times = Vec::new();
    for stage in [Stage::Ingest, Stage::Convert, Stage::Filter, Stage::Dedup, Stage::Shard] {
        let t = Instant::now();
        let outcome = run_stage(&run, stage, &opts).map_err(|e| format!("{stage}: {e}"))?;
        check(matches!(outcome, StageOutcome::Completed(_)), || format!("{stage}: {outcome:?}"))?;
        times.push(format!("{stage} {:.1}s", t.elapsed().as_secs_f64()));
    }
    let shard = run.manifest().stage("shard").unwrap().totals.clone();
    Ok(format!(
        "{:.1} MB uncompressed, {records} records, {} docs sharded in {:.1}s with {workers} workers ({})",
        bytes as f64 / 1e6,
        shard.docs_out,
        started.elapsed().as_secs_f64(),
        times.join(", ")
    ))
}

struct Criterion {
    id: u32,
    name: &'static str,
    limit: Duration,
}

fn report(c: &Criterion, started: Instant, outcome: Outcome, note: &str) -> bool {
    let elapsed = started.elapsed();
    let outcome = outcome.and_then(|d| {
        if elapsed > c.limit {
            Err(format!("took {:.1}s, limit {}s; {d}", elapsed.as_secs_f64(), c.limit.as_secs()))
        } else {
            Ok(d)
        }
    });
    let (tag, detail) = match &outcome {
        Ok(d) => ("PASS", d.as_str()),
        Err(d) => ("FAIL", d.as_str()),
    };
    println!("{tag} {}. {}{note} [{:.1}s]: {detail}", c.id, c.name, elapsed.as_secs_f64());
    outcome.is_ok()
}

fn run(id: u32, name: &'static str, limit: Duration, f: fn() -> Outcome, note: &str) -> bool {
    let t = Instant::now();
    report(&Criterion { id, name, limit }, t, f(), note)
}

fn main() -> ExitCode {
    let minute = Duration::from_secs(60);
    let five = Duration::from_secs(300);
    let mut ok = run(1, "MinHash estimator accuracy", minute, minhash_accuracy, "");
    ok &= run(2, "LSH candidate recall", minute, lsh_recall, "");
    ok &= run(3, "dedup equals brute-force clustering", five, dedup_oracle, "");
    ok &= run(4, "Table 1 mixture ratios", minute, table1_mixture, "");

    // criteria 5 and 6 share the same four fixture runs
    let t = Instant::now();
    let fixture = fixture_runs();
    let c5 = Criterion { id: 5, name: "end-to-end determinism", limit: five };
    ok &= report(&c5, t, determinism(&fixture), "");
    let c6 = Criterion { id: 6, name: "funnel conservation", limit: five };
    ok &= report(&c6, t, funnel(&fixture), "");
    drop(fixture);

    ok &= run(7, "shard uniformity", minute, shard_uniformity, "");
    ok &= run(8, "conversion and filter suites", minute, conversion_and_filter, "");
    ok &= run(9, "throughput smoke", Duration::MAX, throughput_smoke, " (wall time reported, not asserted)");
    if ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
