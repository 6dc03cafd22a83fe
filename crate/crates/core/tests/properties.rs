mod common;

use std::collections::{BTreeSet, HashMap};

use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;

use corpusforge::dedup::{
    band_partition, build_candidate_pairs, cluster_duplicates, estimate_jaccard, exact_jaccard,
    minhash_signature, select_survivors, write_clusters_jsonl, DedupMode, DuplicateClusters,
    ShingleSet,
};
use corpusforge::filter::{evaluate_document, metrics_for_text, FilterConfig, NgMatcher};
use corpusforge::ingest::writer::{gzip_member, WarcRecordBuilder};
use corpusforge::ingest::{decode_charset, iterate_warc, score_japanese, CharsetFallbacks};
use corpusforge::markdown::Document;
use corpusforge::mix::{
    largest_remainder, plan_mixture, realize_mixture, BucketInventory, BucketStats, MixSpec,
};
use corpusforge::shard::{plan_shards, read_shard, shard_file_name, verify_shard, write_shard};
use corpusforge::synth::ProseGen;
use corpusforge::DocId;

// ---- ingest ----

proptest! {
    #[test]
    fn japanese_score_ignores_order_and_repetition(s in "[a-zA-Zあ-んア-ン一-龥0-9 、。!]{0,60}") {
        let rev: String = s.chars().rev().collect();
        let once = score_japanese(&s);
        prop_assert_eq!(score_japanese(&rev), once);
        let twice = score_japanese(&format!("{s}{s}"));
        prop_assert_eq!(twice.score, once.score);
        prop_assert_eq!(twice.letter_count, 2 * once.letter_count);
        prop_assert!((0.0..=1.0).contains(&once.score));
        if once.letter_count == 0 {
            prop_assert_eq!(once.score, 0.0);
        }
    }

    #[test]
    fn legacy_charsets_round_trip(
        s in "[a-z0-9 あ-んア-ン日本語文字東京大学新聞天気、。]{1,60}",
        which in 0usize..3,
    ) {
        let enc = [encoding_rs::SHIFT_JIS, encoding_rs::EUC_JP, encoding_rs::ISO_2022_JP][which];
        let (bytes, _, unmappable) = enc.encode(&s);
        prop_assume!(!unmappable);
        let fallbacks = CharsetFallbacks::from_labels(&["shift_jis", "euc-jp", "iso-2022-jp"]).unwrap();
        let d = decode_charset(&bytes, Some(enc.name()), &fallbacks);
        prop_assert_eq!(d.text, s);
        prop_assert!(d.charset.eq_ignore_ascii_case(enc.name()), "{} vs {}", d.charset, enc.name());
        prop_assert!(!d.lossy);
    }

    #[test]
    fn reader_accounts_for_every_member(
        bodies in prop::collection::vec("[a-zあ-ん]{0,40}", 0..12),
        gz in any::<bool>(),
        cut in prop::option::of(1usize..60),
    ) {
        let mut archive = Vec::new();
        let mut members = 0u64;
        for (i, b) in bodies.iter().enumerate() {
            let rec = WarcRecordBuilder::new("response", &format!("http://a.jp/{i}"))
                .http_response(200, "text/html", b.as_bytes())
                .to_bytes();
            archive.extend(if gz { gzip_member(&rec) } else { rec });
            members += 1;
        }
        if let Some(cut) = cut {
            // a damaged final record
            let rec = WarcRecordBuilder::new("response", "http://a.jp/tail")
                .http_response(200, "text/html", "末尾のレコード".repeat(10).as_bytes())
                .to_bytes();
            let bytes = if gz { gzip_member(&rec) } else { rec };
            archive.extend_from_slice(&bytes[..bytes.len() - cut.min(bytes.len() - 1)]);
            members += 1;
        }
        prop_assume!(!archive.is_empty());
        let pass = |data: &[u8]| {
            let mut r = iterate_warc(data).unwrap();
            let recs: Vec<_> = r.by_ref().map(|rec| (rec.index, rec.target_uri.clone(), rec.payload.clone())).collect();
            (recs, r.stats().clone())
        };
        let (first, stats) = pass(&archive);
        prop_assert_eq!(stats.members(), members);
        prop_assert_eq!(stats.yielded as usize, first.len());
        prop_assert!(first.len() >= bodies.len());
        prop_assert_eq!(pass(&archive), (first, stats));
    }
}

// ---- filter ----

#[test]
fn loosening_a_threshold_never_rejects_a_passing_document() {
    let (passing, bad) = common::monotonicity_trials(1000, 11);
    assert!(bad.is_empty(), "{}", bad.join("\n"));
    assert!(passing > 50, "too few passing trials ({passing}) to say anything");
}

#[test]
fn clean_prose_passes_and_lorem_ipsum_fails() {
    let mut gen = ProseGen::new(21);
    let cfg = FilterConfig::default();
    let matcher = NgMatcher::new(&cfg.ngwords);
    for _ in 0..200 {
        let text = format!("{}\n", gen.paragraphs(600).join("\n\n"));
        let v = evaluate_document(&metrics_for_text(&text, &matcher), &cfg);
        assert!(v.passed, "{v:?}");
    }
    let lorem = "Lorem ipsum dolor sit amet, consectetur adipiscing elit, sed do eiusmod tempor incididunt ut labore.\n";
    for n in [5, 10, 40] {
        let v = evaluate_document(&metrics_for_text(&lorem.repeat(n).replace("Lorem", &format!("Lorem{n}")), &matcher), &cfg);
        assert!(!v.passed);
        assert!(v.failed_rules.contains(&"min_ja_ratio".to_string()));
    }
}

// ---- dedup ----

fn lsh_clusters(ids: &[DocId], sets: &[ShingleSet], seed: u64) -> DuplicateClusters {
    let keys: Vec<_> = sets
        .iter()
        .map(|s| band_partition(&minhash_signature(s, 128, seed), 16, 8).unwrap())
        .collect();
    let cand = build_candidate_pairs(&keys, 5000);
    let mut forest = cluster_duplicates(ids.len(), &cand, DedupMode::Verify, 0.8, Some(sets)).unwrap();
    DuplicateClusters::from_forest(ids, &mut forest)
}

#[test]
fn input_order_does_not_change_clusters() {
    for seed in 0..5 {
        let docs = common::dedup_corpus(seed, 200);
        let ids: Vec<DocId> = docs.iter().map(|d| d.0.clone()).collect();
        let sets = common::shingles(&docs);
        let base = lsh_clusters(&ids, &sets, 9);
        let mut order: Vec<usize> = (0..docs.len()).collect();
        order.shuffle(&mut common::rng(seed + 100));
        let ids2: Vec<DocId> = order.iter().map(|&i| ids[i].clone()).collect();
        let sets2: Vec<ShingleSet> = order.iter().map(|&i| sets[i].clone()).collect();
        let shuffled = lsh_clusters(&ids2, &sets2, 9);
        assert_eq!(base, shuffled);
        assert_eq!(select_survivors(&base), select_survivors(&shuffled));
    }
}

#[test]
fn lsh_clusters_refine_the_exact_partition() {
    let docs = common::dedup_corpus(42, 200);
    let ids: Vec<DocId> = docs.iter().map(|d| d.0.clone()).collect();
    let sets = common::shingles(&docs);
    let lsh = common::partition(&lsh_clusters(&ids, &sets, 3));
    let exact = common::oracle_components(&ids, &sets, 0.8);
    // every LSH cluster sits inside one exact component
    let comp_of: HashMap<&DocId, usize> =
        exact.iter().enumerate().flat_map(|(i, c)| c.iter().map(move |d| (d, i))).collect();
    for cluster in &lsh {
        let homes: BTreeSet<usize> = cluster.iter().map(|d| comp_of[d]).collect();
        assert_eq!(homes.len(), 1);
    }
    assert!(exact.iter().any(|c| c.len() > 1), "corpus has no duplicates");
    // differences come only from pairs LSH missed: most above-threshold
    // pairs still end up together (recall at J = 0.8 is about 0.95)
    let lsh_of: HashMap<&DocId, usize> =
        lsh.iter().enumerate().flat_map(|(i, c)| c.iter().map(move |d| (d, i))).collect();
    let hs: Vec<_> = sets.iter().map(common::as_hashset).collect();
    let (mut close, mut together) = (0, 0);
    for i in 0..ids.len() {
        for j in i + 1..ids.len() {
            if common::oracle_jaccard(&hs[i], &hs[j]) >= 0.8 {
                close += 1;
                together += usize::from(lsh_of[&ids[i]] == lsh_of[&ids[j]]);
            }
        }
    }
    assert!(together as f64 >= 0.95 * close as f64, "{together} of {close}");
}

#[test]
fn exhaustive_verify_matches_brute_force() {
    for seed in 0..4 {
        let docs = common::dedup_corpus(seed + 50, 150);
        let ids: Vec<DocId> = docs.iter().map(|d| d.0.clone()).collect();
        let sets = common::shingles(&docs);
        let got = common::verify_exhaustive(&ids, &sets, 0.8);
        assert_eq!(common::partition(&got), common::oracle_components(&ids, &sets, 0.8));
        let min_ids: BTreeSet<DocId> =
            common::oracle_components(&ids, &sets, 0.8).into_iter().map(|c| c[0].clone()).collect();
        assert_eq!(select_survivors(&got), min_ids);
    }
}

#[test]
fn cluster_output_is_identical_across_thread_counts() {
    let docs = common::dedup_corpus(77, 300);
    let ids: Vec<DocId> = docs.iter().map(|d| d.0.clone()).collect();
    let sets = common::shingles(&docs);
    let bytes = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        let clusters = pool.install(|| lsh_clusters(&ids, &sets, 5));
        let mut out = Vec::new();
        write_clusters_jsonl(&clusters, &mut out).unwrap();
        out
    };
    let one = bytes(1);
    assert!(!one.is_empty());
    assert_eq!(one, bytes(8));
    assert_eq!(one, bytes(3));
}

#[test]
fn estimator_mean_over_seeds_is_unbiased() {
    let k = 128;
    let m = 1000;
    let mut rng = common::rng(5);
    for j in [0.1, 0.3, 0.5, 0.7, 0.9] {
        let (a, b) = common::pair_with_jaccard(&mut rng, 200, j);
        assert_eq!(common::oracle_jaccard(&common::as_hashset(&a), &common::as_hashset(&b)), j);
        assert_eq!(exact_jaccard(&a, &b), j);
        let mean: f64 = (0..m)
            .map(|seed| estimate_jaccard(&minhash_signature(&a, k, seed), &minhash_signature(&b, k, seed)).unwrap())
            .sum::<f64>()
            / m as f64;
        let tol = 3.0 * (j * (1.0 - j) / (k as f64 * m as f64)).sqrt();
        assert!((mean - j).abs() <= tol, "J={j}: mean {mean}, tolerance {tol}");
    }
}

// ---- shard ----

fn sized_docs(sizes: &[u64]) -> Vec<Document> {
    sizes
        .iter()
        .enumerate()
        .map(|(i, &n)| {
            let body: String = "あいうえおかきくけこ".chars().cycle().take(n as usize).collect();
            Document::new(DocId::new("s", (i / 1000) as u32, (i % 1000) as u32), format!("http://s.jp/{i}"), body, 1.0)
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn shard_plans_are_uniform_and_conserve_order(
        sizes in prop::collection::vec(1u64..5000, 0..300),
        target in 1u64..20000,
    ) {
        let ids: Vec<DocId> = (0..sizes.len() as u32).map(|i| DocId::new("s", 0, i)).collect();
        let plan = plan_shards(ids.iter().zip(sizes.iter().copied()), target);
        let max_doc = sizes.iter().copied().max().unwrap_or(0);
        let flat: Vec<DocId> = plan.assignments.iter().flat_map(|a| a.doc_ids.clone()).collect();
        prop_assert_eq!(&flat, &ids);
        let n = plan.assignments.len();
        for (i, a) in plan.assignments.iter().enumerate() {
            prop_assert_eq!(a.shard_id as usize, i);
            prop_assert!(!a.doc_ids.is_empty());
            let start = flat.iter().position(|d| *d == a.doc_ids[0]).unwrap();
            let sum: u64 = sizes[start..start + a.doc_ids.len()].iter().sum();
            prop_assert_eq!(sum, a.byte_size);
            if i + 1 < n {
                prop_assert!(a.byte_size + max_doc >= target && a.byte_size <= target + max_doc);
            }
        }
        prop_assert_eq!(plan_shards(ids.iter().zip(sizes.iter().copied()), target), plan);
    }
}

#[test]
fn written_shards_round_trip_and_are_reproducible() {
    let mut rng = common::rng(8);
    let sizes: Vec<u64> = (0..120).map(|_| rng.gen_range(10..3000)).collect();
    let docs = sized_docs(&sizes);
    let store: HashMap<DocId, Document> = docs.iter().map(|d| (d.doc_id.clone(), d.clone())).collect();
    let plan = plan_shards(docs.iter().map(|d| (&d.doc_id, d.byte_size())), 40_000);
    assert!(plan.assignments.len() > 3);
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let mut back = Vec::new();
    let mut total = 0;
    for entry in &plan.assignments {
        let ma = write_shard(entry, &store, a.path()).unwrap();
        let mb = write_shard(entry, &store, b.path()).unwrap();
        assert_eq!(ma, mb);
        let pa = a.path().join(&ma.file_name);
        assert_eq!(std::fs::read(&pa).unwrap(), std::fs::read(b.path().join(&mb.file_name)).unwrap());
        assert_eq!(ma.file_name, shard_file_name(entry.shard_id));
        assert!(verify_shard(&ma, &pa).ok);
        total += ma.doc_count;
        back.extend(read_shard(&pa).unwrap());
    }
    assert_eq!(total as usize, docs.len());
    assert_eq!(back, docs);
}

// ---- mix ----

fn random_spec(rng: &mut rand_chacha::ChaCha8Rng) -> MixSpec {
    let n = rng.gen_range(1..8);
    let raw: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0f64)).collect();
    let sum: f64 = raw.iter().sum();
    let mut ratios: Vec<f64> = raw.iter().map(|r| r / sum).collect();
    // make the ratios sum to 1 as closely as floats allow
    let head: f64 = ratios[..n - 1].iter().sum();
    ratios[n - 1] = (1.0 - head).max(0.0);
    MixSpec {
        targets: ratios.into_iter().enumerate().map(|(i, r)| (format!("b{i}"), r)).collect(),
        budget_tokens: rng.gen_range(0..10_000_000),
        max_epochs: rng.gen_range(1.0..4.0),
    }
}

#[test]
fn draws_sum_to_the_budget() {
    let mut rng = common::rng(13);
    for _ in 0..1000 {
        let spec = random_spec(&mut rng);
        let weights: Vec<f64> = spec.targets.iter().map(|t| t.1).collect();
        let parts = largest_remainder(spec.budget_tokens, &weights);
        assert_eq!(parts.iter().sum::<u64>(), spec.budget_tokens);
        for (p, w) in parts.iter().zip(&weights) {
            assert!((*p as f64 - w * spec.budget_tokens as f64).abs() < 1.0 + 1e-6);
        }
        let stats: Vec<BucketStats> = spec
            .targets
            .iter()
            .map(|(name, _)| BucketStats {
                bucket_name: name.clone(),
                available_tokens: rng.gen_range(0..5_000_000),
                doc_count: 1,
            })
            .collect();
        let plan = plan_mixture(&stats, &spec).unwrap();
        assert_eq!(plan.draws.iter().map(|d| d.tokens_drawn).sum::<u64>(), spec.budget_tokens);
        // scaling supply and demand together keeps the verdict
        let scaled_stats: Vec<BucketStats> = stats
            .iter()
            .map(|s| BucketStats {
                available_tokens: s.available_tokens * 10,
                ..s.clone()
            })
            .collect();
        let scaled = MixSpec {
            budget_tokens: spec.budget_tokens * 10,
            ..spec.clone()
        };
        assert_eq!(plan_mixture(&scaled_stats, &scaled).unwrap().feasible, plan.feasible);
    }
}

#[test]
fn realized_shares_stay_within_one_document() {
    let mut rng = common::rng(17);
    for trial in 0..50 {
        let spec = MixSpec {
            budget_tokens: rng.gen_range(10_000..200_000),
            ..random_spec(&mut rng)
        };
        let max_doc = rng.gen_range(5..400u64);
        let inventories: Vec<BucketInventory> = spec
            .targets
            .iter()
            .map(|(name, _)| BucketInventory {
                bucket_name: name.clone(),
                docs: (0..rng.gen_range(100..400))
                    .map(|i| (DocId::new(name.as_str(), 0, i), rng.gen_range(1..=max_doc)))
                    .collect(),
            })
            .collect();
        let stats: Vec<BucketStats> = inventories
            .iter()
            .map(|b| BucketStats {
                bucket_name: b.bucket_name.clone(),
                available_tokens: b.total_tokens(),
                doc_count: b.docs.len() as u64,
            })
            .collect();
        let plan = plan_mixture(&stats, &spec).unwrap();
        if !plan.feasible {
            continue;
        }
        let samples = realize_mixture(&plan, &inventories, trial).unwrap();
        assert_eq!(samples, realize_mixture(&plan, &inventories, trial).unwrap());
        let biggest = inventories.iter().flat_map(|b| b.docs.iter().map(|d| d.1)).max().unwrap();
        for (name, ratio) in &spec.targets {
            let got: u64 = samples.iter().filter(|s| &s.bucket == name).map(|s| s.tokens).sum();
            let share = got as f64 / spec.budget_tokens as f64;
            assert!(
                (share - ratio).abs() < biggest as f64 / spec.budget_tokens as f64,
                "{name}: {share} vs {ratio}"
            );
        }
    }
}
