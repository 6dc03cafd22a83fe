//! Helpers shared by the integration tests and the acceptance suite. The
//! oracles here deliberately avoid the library's own set arithmetic.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, HashSet, VecDeque};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use corpusforge::dedup::{
    cluster_duplicates, shingle_text, Candidates, DedupMode, DuplicateClusters, ShingleSet,
};
use corpusforge::pipeline::{read_manifest, run_all, Config, Run, RunManifest, RunOptions};
use corpusforge::synth::{write_fixture_corpus, FixtureSpec, FixtureSummary, ProseGen};
use corpusforge::filter::FilterConfig;
use corpusforge::DocId;

pub fn rng(seed: u64) -> ChaCha8Rng {
    rand::SeedableRng::seed_from_u64(seed)
}

/// Two shingle sets whose union has `union` elements and whose
/// intersection has `round(j * union)`, so the Jaccard is exact by
/// construction whenever the remainder splits evenly.
pub fn pair_with_jaccard(rng: &mut ChaCha8Rng, union: usize, j: f64) -> (ShingleSet, ShingleSet) {
    let mut pool = HashSet::with_capacity(union);
    while pool.len() < union {
        pool.insert(rng.gen::<u64>());
    }
    let mut pool: Vec<u64> = pool.into_iter().collect();
    pool.sort_unstable();
    pool.shuffle(rng);
    let shared = (j * union as f64).round() as usize;
    let rest = union - shared;
    let a_only = rest / 2;
    let mut a = pool[..shared + a_only].to_vec();
    let mut b = pool[..shared].to_vec();
    b.extend_from_slice(&pool[shared + a_only..]);
    a.sort_unstable();
    b.sort_unstable();
    (ShingleSet::from_hashes(5, a), ShingleSet::from_hashes(5, b))
}

/// |A ∩ B| / |A ∪ B| over hash sets.
pub fn oracle_jaccard(a: &HashSet<u64>, b: &HashSet<u64>) -> f64 {
    if a.is_empty() && b.is_empty() {
        return 1.0;
    }
    let inter = a.intersection(b).count();
    inter as f64 / (a.len() + b.len() - inter) as f64
}

pub fn as_hashset(s: &ShingleSet) -> HashSet<u64> {
    s.hashes.iter().copied().collect()
}

/// Connected components of the graph {(i, j) : J(i, j) ≥ threshold},
/// found by breadth-first search over an O(n²) adjacency scan. Each
/// component is sorted; the list is sorted.
pub fn oracle_components(ids: &[DocId], sets: &[ShingleSet], threshold: f64) -> Vec<Vec<DocId>> {
    let hs: Vec<HashSet<u64>> = sets.iter().map(as_hashset).collect();
    let n = ids.len();
    let mut adj = vec![Vec::new(); n];
    for i in 0..n {
        for j in i + 1..n {
            if oracle_jaccard(&hs[i], &hs[j]) >= threshold {
                adj[i].push(j);
                adj[j].push(i);
            }
        }
    }
    let mut seen = vec![false; n];
    let mut comps = Vec::new();
    for start in 0..n {
        if seen[start] {
            continue;
        }
        seen[start] = true;
        let mut queue = VecDeque::from([start]);
        let mut comp = Vec::new();
        while let Some(v) = queue.pop_front() {
            comp.push(ids[v].clone());
            for &w in &adj[v] {
                if !seen[w] {
                    seen[w] = true;
                    queue.push_back(w);
                }
            }
        }
        comp.sort();
        comps.push(comp);
    }
    comps.sort();
    comps
}

pub fn partition(clusters: &DuplicateClusters) -> Vec<Vec<DocId>> {
    let mut out: Vec<Vec<DocId>> = clusters.clusters.iter().map(|c| c.members.clone()).collect();
    out.sort();
    out
}

pub fn all_pairs(n: usize) -> Candidates {
    let mut c = Candidates::default();
    for i in 0..n as u32 {
        for j in i + 1..n as u32 {
            c.pairs.insert((i, j));
        }
    }
    c
}

/// Verify-mode clustering with every pair as a candidate.
pub fn verify_exhaustive(ids: &[DocId], sets: &[ShingleSet], threshold: f64) -> DuplicateClusters {
    let mut forest =
        cluster_duplicates(ids.len(), &all_pairs(ids.len()), DedupMode::Verify, threshold, Some(sets)).unwrap();
    DuplicateClusters::from_forest(ids, &mut forest)
}

fn mutate(text: &str, edits: usize, rng: &mut ChaCha8Rng) -> String {
    const REPL: &[char] = &['鉄', '雨', 'ア', 'ぬ', '港', 'ゼ'];
    let mut chars: Vec<char> = text.chars().collect();
    for _ in 0..edits {
        let i = rng.gen_range(0..chars.len());
        chars[i] = *REPL.choose(rng).unwrap();
    }
    chars.into_iter().collect()
}

/// Families of edited copies around random base texts. Edit counts
/// spread the within-family Jaccard on both sides of 0.8, and some
/// families chain (copy of a copy).
pub fn dedup_corpus(seed: u64, n: usize) -> Vec<(DocId, String)> {
    let mut rng = rng(seed);
    let mut gen = ProseGen::new(seed ^ 0x5eed);
    let mut texts: Vec<String> = Vec::with_capacity(n);
    while texts.len() < n {
        if texts.is_empty() || rng.gen_bool(0.35) {
            let target = rng.gen_range(200..700);
            let mut t = String::new();
            while t.chars().count() < target {
                t.push_str(&gen.sentence());
            }
            texts.push(t);
        } else {
            let parent = texts[rng.gen_range(0..texts.len())].clone();
            let edits = rng.gen_range(0..30);
            let mut child = mutate(&parent, edits, &mut rng);
            if rng.gen_bool(0.2) {
                child.push_str(&gen.sentence());
            }
            texts.push(child);
        }
    }
    texts.shuffle(&mut rng);
    texts
        .into_iter()
        .enumerate()
        .map(|(i, t)| (DocId::new("d", (i / 100) as u32, (i % 100) as u32), t))
        .collect()
}

pub fn shingles(docs: &[(DocId, String)]) -> Vec<ShingleSet> {
    docs.iter().map(|(_, t)| shingle_text(t, 5).unwrap()).collect()
}

pub fn write_fixture(root: &Path) -> FixtureSummary {
    write_fixture_corpus(root, &FixtureSpec::default()).unwrap()
}

pub const FIXTURE_CONFIG: &str = r#"
seed = 2024

[shard]
target_bytes = 65536

[mix]
budget_tokens = 100000
max_epochs = 2
buckets = [{ name = "web", ratio = 1.0, source = "run" }]
"#;

pub fn fixture_config() -> Config {
    Config::parse(FIXTURE_CONFIG, Path::new(".")).unwrap()
}

pub fn fixture_inputs(corpus: &Path) -> Vec<(String, Vec<PathBuf>)> {
    corpusforge::pipeline::discover_inputs(corpus, None).unwrap()
}

/// The parts of a finished run that must not depend on scheduling.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunFingerprint {
    pub shard_checksums: BTreeMap<String, String>,
    pub survivors: BTreeSet<String>,
    pub interruptions: usize,
}

/// Runs the whole pipeline on `corpus`. With `slice` set, every
/// invocation stops after that many units and the run is reopened from
/// disk until it finishes.
pub fn run_pipeline(
    corpus: &Path,
    out: &Path,
    run_id: &str,
    workers: usize,
    slice: Option<usize>,
) -> (RunFingerprint, RunManifest) {
    let run = Run::create(out, Some(run_id), fixture_config()).unwrap();
    run.add_inputs(fixture_inputs(corpus)).unwrap();
    drop(run);
    let mut interruptions = 0;
    loop {
        let run = Run::open(out, run_id, fixture_config()).unwrap();
        let opts = RunOptions { workers, max_units: slice };
        let outcomes = run_all(&run, &opts).unwrap();
        let stopped = outcomes
            .iter()
            .any(|(_, o)| matches!(o, corpusforge::pipeline::StageOutcome::Interrupted { .. }));
        if !stopped {
            break;
        }
        interruptions += 1;
        assert!(interruptions < 1000, "run never finished");
    }
    let dir = out.join(run_id);
    (fingerprint(&dir, interruptions), read_manifest(&dir.join("manifest.json")).unwrap())
}

pub fn fingerprint(run_dir: &Path, interruptions: usize) -> RunFingerprint {
    let shards: Vec<serde_json::Value> =
        serde_json::from_slice(&std::fs::read(run_dir.join("shard/shards.json")).unwrap()).unwrap();
    let shard_checksums = shards
        .iter()
        .map(|m| {
            (
                m["file_name"].as_str().unwrap().to_string(),
                m["checksum"].as_str().unwrap().to_string(),
            )
        })
        .collect();
    let survivors = std::fs::read_to_string(run_dir.join("dedup/survivors.txt"))
        .unwrap()
        .lines()
        .map(str::to_string)
        .collect();
    RunFingerprint {
        shard_checksums,
        survivors,
        interruptions,
    }
}

/// HTML input and expected Markdown, one row per rule of the conversion
/// table. Expected outputs are written by hand from the rules.
pub const RENDER_CASES: &[(&str, &str)] = &[
    ("<h1>見出し</h1><p>本文</p>", "# 見出し\n\n本文\n"),
    ("<h3>小見出し</h3>", "### 小見出し\n"),
    ("<h6>六</h6>", "###### 六\n"),
    ("<ul><li>a</li><li>b</li></ul>", "- a\n- b\n"),
    ("<ol><li>一</li><li>二</li><li>三</li></ol>", "1. 一\n2. 二\n3. 三\n"),
    ("<ol start=\"5\"><li>a</li><li>b</li></ol>", "1. a\n2. b\n"),
    ("<p><a href=\"https://example.jp/x\">リンク</a></p>", "[リンク](https://example.jp/x)\n"),
    ("<p><a href=\"/relative\">相対</a></p>", "相対\n"),
    ("<p><a href=\"javascript:void(0)\">js</a></p>", "js\n"),
    ("<p><strong>強</strong>と<b>太</b></p>", "**強**と**太**\n"),
    ("<p><em>斜</em>と<i>体</i></p>", "*斜*と*体*\n"),
    ("<pre>let x = 1;\n  y</pre>", "```\nlet x = 1;\n  y\n```\n"),
    (
        "<table><tr><th>名前</th><th>値</th></tr><tr><td>a</td><td>1</td></tr></table>",
        "| 名前 | 値 |\n| --- | --- |\n| a | 1 |\n",
    ),
    ("<p>一行目<br>二行目</p>", "一行目\n二行目\n"),
    ("<p>画像<img src=\"a.png\">です</p>", "画像です\n"),
    ("<nav>menu</nav><p>x</p>", "x\n"),
    ("<div><script>var a=1;</script><style>p{}</style>本文</div>", "本文\n"),
    (
        "<header>h</header><aside>a</aside><footer>f</footer><form>i</form><iframe>q</iframe><noscript>n</noscript><p>残る</p>",
        "残る\n",
    ),
    ("<p>ＡＢＣ１２３</p>", "ABC123\n"),
    ("<p>ｶﾀｶﾅ</p>", "カタカナ\n"),
    ("<p>a</p>\n\n\n<p>b</p>", "a\n\nb\n"),
    ("<p>trailing   </p>", "trailing\n"),
    ("<p>a<p>b", "a\n\nb\n"),
    ("<div><p>入れ子</p><p>段落</p></div>", "入れ子\n\n段落\n"),
    ("<h2><a href=\"http://a.jp/\">見出しリンク</a></h2>", "## [見出しリンク](http://a.jp/)\n"),
    ("<ol><li>one<ul><li>x</li></ul></li><li>two</li></ol>", "1. one\n   - x\n2. two\n"),
    ("", ""),
];

// ---- filter trials ----

pub fn random_doc(rng: &mut rand_chacha::ChaCha8Rng, gen: &mut ProseGen) -> String {
    match rng.gen_range(0..5) {
        0 => gen.paragraphs(rng.gen_range(50..900)).join("\n\n"),
        1 => vec![gen.sentence(); rng.gen_range(2..30)].join("\n"),
        2 => format!("{}\n{}", gen.english_paragraph(), gen.paragraph()),
        3 => format!("{}{}", gen.paragraph(), "ー".repeat(rng.gen_range(10..90))),
        _ => (0..rng.gen_range(1..40)).map(|_| gen.word()).collect::<Vec<_>>().join("\n"),
    }
}

pub fn random_config(rng: &mut rand_chacha::ChaCha8Rng) -> FilterConfig {
    FilterConfig {
        min_chars: rng.gen_range(0..800),
        max_chars: rng.gen_range(500..5000),
        min_ja_ratio: rng.gen_range(0.0..1.0),
        min_mean_line_length: rng.gen_range(0.0..40.0),
        max_duplicate_line_ratio: rng.gen_range(0.0..1.0),
        max_char_run: rng.gen_range(1..100),
        max_ngword_hits: rng.gen_range(0..4),
        ngwords: ["天気", "東京"].iter().map(|s| s.to_string()).collect(),
    }
}

/// Moves one threshold in its permissive direction.
pub fn loosen(cfg: &FilterConfig, rule: usize, rng: &mut rand_chacha::ChaCha8Rng) -> FilterConfig {
    let mut c = cfg.clone();
    match rule {
        0 => c.min_chars -= rng.gen_range(0..=c.min_chars),
        1 => c.max_chars += rng.gen_range(0..5000),
        2 => c.min_ja_ratio *= rng.gen_range(0.0..1.0),
        3 => c.min_mean_line_length *= rng.gen_range(0.0..1.0),
        4 => c.max_duplicate_line_ratio += rng.gen_range(0.0..1.0),
        5 => c.max_char_run += rng.gen_range(0..100),
        _ => c.max_ngword_hits += rng.gen_range(0..5),
    }
    c
}

/// Runs `trials` random (document, config, one loosened threshold)
/// checks. Returns how many documents passed the base config and a
/// description of every violation.
pub fn monotonicity_trials(trials: usize, seed: u64) -> (usize, Vec<String>) {
    use corpusforge::filter::{evaluate_document, metrics_for_text, NgMatcher};
    let mut rng = rng(seed);
    let mut gen = ProseGen::new(seed);
    let matcher = NgMatcher::new(&["天気".to_string(), "東京".to_string()]);
    let mut passing = 0;
    let mut bad = Vec::new();
    for _ in 0..trials {
        let text = random_doc(&mut rng, &mut gen);
        let m = metrics_for_text(&text, &matcher);
        let cfg = random_config(&mut rng);
        let base = evaluate_document(&m, &cfg);
        if base != evaluate_document(&m, &cfg) {
            bad.push(format!("nondeterministic verdict for {m:?}"));
        }
        let looser = loosen(&cfg, rng.gen_range(0..7), &mut rng);
        let after = evaluate_document(&m, &looser);
        if base.passed {
            passing += 1;
        }
        let before: BTreeSet<&String> = base.failed_rules.iter().collect();
        if (base.passed && !after.passed) || !after.failed_rules.iter().all(|r| before.contains(r)) {
            bad.push(format!("{cfg:?} -> {looser:?}: {base:?} then {after:?}"));
        }
    }
    (passing, bad)
}
