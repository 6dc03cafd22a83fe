//! Seeded generators for synthetic Japanese prose and WARC fixture corpora.
//!
//! Fixtures mix good Japanese pages with everything the pipeline should
//! drop (requests, 404s, images, English pages, short or repetitive
//! pages, a truncated trailing record) and plant one-character-edit
//! copies of earlier-dump pages into later dumps.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Duration, Utc};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::ingest::writer::{gzip_member, WarcRecordBuilder};

const KANJI: &str = "日本語文化社会経済政治歴史地域生活時間世界情報技術研究教育学校会社仕事家族子供友人\
自然環境季節天気食事料理旅行電車駅町村都市山川海空花木鳥犬猫音楽映画写真問題方法結果理由意見説明関係\
状況目的計画準備影響変化発展成長記録資料調査分析報告制度法律国際交流産業市場価格品質安全健康医療病院\
薬科学物理化数計算実験観察図書新聞雑誌番組放送通信郵便銀行保険税金農業漁業工場製品開発設計建築道路橋";
const KATAKANA: &str = "アイウエオカキクケコサシスセソタチツテトナニヌネノハヒフヘホマミムメモヤユヨラリルレロワン";
const OKURIGANA: [&str; 9] = ["する", "して", "した", "される", "な", "的な", "しい", "く", "い"];
const PARTICLES: [&str; 12] = ["は", "が", "を", "に", "で", "と", "も", "の", "から", "まで", "へ", "より"];
const HIRAGANA_WORDS: [&str; 8] = ["こと", "もの", "ため", "よう", "ところ", "わけ", "はず", "とき"];
const ENDINGS: [&str; 6] = ["です。", "ます。", "でした。", "だ。", "である。", "と思います。"];
const ENGLISH: [&str; 24] = [
    "the", "market", "report", "shows", "growth", "in", "several", "regions", "while", "prices",
    "remain", "stable", "and", "analysts", "expect", "further", "change", "during", "next", "year",
    "for", "local", "industry", "workers",
];

/// Japanese-looking prose from a seeded generator. Words are random kanji
/// compounds, so two independently generated texts share almost no
/// character 5-grams.
pub struct ProseGen {
    rng: ChaCha8Rng,
    kanji: Vec<char>,
    katakana: Vec<char>,
}

impl ProseGen {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            // keep only CJK ideographs from the pool
            kanji: KANJI.chars().filter(|c| ('\u{4E00}'..='\u{9FFF}').contains(c)).collect(),
            katakana: KATAKANA.chars().collect(),
        }
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    pub fn word(&mut self) -> String {
        let roll: f64 = self.rng.gen();
        if roll < 0.70 {
            let len = *[1, 2, 2, 2, 3].choose(&mut self.rng).unwrap();
            let mut w: String = (0..len).map(|_| *self.kanji.choose(&mut self.rng).unwrap()).collect();
            if self.rng.gen_bool(0.3) {
                w.push_str(OKURIGANA.choose(&mut self.rng).unwrap());
            }
            w
        } else if roll < 0.85 {
            let len = self.rng.gen_range(2..=5);
            let mut w: String = (0..len).map(|_| *self.katakana.choose(&mut self.rng).unwrap()).collect();
            if self.rng.gen_bool(0.3) {
                w.push('ー');
            }
            w
        } else {
            HIRAGANA_WORDS.choose(&mut self.rng).unwrap().to_string()
        }
    }

    pub fn sentence(&mut self) -> String {
        let chunks = self.rng.gen_range(4..=9);
        let mut s = String::new();
        for i in 0..chunks {
            s.push_str(&self.word());
            if i + 1 == chunks {
                s.push_str(ENDINGS.choose(&mut self.rng).unwrap());
            } else {
                s.push_str(PARTICLES.choose(&mut self.rng).unwrap());
                if self.rng.gen_bool(0.2) {
                    s.push('、');
                }
            }
        }
        s
    }

    pub fn paragraph(&mut self) -> String {
        let n = self.rng.gen_range(3..=6);
        (0..n).map(|_| self.sentence()).collect()
    }

    /// Paragraphs totalling at least `min_chars` characters.
    pub fn paragraphs(&mut self, min_chars: usize) -> Vec<String> {
        let mut out = Vec::new();
        let mut total = 0;
        while total < min_chars {
            let p = self.paragraph();
            total += p.chars().count();
            out.push(p);
        }
        out
    }

    pub fn title(&mut self) -> String {
        format!("{}{}{}", self.word(), PARTICLES.choose(&mut self.rng).unwrap(), self.word())
    }

    pub fn english_paragraph(&mut self) -> String {
        let mut s = String::new();
        for _ in 0..self.rng.gen_range(3..=5) {
            let n = self.rng.gen_range(8..=14);
            let words: Vec<&str> = (0..n).map(|_| *ENGLISH.choose(&mut self.rng).unwrap()).collect();
            let mut sentence = words.join(" ");
            sentence[..1].make_ascii_uppercase();
            s.push_str(&sentence);
            s.push_str(". ");
        }
        s.trim_end().to_string()
    }
}

/// A page body as title plus paragraphs, rendered to HTML with the usual
/// boilerplate around it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Page {
    pub title: String,
    pub paragraphs: Vec<String>,
}

impl Page {
    pub fn to_html(&self) -> String {
        let mut s = String::with_capacity(4096);
        s.push_str("<!DOCTYPE html>\n<html lang=\"ja\"><head><meta charset=\"utf-8\">");
        s.push_str(&format!("<title>{}</title>", self.title));
        s.push_str("<script>var n = 1 < 2 ? 'a' : 'b';</script><style>p { margin: 0 }</style></head>\n<body>");
        s.push_str("<nav><a href=\"/\">ホーム</a> | <a href=\"/about\">サイトについて</a></nav>\n");
        s.push_str(&format!("<h1>{}</h1>\n", self.title));
        for (i, p) in self.paragraphs.iter().enumerate() {
            if i == 1 {
                s.push_str("<h2>概要</h2>\n");
            }
            s.push_str(&format!("<p>{p}</p>\n"));
        }
        s.push_str("<footer>Copyright 2019 example</footer></body></html>\n");
        s
    }

    pub fn to_plain(&self) -> String {
        let mut s = self.title.clone();
        s.push_str("\r\n\r\n");
        s.push_str(&self.paragraphs.join("\r\n\r\n"));
        s.push_str("\r\n");
        s
    }

    /// Replaces one character in the middle of the longest paragraph.
    pub fn with_one_char_edit(&self, replacement: char) -> Page {
        let mut page = self.clone();
        let (idx, _) = page
            .paragraphs
            .iter()
            .enumerate()
            .max_by_key(|(i, p)| (p.chars().count(), usize::MAX - i))
            .expect("page has paragraphs");
        let chars: Vec<char> = page.paragraphs[idx].chars().collect();
        let mut pos = chars.len() / 2;
        while chars[pos] == replacement {
            pos += 1;
        }
        let mut edited = chars;
        edited[pos] = replacement;
        page.paragraphs[idx] = edited.into_iter().collect();
        page
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Good,
    GoodShiftJis,
    GoodUndeclaredShiftJis,
    PlainUtf8,
    PlainEucJp,
    English,
    NotFound,
    Redirect,
    Image,
    Short,
    Repetitive,
}

const KIND_WEIGHTS: [(Kind, u32); 11] = [
    (Kind::Good, 58),
    (Kind::GoodShiftJis, 6),
    (Kind::GoodUndeclaredShiftJis, 3),
    (Kind::PlainUtf8, 4),
    (Kind::PlainEucJp, 3),
    (Kind::English, 7),
    (Kind::NotFound, 4),
    (Kind::Redirect, 2),
    (Kind::Image, 4),
    (Kind::Short, 5),
    (Kind::Repetitive, 4),
];

#[derive(Debug, Clone)]
pub struct FixtureSpec {
    pub dumps: Vec<String>,
    pub files_per_dump: usize,
    pub pages_per_file: usize,
    /// Copies of earlier-dump pages planted into each later dump.
    pub near_duplicates: usize,
    pub seed: u64,
}

impl Default for FixtureSpec {
    fn default() -> Self {
        Self {
            dumps: vec![
                "CC-MAIN-2019-04".into(),
                "CC-MAIN-2019-09".into(),
                "CC-MAIN-2019-13".into(),
            ],
            files_per_dump: 2,
            pages_per_file: 90,
            near_duplicates: 8,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FixtureSummary {
    pub archives: Vec<PathBuf>,
    /// Every WARC record written, damaged ones included.
    pub records: u64,
    /// Planted near-duplicates; exactly this many documents should be
    /// removed by dedup.
    pub planted_duplicates: u64,
    /// (original url, copy url) of each planted pair.
    pub planted_pairs: Vec<(String, String)>,
}

struct PendingRecord(Vec<u8>);

fn request(url: &str, date: DateTime<Utc>) -> PendingRecord {
    let host = url.split('/').nth(2).unwrap_or("example.jp");
    let body = format!("GET / HTTP/1.1\r\nHost: {host}\r\nUser-Agent: synth\r\n\r\n");
    PendingRecord(WarcRecordBuilder::new("request", url).date(date).body(body.into_bytes()).to_bytes())
}

fn response(url: &str, date: DateTime<Utc>, status: u16, ctype: &str, body: &[u8]) -> PendingRecord {
    PendingRecord(
        WarcRecordBuilder::new("response", url)
            .date(date)
            .http_response(status, ctype, body)
            .to_bytes(),
    )
}

fn encode(text: &str, enc: &'static encoding_rs::Encoding) -> Vec<u8> {
    let (bytes, _, unmappable) = enc.encode(text);
    assert!(!unmappable, "synthetic text must be encodable");
    bytes.into_owned()
}

fn page_records(gen: &mut ProseGen, kind: Kind, url: &str, date: DateTime<Utc>) -> (Vec<PendingRecord>, Option<Page>) {
    let mut out = vec![request(url, date)];
    let mut good = None;
    let resp = match kind {
        Kind::Good | Kind::GoodShiftJis | Kind::GoodUndeclaredShiftJis => {
            let page = Page {
                title: gen.title(),
                paragraphs: gen.paragraphs(700),
            };
            let html = page.to_html();
            match kind {
                Kind::Good => {
                    good = Some(page);
                    response(url, date, 200, "text/html; charset=UTF-8", html.as_bytes())
                }
                Kind::GoodShiftJis => {
                    let html = html.replace("charset=\"utf-8\"", "charset=\"Shift_JIS\"");
                    let body = encode(&html, encoding_rs::SHIFT_JIS);
                    response(url, date, 200, "text/html; charset=Shift_JIS", &body)
                }
                _ => response(url, date, 200, "text/html", &encode(&html, encoding_rs::SHIFT_JIS)),
            }
        }
        Kind::PlainUtf8 | Kind::PlainEucJp => {
            let page = Page {
                title: gen.title(),
                paragraphs: gen.paragraphs(600),
            };
            if kind == Kind::PlainUtf8 {
                response(url, date, 200, "text/plain; charset=utf-8", page.to_plain().as_bytes())
            } else {
                let body = encode(&page.to_plain(), encoding_rs::EUC_JP);
                response(url, date, 200, "text/plain; charset=EUC-JP", &body)
            }
        }
        Kind::English => {
            let paragraphs: Vec<String> = (0..4).map(|_| gen.english_paragraph()).collect();
            let page = Page {
                title: "Market update".into(),
                paragraphs,
            };
            response(url, date, 200, "text/html; charset=utf-8", page.to_html().as_bytes())
        }
        Kind::NotFound => response(url, date, 404, "text/html", "<html><body><h1>見つかりません</h1></body></html>".as_bytes()),
        Kind::Redirect => response(url, date, 301, "text/html", b"<html><body>moved</body></html>"),
        Kind::Image => {
            let mut png = b"\x89PNG\r\n\x1a\n".to_vec();
            png.extend((0..200).map(|_| gen.rng().gen::<u8>()));
            response(url, date, 200, "image/png", &png)
        }
        Kind::Short => {
            let page = Page {
                title: gen.title(),
                paragraphs: vec![gen.sentence()],
            };
            response(url, date, 200, "text/html; charset=utf-8", page.to_html().as_bytes())
        }
        Kind::Repetitive => {
            let line = gen.sentence();
            let page = Page {
                title: gen.title(),
                paragraphs: vec![line; 30],
            };
            response(url, date, 200, "text/html; charset=utf-8", page.to_html().as_bytes())
        }
    };
    out.push(resp);
    (out, good)
}

fn pick_kind(rng: &mut ChaCha8Rng) -> Kind {
    let total: u32 = KIND_WEIGHTS.iter().map(|(_, w)| w).sum();
    let mut roll = rng.gen_range(0..total);
    for (kind, w) in KIND_WEIGHTS {
        if roll < w {
            return kind;
        }
        roll -= w;
    }
    unreachable!()
}

fn warcinfo(dump: &str, date: DateTime<Utc>) -> PendingRecord {
    let body = format!("software: corpusforge-synth\r\nisPartOf: {dump}\r\n");
    PendingRecord(WarcRecordBuilder::new("warcinfo", "").date(date).body(body.into_bytes()).to_bytes())
}

/// A record whose block is cut short of its declared length; written last.
fn truncated(url: &str, date: DateTime<Utc>) -> Vec<u8> {
    let mut bytes = response(url, date, 200, "text/html", "<html><body><p>途中で切れた".repeat(20).as_bytes()).0;
    bytes.truncate(bytes.len() - 120);
    bytes
}

fn write_archive(path: &Path, records: &[PendingRecord], tail: &[u8], gzip: bool) -> io::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for r in records {
        if gzip {
            w.write_all(&gzip_member(&r.0))?;
        } else {
            w.write_all(&r.0)?;
        }
    }
    if gzip {
        w.write_all(&gzip_member(tail))?;
    } else {
        w.write_all(tail)?;
    }
    w.flush()
}

/// Writes `root/<dump>/<dump>-<file>.warc[.gz]` for every dump and file.
/// Even-numbered files are gzip member-per-record, odd ones plain WARC.
pub fn write_fixture_corpus(root: &Path, spec: &FixtureSpec) -> io::Result<FixtureSummary> {
    let mut gen = ProseGen::new(spec.seed);
    let mut summary = FixtureSummary::default();
    let mut pool: Vec<(String, Page)> = Vec::new();
    let base = DateTime::from_timestamp(1_546_300_800, 0).unwrap();

    for (d, dump) in spec.dumps.iter().enumerate() {
        let dir = root.join(dump);
        std::fs::create_dir_all(&dir)?;
        let date = base + Duration::days(30 * d as i64);

        let mut files: Vec<Vec<PendingRecord>> = (0..spec.files_per_dump)
            .map(|_| vec![warcinfo(dump, date)])
            .collect();
        let mut fresh = Vec::new();
        for (f, records) in files.iter_mut().enumerate() {
            for p in 0..spec.pages_per_file {
                let url = format!("http://site{}.example.jp/{dump}/{f}/{p}.html", gen.rng().gen_range(0..50));
                let kind = pick_kind(gen.rng());
                let (recs, good) = page_records(&mut gen, kind, &url, date);
                records.extend(recs);
                if let Some(page) = good {
                    fresh.push((url, page));
                }
            }
        }

        if d > 0 && spec.near_duplicates > 0 {
            assert!(pool.len() >= spec.near_duplicates, "not enough pages to copy");
            for _ in 0..spec.near_duplicates {
                let i = gen.rng().gen_range(0..pool.len());
                let (orig_url, page) = pool.swap_remove(i);
                let copy = page.with_one_char_edit('鉄');
                let url = format!("http://mirror.example.jp/{dump}/{}", summary.planted_pairs.len());
                let recs = [
                    request(&url, date),
                    response(&url, date, 200, "text/html; charset=UTF-8", copy.to_html().as_bytes()),
                ];
                let f = gen.rng().gen_range(0..files.len());
                let at = gen.rng().gen_range(1..=files[f].len());
                // keep request and response adjacent
                let at = if at % 2 == 0 { at - 1 } else { at };
                for (k, r) in recs.into_iter().enumerate() {
                    files[f].insert(at + k, r);
                }
                summary.planted_pairs.push((orig_url, url));
                summary.planted_duplicates += 1;
            }
        }
        pool.extend(fresh);

        for (f, records) in files.iter().enumerate() {
            let gzip = f % 2 == 0;
            let name = format!("{dump}-{f:05}.warc{}", if gzip { ".gz" } else { "" });
            let path = dir.join(name);
            let tail = truncated(&format!("http://cut.example.jp/{dump}/{f}"), date);
            write_archive(&path, records, &tail, gzip)?;
            summary.records += records.len() as u64 + 1;
            summary.archives.push(path);
        }
    }
    Ok(summary)
}

/// Writes one gzip member-per-record archive of mostly good Japanese pages
/// until the uncompressed WARC content reaches `target_bytes`. Returns the
/// number of records and the uncompressed byte count.
pub fn write_volume_archive(path: &Path, target_bytes: u64, seed: u64) -> io::Result<(u64, u64)> {
    let mut gen = ProseGen::new(seed);
    let mut w = BufWriter::new(File::create(path)?);
    let date = DateTime::from_timestamp(1_546_300_800, 0).unwrap();
    let (mut records, mut bytes) = (0u64, 0u64);
    let mut p = 0u64;
    while bytes < target_bytes {
        let url = format!("http://volume.example.jp/{p}.html");
        let kind = if p % 10 == 9 { pick_kind(gen.rng()) } else { Kind::Good };
        let (recs, _) = page_records(&mut gen, kind, &url, date);
        for r in recs {
            bytes += r.0.len() as u64;
            records += 1;
            w.write_all(&gzip_member(&r.0))?;
        }
        p += 1;
    }
    w.flush()?;
    Ok((records, bytes))
}
