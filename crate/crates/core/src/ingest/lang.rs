//! Japanese-content scoring by character class.

use unicode_general_category::{get_general_category, GeneralCategory};

/// Fraction of Japanese-script letters among all letters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LangScore {
    pub score: f64,
    pub letter_count: u64,
}

pub fn is_letter(c: char) -> bool {
    matches!(
        get_general_category(c),
        GeneralCategory::UppercaseLetter
            | GeneralCategory::LowercaseLetter
            | GeneralCategory::TitlecaseLetter
            | GeneralCategory::ModifierLetter
            | GeneralCategory::OtherLetter
    )
}

/// Hiragana, katakana (including half-width and phonetic extensions) and
/// CJK unified ideographs.
pub fn is_japanese_script(c: char) -> bool {
    matches!(c,
        '\u{3040}'..='\u{309F}'
        | '\u{30A0}'..='\u{30FF}'
        | '\u{31F0}'..='\u{31FF}'
        | '\u{FF66}'..='\u{FF9F}'
        | '\u{3400}'..='\u{4DBF}'
        | '\u{4E00}'..='\u{9FFF}'
        | '\u{F900}'..='\u{FAFF}'
        | '\u{20000}'..='\u{3134F}')
}

pub fn score_japanese(text: &str) -> LangScore {
    let (mut letters, mut japanese) = (0u64, 0u64);
    for c in text.chars().filter(|&c| is_letter(c)) {
        letters += 1;
        if is_japanese_script(c) {
            japanese += 1;
        }
    }
    let score = if letters == 0 {
        0.0
    } else {
        japanese as f64 / letters as f64
    };
    LangScore {
        score,
        letter_count: letters,
    }
}

/// Pluggable Japanese-detection seam; the default is [`RatioDetector`].
pub trait LanguageDetector: Send + Sync {
    fn score(&self, text: &str) -> LangScore;
    fn is_japanese(&self, score: &LangScore) -> bool;
}

#[derive(Debug, Clone, Copy)]
pub struct RatioDetector {
    pub threshold: f64,
}

impl Default for RatioDetector {
    fn default() -> Self {
        Self { threshold: 0.30 }
    }
}

impl LanguageDetector for RatioDetector {
    fn score(&self, text: &str) -> LangScore {
        score_japanese(text)
    }

    fn is_japanese(&self, score: &LangScore) -> bool {
        score.score >= self.threshold
    }
}
