//! Payload decoding with legacy Japanese encodings as fallbacks.

use encoding_rs::{Encoding, EUC_JP, ISO_2022_JP, SHIFT_JIS, UTF_8};

/// Result of [`decode_charset`]; `lossy` is set when no candidate decoded
/// cleanly and replacement characters were substituted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Decoded {
    pub text: String,
    pub charset: String,
    pub lossy: bool,
}

/// Candidate encodings tried after the declared charset and UTF-8.
#[derive(Debug, Clone)]
pub struct CharsetFallbacks(Vec<&'static Encoding>);

impl Default for CharsetFallbacks {
    fn default() -> Self {
        Self(vec![SHIFT_JIS, EUC_JP, ISO_2022_JP])
    }
}

impl CharsetFallbacks {
    /// Builds a fallback list from WHATWG encoding labels.
    pub fn from_labels<S: AsRef<str>>(labels: &[S]) -> Result<Self, String> {
        labels
            .iter()
            .map(|l| Encoding::for_label(l.as_ref().trim().as_bytes()).ok_or_else(|| l.as_ref().to_string()))
            .collect::<Result<Vec<_>, _>>()
            .map(Self)
    }
}

fn label(enc: &'static Encoding) -> String {
    enc.name().to_ascii_lowercase()
}

fn strict(enc: &'static Encoding, bytes: &[u8]) -> Option<String> {
    enc.decode_without_bom_handling_and_without_replacement(bytes)
        .map(|c| c.into_owned())
}

/// Tries the declared charset, then UTF-8, then each fallback; the first
/// decoding without invalid sequences wins.
pub fn decode_charset(payload: &[u8], declared: Option<&str>, fallbacks: &CharsetFallbacks) -> Decoded {
    let declared = declared.and_then(|d| Encoding::for_label(d.trim().as_bytes()));
    let mut tried: Vec<&'static Encoding> = Vec::with_capacity(5);
    let candidates = declared.into_iter().chain([UTF_8]).chain(fallbacks.0.iter().copied());
    for enc in candidates {
        if tried.contains(&enc) {
            continue;
        }
        tried.push(enc);
        // UTF-16 labels resolve to encoders that never fail; skip them
        if enc.output_encoding() != enc {
            continue;
        }
        if let Some(text) = strict(enc, payload) {
            return Decoded {
                text,
                charset: label(enc),
                lossy: false,
            };
        }
    }
    Decoded {
        text: String::from_utf8_lossy(payload).into_owned(),
        charset: label(UTF_8),
        lossy: true,
    }
}
