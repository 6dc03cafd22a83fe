//! HTML-to-Markdown conversion and plain-text normalisation.

pub mod html;
pub mod plain;
pub mod render;

use serde::{Deserialize, Serialize};

pub use html::{parse_html, Element, HtmlTree, Node};
pub use plain::normalize_plain;
pub use render::{render_markdown, visible_text, STRIP_TAGS};

use crate::doc::DocId;
use crate::ingest::{ContentKind, RawDocument};

/// The canonical per-page record carried from conversion to sharding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: DocId,
    pub url: String,
    pub markdown: String,
    pub lang_score: f64,
    pub char_count: u64,
    pub line_count: u64,
}

impl Document {
    /// Builds a document, deriving the counts from `markdown`.
    pub fn new(doc_id: DocId, url: impl Into<String>, markdown: String, lang_score: f64) -> Self {
        let char_count = markdown.chars().count() as u64;
        let line_count = markdown.lines().count() as u64;
        Self {
            doc_id,
            url: url.into(),
            markdown,
            lang_score,
            char_count,
            line_count,
        }
    }

    pub fn byte_size(&self) -> u64 {
        self.markdown.len() as u64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum ConvertError {
    #[error("document is empty after conversion")]
    EmptyAfterConversion,
}

/// Converts a raw page into a [`Document`]; `lang_score` is the score that
/// admitted it.
pub fn to_document(raw: &RawDocument, lang_score: f64) -> Result<Document, ConvertError> {
    let markdown = match raw.content_kind {
        ContentKind::Html => render_markdown(&parse_html(&raw.text)),
        ContentKind::Plain => normalize_plain(&raw.text),
    };
    if markdown.trim().is_empty() {
        return Err(ConvertError::EmptyAfterConversion);
    }
    Ok(Document::new(raw.doc_id.clone(), raw.url.clone(), markdown, lang_score))
}
