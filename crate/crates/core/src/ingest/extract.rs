use chrono::{DateTime, SecondsFormat, Utc};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::charset::{decode_charset, CharsetFallbacks};
use super::http::{charset_param, media_type, parse_http_head};
use super::record::{RecordType, WarcRecord};
use crate::doc::DocId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ContentKind {
    Html,
    Plain,
}

/// A decoded HTTP response body, before Markdown conversion.
///
/// `lang_score` is filled in by the ingest stage after scoring.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawDocument {
    pub doc_id: DocId,
    pub url: String,
    #[serde(serialize_with = "ser_rfc3339", deserialize_with = "de_rfc3339")]
    pub fetch_time: DateTime<Utc>,
    pub content_kind: ContentKind,
    pub charset: String,
    pub lang_score: f64,
    pub text: String,
}

fn ser_rfc3339<S: Serializer>(t: &DateTime<Utc>, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(&t.to_rfc3339_opts(SecondsFormat::AutoSi, true))
}

fn de_rfc3339<'de, D: Deserializer<'de>>(d: D) -> Result<DateTime<Utc>, D::Error> {
    let s = String::deserialize(d)?;
    DateTime::parse_from_rfc3339(&s)
        .map(|t| t.with_timezone(&Utc))
        .map_err(serde::de::Error::custom)
}

/// Why a record produced no document.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ExtractDrop {
    NonResponse,
    Non200,
    NonText,
    DecodeFailure,
}

impl ExtractDrop {
    pub fn as_str(&self) -> &'static str {
        match self {
            ExtractDrop::NonResponse => "non_response",
            ExtractDrop::Non200 => "non_200",
            ExtractDrop::NonText => "non_text",
            ExtractDrop::DecodeFailure => "decode_failure",
        }
    }
}

fn content_kind(content_type: Option<&str>) -> Option<ContentKind> {
    match media_type(content_type?).as_str() {
        "text/html" => Some(ContentKind::Html),
        "text/plain" => Some(ContentKind::Plain),
        _ => None,
    }
}

/// Turns a qualifying response record (status 200, text/html or
/// text/plain) into a [`RawDocument`] with HTTP headers stripped.
/// Payloads that decode only lossily are dropped.
pub fn extract_response_document(
    record: &WarcRecord,
    doc_id: DocId,
    fallbacks: &CharsetFallbacks,
) -> Result<RawDocument, ExtractDrop> {
    if record.record_type != RecordType::Response {
        return Err(ExtractDrop::NonResponse);
    }
    if record.http_status != Some(200) {
        return Err(ExtractDrop::Non200);
    }
    let kind = content_kind(record.http_content_type.as_deref()).ok_or(ExtractDrop::NonText)?;
    let head = parse_http_head(&record.payload).ok_or(ExtractDrop::Non200)?;
    let body = &record.payload[head.body_offset..];
    let declared = record.http_content_type.as_deref().and_then(charset_param);
    let decoded = decode_charset(body, declared.as_deref(), fallbacks);
    if decoded.lossy {
        return Err(ExtractDrop::DecodeFailure);
    }
    Ok(RawDocument {
        doc_id,
        url: record.target_uri.clone(),
        fetch_time: record.record_date,
        content_kind: kind,
        charset: decoded.charset,
        lang_score: 0.0,
        text: decoded.text,
    })
}
