use std::fmt;

use chrono::{DateTime, Utc};

/// `WARC-Type` values; anything unrecognised maps to [`RecordType::Other`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RecordType {
    Warcinfo,
    Request,
    Response,
    Metadata,
    Resource,
    Other,
}

impl RecordType {
    pub fn from_warc_type(value: &str) -> Self {
        match value.trim().to_ascii_lowercase().as_str() {
            "warcinfo" => RecordType::Warcinfo,
            "request" => RecordType::Request,
            "response" => RecordType::Response,
            "metadata" => RecordType::Metadata,
            "resource" => RecordType::Resource,
            _ => RecordType::Other,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            RecordType::Warcinfo => "warcinfo",
            RecordType::Request => "request",
            RecordType::Response => "response",
            RecordType::Metadata => "metadata",
            RecordType::Resource => "resource",
            RecordType::Other => "other",
        }
    }
}

impl fmt::Display for RecordType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// The fields of a WARC header block that the pipeline uses.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecordHeader {
    pub record_type: RecordType,
    pub target_uri: String,
    pub record_date: DateTime<Utc>,
    pub record_id: String,
    pub content_length: u64,
}

/// One parsed WARC record.
///
/// `offset` is the byte position in the archive where the record (or its
/// gzip member) starts, and `index` its ordinal among all members, so a
/// reader can be restarted at any record.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WarcRecord {
    pub record_type: RecordType,
    pub target_uri: String,
    pub record_date: DateTime<Utc>,
    pub record_id: String,
    pub content_length: u64,
    pub payload: Vec<u8>,
    pub http_status: Option<u16>,
    pub http_content_type: Option<String>,
    pub offset: u64,
    pub index: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum HeaderError {
    #[error("missing WARC/1.x version line")]
    MissingVersion,
    #[error("missing or invalid Content-Length")]
    MissingContentLength,
}

/// Parses the header block of a record (everything before the first blank
/// line). Field names are case-insensitive and unknown fields are ignored.
/// A missing or unparseable `WARC-Date` falls back to the Unix epoch.
pub fn parse_record_header(block: &[u8]) -> Result<RecordHeader, HeaderError> {
    let text = String::from_utf8_lossy(block);
    let mut lines = text.split('\n').map(|l| l.strip_suffix('\r').unwrap_or(l));

    let version = lines
        .by_ref()
        .find(|l| !l.trim().is_empty())
        .ok_or(HeaderError::MissingVersion)?;
    if !is_version_line(version) {
        return Err(HeaderError::MissingVersion);
    }

    let mut fields: Vec<(String, String)> = Vec::new();
    for line in lines {
        if line.is_empty() {
            break;
        }
        if line.starts_with([' ', '\t']) {
            // folded continuation of the previous field
            if let Some((_, value)) = fields.last_mut() {
                value.push(' ');
                value.push_str(line.trim());
            }
            continue;
        }
        if let Some((name, value)) = line.split_once(':') {
            fields.push((name.trim().to_ascii_lowercase(), value.trim().to_string()));
        }
    }

    let get = |name: &str| {
        fields
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v.as_str())
    };

    let content_length = get("content-length")
        .and_then(|v| v.parse::<u64>().ok())
        .ok_or(HeaderError::MissingContentLength)?;
    let record_type = get("warc-type")
        .map(RecordType::from_warc_type)
        .unwrap_or(RecordType::Other);
    let target_uri = get("warc-target-uri")
        .map(|v| v.trim_matches(['<', '>']).to_string())
        .unwrap_or_default();
    let record_date = get("warc-date")
        .and_then(|v| DateTime::parse_from_rfc3339(v).ok())
        .map(|d| d.with_timezone(&Utc))
        .unwrap_or(DateTime::UNIX_EPOCH);
    let record_id = get("warc-record-id").unwrap_or_default().to_string();

    Ok(RecordHeader {
        record_type,
        target_uri,
        record_date,
        record_id,
        content_length,
    })
}

fn is_version_line(line: &str) -> bool {
    line.trim()
        .strip_prefix("WARC/1.")
        .is_some_and(|minor| !minor.is_empty() && minor.bytes().all(|b| b.is_ascii_digit()))
}
