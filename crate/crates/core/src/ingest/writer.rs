//! Serialising WARC records, used for fixtures and synthetic corpora.

use std::io::Write;

use chrono::{DateTime, SecondsFormat, Utc};
use flate2::write::GzEncoder;
use flate2::Compression;
use xxhash_rust::xxh3::xxh3_64;

#[derive(Debug, Clone)]
pub struct WarcRecordBuilder {
    warc_type: String,
    target_uri: String,
    date: DateTime<Utc>,
    record_id: String,
    body: Vec<u8>,
}

impl WarcRecordBuilder {
    pub fn new(warc_type: &str, target_uri: &str) -> Self {
        Self {
            warc_type: warc_type.to_string(),
            target_uri: target_uri.to_string(),
            date: DateTime::from_timestamp(1_500_000_000, 0).unwrap(),
            record_id: String::new(),
            body: Vec::new(),
        }
    }

    pub fn date(mut self, date: DateTime<Utc>) -> Self {
        self.date = date;
        self
    }

    pub fn record_id(mut self, id: impl Into<String>) -> Self {
        self.record_id = id.into();
        self
    }

    pub fn body(mut self, body: Vec<u8>) -> Self {
        self.body = body;
        self
    }

    /// Sets the block to an HTTP/1.1 response with the given status line
    /// and Content-Type.
    pub fn http_response(mut self, status: u16, content_type: &str, body: &[u8]) -> Self {
        let mut block = format!(
            "HTTP/1.1 {status} X\r\nContent-Type: {content_type}\r\nContent-Length: {}\r\n\r\n",
            body.len()
        )
        .into_bytes();
        block.extend_from_slice(body);
        self.body = block;
        self
    }

    /// The record in WARC/1.0 framing, including the trailing CRLF CRLF.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.body.len() + 256);
        out.extend_from_slice(b"WARC/1.0\r\n");
        out.extend_from_slice(format!("WARC-Type: {}\r\n", self.warc_type).as_bytes());
        if !self.target_uri.is_empty() {
            out.extend_from_slice(format!("WARC-Target-URI: {}\r\n", self.target_uri).as_bytes());
        }
        let date = self.date.to_rfc3339_opts(SecondsFormat::Secs, true);
        out.extend_from_slice(format!("WARC-Date: {date}\r\n").as_bytes());
        let record_id = if self.record_id.is_empty() {
            let a = xxh3_64(&self.body);
            let b = xxh3_64(format!("{}{}{date}", self.warc_type, self.target_uri).as_bytes());
            format!(
                "<urn:uuid:{:08x}-{:04x}-{:04x}-{:04x}-{:012x}>",
                a >> 32,
                (a >> 16) & 0xffff,
                a & 0xffff,
                b >> 48,
                b & 0xffff_ffff_ffff
            )
        } else {
            self.record_id.clone()
        };
        out.extend_from_slice(format!("WARC-Record-ID: {record_id}\r\n").as_bytes());
        out.extend_from_slice(format!("Content-Length: {}\r\n\r\n", self.body.len()).as_bytes());
        out.extend_from_slice(&self.body);
        out.extend_from_slice(b"\r\n\r\n");
        out
    }
}

/// Compresses `data` as one standalone gzip member.
pub fn gzip_member(data: &[u8]) -> Vec<u8> {
    let mut enc = GzEncoder::new(Vec::with_capacity(data.len() / 2 + 64), Compression::fast());
    enc.write_all(data).expect("write to Vec");
    enc.finish().expect("finish gzip into Vec")
}
