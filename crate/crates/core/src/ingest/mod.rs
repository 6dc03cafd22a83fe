//! WARC ingestion: record iteration, response extraction, charset
//! decoding and Japanese scoring.

pub mod charset;
pub mod extract;
pub mod http;
pub mod lang;
pub mod reader;
pub mod record;
pub mod writer;

pub use charset::{decode_charset, CharsetFallbacks, Decoded};
pub use extract::{extract_response_document, ContentKind, ExtractDrop, RawDocument};
pub use lang::{score_japanese, LangScore, LanguageDetector, RatioDetector};
pub use reader::{iterate_warc, ReadError, ReadStats, SkipReason, WarcReader};
pub use record::{parse_record_header, HeaderError, RecordHeader, RecordType, WarcRecord};
