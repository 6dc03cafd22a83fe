//! Positional document identity shared by every stage.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Identity of a document: `(dump_label, file_index, record_index)`.
///
/// Ordering is the lexicographic triple order, which makes the earliest
/// dump (then file, then record) the minimum.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct DocId {
    pub dump: String,
    pub file: u32,
    pub record: u32,
}

impl DocId {
    pub fn new(dump: impl Into<String>, file: u32, record: u32) -> Self {
        Self {
            dump: dump.into(),
            file,
            record,
        }
    }
}

impl fmt::Display for DocId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}/{}", self.dump, self.file, self.record)
    }
}

#[derive(Debug, thiserror::Error)]
#[error("invalid doc id {0:?}, expected \"dump/file/record\"")]
pub struct ParseDocIdError(String);

impl FromStr for DocId {
    type Err = ParseDocIdError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || ParseDocIdError(s.to_string());
        let mut parts = s.rsplitn(3, '/');
        let record = parts.next().and_then(|p| p.parse().ok()).ok_or_else(bad)?;
        let file = parts.next().and_then(|p| p.parse().ok()).ok_or_else(bad)?;
        let dump = parts.next().filter(|d| !d.is_empty()).ok_or_else(bad)?;
        Ok(DocId::new(dump, file, record))
    }
}

impl Serialize for DocId {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for DocId {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
