//! Record-by-record iteration over WARC archives.
//!
//! Two framings are supported: the CommonCrawl convention of one gzip member
//! per record, and uncompressed WARC. Both recover from damaged records by
//! resynchronising on the next gzip magic or `WARC/1.` line rather than
//! failing the whole archive.

use std::collections::VecDeque;
use std::io::{self, Read};

use flate2::{Crc, Decompress, FlushDecompress, Status};

use super::http::parse_http_head;
use super::record::{parse_record_header, RecordType, WarcRecord};

const READ_CHUNK: usize = 64 * 1024;
const MAX_HEADER_BYTES: usize = 1 << 20;
const GZIP_MAGIC: [u8; 3] = [0x1f, 0x8b, 0x08];
const WARC_MAGIC: &[u8] = b"WARC/1.";

#[derive(Debug, thiserror::Error)]
pub enum ReadError {
    #[error("archive is neither gzip nor WARC")]
    UnreadableArchive,
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Why a member was not yielded as a record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SkipReason {
    /// Payload shorter than the declared `Content-Length`.
    Truncated,
    MalformedHeader,
    /// A response record whose payload has no parseable HTTP status line.
    MalformedHttp,
    /// A gzip member that failed to inflate or failed its CRC check.
    CorruptMember,
}

impl SkipReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            SkipReason::Truncated => "truncated",
            SkipReason::MalformedHeader => "malformed_header",
            SkipReason::MalformedHttp => "malformed_http",
            SkipReason::CorruptMember => "corrupt_member",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ReadStats {
    pub yielded: u64,
    pub truncated: u64,
    pub malformed_header: u64,
    pub malformed_http: u64,
    pub corrupt_member: u64,
}

impl ReadStats {
    pub fn skipped(&self) -> u64 {
        self.truncated + self.malformed_header + self.malformed_http + self.corrupt_member
    }

    /// Every member seen, yielded or not.
    pub fn members(&self) -> u64 {
        self.yielded + self.skipped()
    }

    pub fn skip_counts(&self) -> [(SkipReason, u64); 4] {
        [
            (SkipReason::Truncated, self.truncated),
            (SkipReason::MalformedHeader, self.malformed_header),
            (SkipReason::MalformedHttp, self.malformed_http),
            (SkipReason::CorruptMember, self.corrupt_member),
        ]
    }

    fn count(&mut self, reason: SkipReason) {
        match reason {
            SkipReason::Truncated => self.truncated += 1,
            SkipReason::MalformedHeader => self.malformed_header += 1,
            SkipReason::MalformedHttp => self.malformed_http += 1,
            SkipReason::CorruptMember => self.corrupt_member += 1,
        }
    }
}

/// Growable window over the input with absolute offsets.
struct Window<R> {
    src: R,
    buf: Vec<u8>,
    start: usize,
    base: u64,
    eof: bool,
}

impl<R: Read> Window<R> {
    fn new(src: R, base: u64) -> Self {
        Self {
            src,
            buf: Vec::new(),
            start: 0,
            base,
            eof: false,
        }
    }

    fn read_more(&mut self) -> io::Result<usize> {
        if self.eof {
            return Ok(0);
        }
        let len = self.buf.len();
        self.buf.resize(len + READ_CHUNK, 0);
        let n = loop {
            match self.src.read(&mut self.buf[len..]) {
                Ok(n) => break n,
                Err(e) if e.kind() == io::ErrorKind::Interrupted => continue,
                Err(e) => {
                    self.buf.truncate(len);
                    return Err(e);
                }
            }
        };
        self.buf.truncate(len + n);
        if n == 0 {
            self.eof = true;
        }
        Ok(n)
    }

    /// Makes `buf[..end]` available if the input is long enough.
    fn ensure(&mut self, end: usize) -> io::Result<bool> {
        while self.buf.len() < end {
            if self.read_more()? == 0 {
                return Ok(false);
            }
        }
        Ok(true)
    }

    fn compact(&mut self) {
        if self.start > 0 && (self.start == self.buf.len() || self.start > 4 * READ_CHUNK) {
            self.buf.drain(..self.start);
            self.base += self.start as u64;
            self.start = 0;
        }
    }

    fn offset_of(&self, pos: usize) -> u64 {
        self.base + pos as u64
    }

    /// First index `>= from` where `pred` matches a candidate of `len` bytes.
    fn scan(&mut self, from: usize, len: usize, pred: impl Fn(&[u8]) -> bool) -> io::Result<Option<usize>> {
        let mut pos = from;
        loop {
            while pos + len <= self.buf.len() {
                if pred(&self.buf[pos..pos + len]) {
                    return Ok(Some(pos));
                }
                pos += 1;
            }
            if self.read_more()? == 0 {
                return Ok(None);
            }
        }
    }
}

fn find(hay: &[u8], needle: &[u8]) -> Option<usize> {
    hay.windows(needle.len()).position(|w| w == needle)
}

/// End of the header block (index just past the blank line).
fn header_end(data: &[u8]) -> Option<usize> {
    let crlf = find(data, b"\r\n\r\n").map(|i| i + 4);
    let lf = find(data, b"\n\n").map(|i| i + 2);
    match (crlf, lf) {
        (Some(a), Some(b)) => Some(a.min(b)),
        (a, b) => a.or(b),
    }
}

const RECORD_START_LEN: usize = WARC_MAGIC.len() + 2;

/// `WARC/1.<digit>` followed by a line break.
fn is_record_start(c: &[u8]) -> bool {
    c.starts_with(WARC_MAGIC) && c[7].is_ascii_digit() && matches!(c[8], b'\r' | b'\n')
}

fn next_record_start(data: &[u8], from: usize) -> Option<usize> {
    data.get(from..)?
        .windows(RECORD_START_LEN)
        .position(is_record_start)
        .map(|i| from + i)
}

fn skip_newlines(data: &[u8]) -> usize {
    data.iter().take_while(|b| matches!(b, b'\r' | b'\n')).count()
}

type Item = Result<WarcRecord, SkipReason>;

fn build_record(header_block: &[u8], payload: Vec<u8>, offset: u64, index: u32) -> Item {
    let header = parse_record_header(header_block).map_err(|_| SkipReason::MalformedHeader)?;
    if (payload.len() as u64) < header.content_length {
        return Err(SkipReason::Truncated);
    }
    let (http_status, http_content_type) = if header.record_type == RecordType::Response {
        let head = parse_http_head(&payload).ok_or(SkipReason::MalformedHttp)?;
        (Some(head.status), head.content_type)
    } else {
        (None, None)
    };
    Ok(WarcRecord {
        record_type: header.record_type,
        target_uri: header.target_uri,
        record_date: header.record_date,
        record_id: header.record_id,
        content_length: header.content_length,
        payload,
        http_status,
        http_content_type,
        offset,
        index,
    })
}

/// Parses every record contained in one decompressed gzip member.
fn parse_member(data: &[u8], offset: u64, first_index: u32) -> Vec<Item> {
    let mut out = Vec::new();
    let mut pos = skip_newlines(data);
    while pos < data.len() {
        let index = first_index + out.len() as u32;
        let rest = &data[pos..];
        let Some(hdr_len) = header_end(rest) else {
            out.push(Err(SkipReason::MalformedHeader));
            break;
        };
        let header = match parse_record_header(&rest[..hdr_len]) {
            Ok(h) => h,
            Err(_) => {
                out.push(Err(SkipReason::MalformedHeader));
                break;
            }
        };
        let available = (rest.len() - hdr_len) as u64;
        if available < header.content_length {
            out.push(Err(SkipReason::Truncated));
            break;
        }
        let end = hdr_len + header.content_length as usize;
        out.push(build_record(&rest[..hdr_len], rest[hdr_len..end].to_vec(), offset, index));
        pos += end;
        pos += skip_newlines(&data[pos..]);
    }
    out
}

enum Framing {
    Gzip,
    Plain,
    Empty,
}

/// Iterator over the records of one archive.
///
/// Damaged members are skipped and tallied in [`WarcReader::stats`].
pub struct WarcReader<R> {
    window: Window<R>,
    framing: Framing,
    next_index: u32,
    pending: VecDeque<Item>,
    stats: ReadStats,
    error: Option<io::Error>,
}

/// Opens an archive for iteration, sniffing gzip versus plain WARC.
pub fn iterate_warc<R: Read>(archive: R) -> Result<WarcReader<R>, ReadError> {
    WarcReader::with_position(archive, 0, 0)
}

impl<R: Read> WarcReader<R> {
    /// Starts reading at a record boundary previously reported through
    /// [`WarcRecord::offset`] / [`WarcRecord::index`]. The caller positions
    /// `archive` at `offset`.
    pub fn with_position(archive: R, offset: u64, index: u32) -> Result<Self, ReadError> {
        let mut window = Window::new(archive, offset);
        window.ensure(5)?;
        let head = &window.buf[..];
        let framing = if head.is_empty() {
            Framing::Empty
        } else if head.len() >= 2 && head[..2] == GZIP_MAGIC[..2] {
            Framing::Gzip
        } else if head.starts_with(b"WARC/") {
            Framing::Plain
        } else {
            return Err(ReadError::UnreadableArchive);
        };
        Ok(Self {
            window,
            framing,
            next_index: index,
            pending: VecDeque::new(),
            stats: ReadStats::default(),
            error: None,
        })
    }

    pub fn stats(&self) -> &ReadStats {
        &self.stats
    }

    /// An I/O error that ended iteration early, if any.
    pub fn take_error(&mut self) -> Option<io::Error> {
        self.error.take()
    }

    fn fill_pending(&mut self) -> io::Result<()> {
        match self.framing {
            Framing::Empty => Ok(()),
            Framing::Gzip => self.next_gzip_member(),
            Framing::Plain => self.next_plain_record(),
        }
    }

    fn next_gzip_member(&mut self) -> io::Result<()> {
        let w = &mut self.window;
        w.compact();
        if w.start == w.buf.len() && w.read_more()? == 0 {
            return Ok(());
        }
        let member_start = w.start;
        let offset = w.offset_of(member_start);
        match inflate_member(w, member_start)? {
            Some((data, end)) => {
                w.start = end;
                let items = parse_member(&data, offset, self.next_index);
                if items.is_empty() {
                    // an empty member carries no record; nothing to count
                    return Ok(());
                }
                self.next_index += items.len() as u32;
                self.pending.extend(items);
            }
            None => {
                let next = w.scan(member_start + 1, 3, |c| c == GZIP_MAGIC)?;
                w.start = next.unwrap_or(w.buf.len());
                self.next_index += 1;
                self.pending.push_back(Err(SkipReason::CorruptMember));
            }
        }
        Ok(())
    }

    fn next_plain_record(&mut self) -> io::Result<()> {
        let w = &mut self.window;
        w.compact();
        loop {
            if w.start == w.buf.len() && w.read_more()? == 0 {
                return Ok(());
            }
            let n = skip_newlines(&w.buf[w.start..]);
            if n == 0 {
                break;
            }
            w.start += n;
        }
        let rec_start = w.start;
        let offset = w.offset_of(rec_start);
        let index = self.next_index;
        self.next_index += 1;

        let hdr_end = loop {
            if let Some(e) = header_end(&w.buf[rec_start..]) {
                break Some(rec_start + e);
            }
            if w.buf.len() - rec_start > MAX_HEADER_BYTES || w.read_more()? == 0 {
                break None;
            }
        };
        let resync = |w: &mut Window<R>, from: usize| -> io::Result<()> {
            let next = w.scan(from, RECORD_START_LEN, is_record_start)?;
            w.start = next.unwrap_or(w.buf.len());
            Ok(())
        };
        let Some(hdr_end) = hdr_end else {
            self.pending.push_back(Err(SkipReason::MalformedHeader));
            return resync(w, rec_start + 1);
        };
        let header = match parse_record_header(&w.buf[rec_start..hdr_end]) {
            Ok(h) => h,
            Err(_) => {
                self.pending.push_back(Err(SkipReason::MalformedHeader));
                return resync(w, rec_start + 1);
            }
        };
        let payload_end = hdr_end + header.content_length as usize;
        let complete = w.ensure(payload_end)?;
        if !complete {
            self.pending.push_back(Err(SkipReason::Truncated));
            let next = next_record_start(&w.buf, hdr_end);
            w.start = next.unwrap_or(w.buf.len());
            return Ok(());
        }
        // A well-formed record is followed by CRLF CRLF. If that is missing
        // and another record header begins inside the declared payload, the
        // record was cut short and the next one starts there.
        w.ensure(payload_end + RECORD_START_LEN)?;
        let trailer_ok = {
            let tail = &w.buf[payload_end..];
            tail.starts_with(b"\r\n\r\n")
                || tail.starts_with(b"\n\n")
                || tail.iter().all(|b| b.is_ascii_whitespace())
        };
        if !trailer_ok {
            let limit = (payload_end + RECORD_START_LEN).min(w.buf.len());
            if let Some(next) = next_record_start(&w.buf[..limit], hdr_end) {
                self.pending.push_back(Err(SkipReason::Truncated));
                w.start = next;
                return Ok(());
            }
        }
        let payload = w.buf[hdr_end..payload_end].to_vec();
        let item = build_record(&w.buf[rec_start..hdr_end], payload, offset, index);
        w.start = payload_end;
        self.pending.push_back(item);
        Ok(())
    }
}

/// Inflates the gzip member starting at `pos`, returning its bytes and the
/// window index just past its trailer, or `None` when the member is corrupt.
fn inflate_member<R: Read>(w: &mut Window<R>, pos: usize) -> io::Result<Option<(Vec<u8>, usize)>> {
    if !w.ensure(pos + 10)? || w.buf[pos..pos + 3] != GZIP_MAGIC {
        return Ok(None);
    }
    let flags = w.buf[pos + 3];
    let mut cur = pos + 10;
    if flags & 0x04 != 0 {
        if !w.ensure(cur + 2)? {
            return Ok(None);
        }
        let xlen = u16::from_le_bytes([w.buf[cur], w.buf[cur + 1]]) as usize;
        cur += 2 + xlen;
    }
    for flag in [0x08u8, 0x10] {
        if flags & flag != 0 {
            match w.scan(cur, 1, |b| b[0] == 0)? {
                Some(z) => cur = z + 1,
                None => return Ok(None),
            }
        }
    }
    if flags & 0x02 != 0 {
        cur += 2;
    }

    let mut inflater = Decompress::new(false);
    let mut out: Vec<u8> = Vec::with_capacity(READ_CHUNK);
    loop {
        if cur >= w.buf.len() && w.read_more()? == 0 {
            return Ok(None);
        }
        if out.capacity() - out.len() < READ_CHUNK {
            out.reserve(out.capacity().max(READ_CHUNK));
        }
        let (in_before, out_before) = (inflater.total_in(), inflater.total_out());
        let status = match inflater.decompress_vec(&w.buf[cur..], &mut out, FlushDecompress::None) {
            Ok(s) => s,
            Err(_) => return Ok(None),
        };
        cur += (inflater.total_in() - in_before) as usize;
        match status {
            Status::StreamEnd => break,
            Status::Ok | Status::BufError => {
                let progressed =
                    inflater.total_in() != in_before || inflater.total_out() != out_before;
                if !progressed && cur < w.buf.len() {
                    return Ok(None);
                }
            }
        }
    }
    if !w.ensure(cur + 8)? {
        return Ok(None);
    }
    let trailer = &w.buf[cur..cur + 8];
    let crc = u32::from_le_bytes(trailer[..4].try_into().unwrap());
    let isize = u32::from_le_bytes(trailer[4..].try_into().unwrap());
    let mut check = Crc::new();
    check.update(&out);
    if check.sum() != crc || check.amount() != isize {
        return Ok(None);
    }
    Ok(Some((out, cur + 8)))
}

impl<R: Read> Iterator for WarcReader<R> {
    type Item = WarcRecord;

    fn next(&mut self) -> Option<WarcRecord> {
        loop {
            while let Some(item) = self.pending.pop_front() {
                match item {
                    Ok(record) => {
                        self.stats.yielded += 1;
                        return Some(record);
                    }
                    Err(reason) => {
                        log::debug!("skipping WARC member: {}", reason.as_str());
                        self.stats.count(reason);
                    }
                }
            }
            if self.error.is_some() {
                return None;
            }
            let before = self.window.offset_of(self.window.start);
            if let Err(e) = self.fill_pending() {
                self.error = Some(e);
                continue;
            }
            let after = self.window.offset_of(self.window.start);
            if self.pending.is_empty() && before == after {
                return None;
            }
        }
    }
}
