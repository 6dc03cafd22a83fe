/// Status line and the headers the extractor cares about.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpHead {
    pub status: u16,
    pub content_type: Option<String>,
    /// Offset of the body within the payload.
    pub body_offset: usize,
}

/// Parses the HTTP response head at the start of a `response` payload.
/// Returns `None` when there is no `HTTP/x.y NNN` status line.
pub fn parse_http_head(payload: &[u8]) -> Option<HttpHead> {
    let (head, body_offset) = match split_head(payload) {
        Some((head, off)) => (head, off),
        None => (payload, payload.len()),
    };
    let text = String::from_utf8_lossy(head);
    let mut lines = text.split('\n').map(|l| l.trim_end_matches('\r'));
    let status_line = lines.next()?;
    let mut parts = status_line.split_whitespace();
    if !parts.next()?.starts_with("HTTP/") {
        return None;
    }
    let status = parts.next()?.parse::<u16>().ok()?;
    let content_type = lines
        .filter_map(|l| l.split_once(':'))
        .find(|(name, _)| name.trim().eq_ignore_ascii_case("content-type"))
        .map(|(_, value)| value.trim().to_string());
    Some(HttpHead {
        status,
        content_type,
        body_offset,
    })
}

fn split_head(payload: &[u8]) -> Option<(&[u8], usize)> {
    let crlf = payload.windows(4).position(|w| w == b"\r\n\r\n").map(|i| (i, i + 4));
    let lf = payload.windows(2).position(|w| w == b"\n\n").map(|i| (i, i + 2));
    let (end, body) = match (crlf, lf) {
        (Some(a), Some(b)) => {
            if a.0 <= b.0 {
                a
            } else {
                b
            }
        }
        (a, b) => a.or(b)?,
    };
    Some((&payload[..end], body))
}

/// `charset` parameter of a Content-Type value, lowercased.
pub fn charset_param(content_type: &str) -> Option<String> {
    content_type
        .split(';')
        .skip(1)
        .filter_map(|p| p.split_once('='))
        .find(|(k, _)| k.trim().eq_ignore_ascii_case("charset"))
        .map(|(_, v)| v.trim().trim_matches(['"', '\'']).to_ascii_lowercase())
        .filter(|v| !v.is_empty())
}

/// Media type of a Content-Type value, lowercased and without parameters.
pub fn media_type(content_type: &str) -> String {
    content_type
        .split(';')
        .next()
        .unwrap_or("")
        .trim()
        .to_ascii_lowercase()
}
