//! Error-tolerant HTML parsing into a small element tree.
//!
//! This is not an HTML5 tree builder. It handles the implied end tags that
//! matter for text extraction (paragraphs, list items, table cells, ...),
//! closes unclosed elements when an ancestor closes, and never fails.

use html_escape::decode_html_entities;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Node {
    Element(Element),
    Text(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Element {
    /// Always lowercase.
    pub tag: String,
    pub attrs: Vec<(String, String)>,
    pub children: Vec<Node>,
}

impl Element {
    pub fn new(tag: impl Into<String>) -> Self {
        Self {
            tag: tag.into(),
            attrs: Vec::new(),
            children: Vec::new(),
        }
    }

    pub fn attr(&self, name: &str) -> Option<&str> {
        self.attrs
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v.as_str())
    }
}

pub const ROOT_TAG: &str = "#document";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HtmlTree {
    pub root: Element,
}

impl HtmlTree {
    pub fn is_empty(&self) -> bool {
        self.root.children.is_empty()
    }
}

const VOID: &[&str] = &[
    "area", "base", "br", "col", "embed", "hr", "img", "input", "link", "meta", "param", "source",
    "track", "wbr",
];

/// Elements whose content is raw text up to the matching end tag.
const RAW_TEXT: &[&str] = &[
    "script", "style", "textarea", "title", "xmp", "iframe", "noembed", "noframes", "noscript",
    "plaintext",
];

/// Opening any of these closes an open `<p>`.
const CLOSES_P: &[&str] = &[
    "address", "article", "aside", "blockquote", "center", "details", "dialog", "dir", "div", "dl",
    "fieldset", "figcaption", "figure", "footer", "form", "h1", "h2", "h3", "h4", "h5", "h6",
    "header", "hgroup", "hr", "li", "main", "menu", "nav", "ol", "p", "pre", "section", "summary",
    "table", "ul",
];

const HEADINGS: &[&str] = &["h1", "h2", "h3", "h4", "h5", "h6"];

/// Implied-end rules: opening `tag` closes the nearest open element in
/// `closes`, unless an element in `bounds` is found first.
fn implied_close(tag: &str) -> Option<(&'static [&'static str], &'static [&'static str])> {
    const LIST_BOUNDS: &[&str] = &["ul", "ol", "menu", "dir", "table"];
    const TABLE_BOUNDS: &[&str] = &["table"];
    Some(match tag {
        "li" => (&["li"], LIST_BOUNDS),
        "dt" | "dd" => (&["dt", "dd"], &["dl", "table"]),
        "tr" => (&["tr"], TABLE_BOUNDS),
        "td" | "th" => (&["td", "th"], &["tr", "table"]),
        "thead" | "tbody" | "tfoot" => (&["thead", "tbody", "tfoot"], TABLE_BOUNDS),
        "option" => (&["option"], &["select", "datalist"]),
        "optgroup" => (&["optgroup", "option"], &["select"]),
        "a" => (&["a"], &[]),
        _ => return None,
    })
}

/// Elements that stop the search for an open `<p>`.
const P_SCOPE_BOUNDS: &[&str] = &["table", "td", "th", "caption", "button", "object", "applet", "marquee"];

struct Builder {
    /// Open elements; index 0 is the root.
    stack: Vec<Element>,
}

impl Builder {
    fn new() -> Self {
        Self {
            stack: vec![Element::new(ROOT_TAG)],
        }
    }

    fn current(&mut self) -> &mut Element {
        self.stack.last_mut().expect("root is never popped")
    }

    fn pop(&mut self) {
        if self.stack.len() > 1 {
            let el = self.stack.pop().unwrap();
            self.current().children.push(Node::Element(el));
        }
    }

    fn pop_through(&mut self, depth: usize) {
        while self.stack.len() > depth {
            self.pop();
        }
    }

    /// Depth of the nearest open element named in `targets`, searching
    /// down from the top and stopping at any element in `bounds`.
    fn find_open(&self, targets: &[&str], bounds: &[&str]) -> Option<usize> {
        for (i, el) in self.stack.iter().enumerate().skip(1).rev() {
            if targets.contains(&el.tag.as_str()) {
                return Some(i);
            }
            if bounds.contains(&el.tag.as_str()) {
                return None;
            }
        }
        None
    }

    fn text(&mut self, raw: &str) {
        if raw.is_empty() {
            return;
        }
        let decoded = decode_html_entities(raw);
        let cur = self.current();
        if let Some(Node::Text(prev)) = cur.children.last_mut() {
            prev.push_str(&decoded);
        } else {
            cur.children.push(Node::Text(decoded.into_owned()));
        }
    }

    fn raw_text(&mut self, raw: &str) {
        if !raw.is_empty() {
            self.current().children.push(Node::Text(raw.to_string()));
        }
    }

    fn open(&mut self, el: Element, self_closing: bool) {
        let tag = el.tag.as_str();
        if CLOSES_P.contains(&tag) {
            if let Some(d) = self.find_open(&["p"], P_SCOPE_BOUNDS) {
                self.pop_through(d);
            }
        }
        if HEADINGS.contains(&tag) && HEADINGS.contains(&self.current().tag.as_str()) {
            self.pop();
        }
        if let Some((closes, bounds)) = implied_close(tag) {
            if let Some(d) = self.find_open(closes, bounds) {
                self.pop_through(d);
            }
        }
        let void = VOID.contains(&tag) || self_closing;
        self.stack.push(el);
        if void {
            self.pop();
        }
    }

    fn close(&mut self, tag: &str) {
        if let Some(d) = self.find_open(&[tag], &[]) {
            self.pop_through(d);
        }
    }

    fn finish(mut self) -> HtmlTree {
        self.pop_through(1);
        HtmlTree {
            root: self.stack.pop().unwrap(),
        }
    }
}

fn is_name_char(c: u8) -> bool {
    c.is_ascii_alphanumeric() || matches!(c, b'-' | b'_' | b':' | b'.')
}

fn find_ci(hay: &str, needle: &str) -> Option<usize> {
    let h = hay.as_bytes();
    let n = needle.as_bytes();
    if n.len() > h.len() {
        return None;
    }
    (0..=h.len() - n.len()).find(|&i| h[i..i + n.len()].eq_ignore_ascii_case(n))
}

/// Parses a start tag beginning at `s[0] == '<'`. Returns the element, the
/// self-closing flag and the number of bytes consumed.
fn parse_start_tag(s: &str) -> (Element, bool, usize) {
    let b = s.as_bytes();
    let mut i = 1;
    while i < b.len() && is_name_char(b[i]) {
        i += 1;
    }
    let mut el = Element::new(s[1..i].to_ascii_lowercase());
    let mut self_closing = false;
    loop {
        while i < b.len() && (b[i].is_ascii_whitespace() || b[i] == b'/') {
            if b[i] == b'/' {
                self_closing = true;
            }
            i += 1;
        }
        if i >= b.len() {
            return (el, self_closing, i);
        }
        if b[i] == b'>' {
            return (el, self_closing, i + 1);
        }
        self_closing = false;
        let name_start = i;
        while i < b.len() && !b[i].is_ascii_whitespace() && !matches!(b[i], b'=' | b'>' | b'/') {
            i += 1;
        }
        let name = s[name_start..i].to_ascii_lowercase();
        while i < b.len() && b[i].is_ascii_whitespace() {
            i += 1;
        }
        let mut value = String::new();
        if i < b.len() && b[i] == b'=' {
            i += 1;
            while i < b.len() && b[i].is_ascii_whitespace() {
                i += 1;
            }
            if i < b.len() && (b[i] == b'"' || b[i] == b'\'') {
                let q = b[i];
                let start = i + 1;
                let end = b[start..].iter().position(|&c| c == q).map_or(b.len(), |p| start + p);
                value = decode_html_entities(&s[start..end]).into_owned();
                i = (end + 1).min(b.len());
            } else {
                let start = i;
                while i < b.len() && !b[i].is_ascii_whitespace() && b[i] != b'>' {
                    i += 1;
                }
                value = decode_html_entities(&s[start..i]).into_owned();
            }
        }
        if !name.is_empty() && el.attr(&name).is_none() {
            el.attrs.push((name, value));
        }
    }
}

/// Parses arbitrary, possibly malformed HTML. Comments, doctypes and
/// processing instructions are dropped.
pub fn parse_html(text: &str) -> HtmlTree {
    let mut builder = Builder::new();
    let b = text.as_bytes();
    let mut i = 0;
    let mut text_start = 0;
    while i < b.len() {
        if b[i] != b'<' {
            i += 1;
            continue;
        }
        let rest = &text[i..];
        let next = b.get(i + 1).copied();
        let consumed = if let Some(comment) = rest.strip_prefix("<!--") {
            builder.text(&text[text_start..i]);
            Some(comment.find("-->").map_or(rest.len(), |p| p + 7))
        } else if matches!(next, Some(b'!') | Some(b'?')) {
            builder.text(&text[text_start..i]);
            Some(rest.find('>').map_or(rest.len(), |p| p + 1))
        } else if next == Some(b'/') && b.get(i + 2).is_some_and(|c| c.is_ascii_alphabetic()) {
            builder.text(&text[text_start..i]);
            let mut j = 2;
            while j < rest.len() && is_name_char(rest.as_bytes()[j]) {
                j += 1;
            }
            let tag = rest[2..j].to_ascii_lowercase();
            builder.close(&tag);
            Some(rest.find('>').map_or(rest.len(), |p| p + 1))
        } else if next.is_some_and(|c| c.is_ascii_alphabetic()) {
            builder.text(&text[text_start..i]);
            let (el, self_closing, n) = parse_start_tag(rest);
            let tag = el.tag.clone();
            let raw = RAW_TEXT.contains(&tag.as_str()) && !self_closing;
            builder.open(el, self_closing);
            let mut n = n;
            if raw {
                let body = &rest[n..];
                let close = format!("</{tag}");
                let end = find_ci(body, &close).unwrap_or(body.len());
                builder.raw_text(&body[..end]);
                let after = &body[end..];
                let tail = if after.is_empty() {
                    0
                } else {
                    after.find('>').map_or(after.len(), |p| p + 1)
                };
                n += end + tail;
                builder.close(&tag);
            }
            Some(n)
        } else {
            None
        };
        match consumed {
            Some(n) => {
                i += n;
                text_start = i;
            }
            None => i += 1,
        }
    }
    builder.text(&text[text_start..]);
    builder.finish()
}
