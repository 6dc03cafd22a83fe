//! Markdown rendering of an [`HtmlTree`].
//!
//! | HTML                         | Markdown                                   |
//! |------------------------------|--------------------------------------------|
//! | `h1`..`h6`                   | `#`×n, space, text                         |
//! | `p`, `div`, `section`, ...   | paragraph, blank line between blocks       |
//! | `ul` / `ol` > `li`           | `- ` / `1. ` (renumbered from 1)           |
//! | `a` with http(s) `href`      | `[text](href)`, otherwise bare text        |
//! | `strong`, `b` / `em`, `i`    | `**text**` / `*text*`                      |
//! | `pre`, `code`                | fenced block                               |
//! | `table`                      | pipe table, first row as header            |
//! | `br`                         | line break                                 |
//! | `img`                        | dropped                                    |
//! | [`STRIP_TAGS`]               | dropped with their whole subtree           |
//!
//! Text outside code blocks is NFKC-normalised and whitespace-collapsed.
//! Code blocks are emitted byte-for-byte.

use unicode_normalization::UnicodeNormalization;

use super::html::{Element, HtmlTree, Node};

/// Elements removed together with their subtree.
pub const STRIP_TAGS: &[&str] = &[
    "script", "style", "nav", "header", "footer", "aside", "form", "iframe", "noscript", "head",
    "title", "template",
];

const BLOCK_CONTAINERS: &[&str] = &[
    "p", "div", "section", "article", "main", "body", "html", "blockquote", "figure",
    "figcaption", "address", "center", "details", "summary", "dl", "dt", "dd", "fieldset",
    "legend", "hr", "caption", "hgroup", "menu", "dir", "tr", "td", "th", "thead", "tbody",
    "tfoot",
];

#[derive(Debug, Clone, PartialEq)]
enum Block {
    Para(String),
    Heading(usize, String),
    List { ordered: bool, items: Vec<Vec<Block>> },
    Code(String),
    Table(Vec<Vec<String>>),
}

struct Ctx {
    blocks: Vec<Block>,
    inline: String,
    /// Whether the position before `inline` counts as whitespace.
    starts_blank: bool,
}

impl Ctx {
    fn new() -> Self {
        Self {
            blocks: Vec::new(),
            inline: String::new(),
            starts_blank: true,
        }
    }

    /// A nested context for an inline element, inheriting spacing state.
    fn child(&self) -> Self {
        Self {
            blocks: Vec::new(),
            inline: String::new(),
            starts_blank: self.at_blank(),
        }
    }

    fn at_blank(&self) -> bool {
        match self.inline.chars().last() {
            None => self.starts_blank,
            Some(c) => c == ' ' || c == '\n',
        }
    }

    fn push_text(&mut self, text: &str) {
        for c in text.chars() {
            if matches!(c, ' ' | '\t' | '\n' | '\r' | '\x0c') {
                if !self.at_blank() {
                    self.inline.push(' ');
                }
            } else {
                self.inline.push(c);
            }
        }
    }

    fn line_break(&mut self) {
        while self.inline.ends_with(' ') {
            self.inline.pop();
        }
        self.inline.push('\n');
    }

    fn flush(&mut self) {
        if !self.inline.trim().is_empty() {
            self.blocks.push(Block::Para(std::mem::take(&mut self.inline)));
        }
        self.inline.clear();
        self.starts_blank = true;
    }

    fn push_block(&mut self, block: Block) {
        self.flush();
        self.blocks.push(block);
    }

    /// Splices a child context back in: inline-only content is appended,
    /// anything containing blocks is merged without decoration.
    fn merge(&mut self, child: Ctx) {
        if child.blocks.is_empty() {
            self.inline.push_str(&child.inline);
        } else {
            self.flush();
            self.blocks.extend(child.blocks);
            self.inline = child.inline;
            self.starts_blank = true;
        }
    }
}

fn walk(children: &[Node], ctx: &mut Ctx) {
    for node in children {
        match node {
            Node::Text(t) => ctx.push_text(t),
            Node::Element(e) => element(e, ctx),
        }
    }
}

fn element(e: &Element, ctx: &mut Ctx) {
    let tag = e.tag.as_str();
    if STRIP_TAGS.contains(&tag) {
        return;
    }
    match tag {
        "img" => {}
        "br" => ctx.line_break(),
        "h1" | "h2" | "h3" | "h4" | "h5" | "h6" => {
            let level = (tag.as_bytes()[1] - b'0') as usize;
            let text = flat_text(e);
            ctx.flush();
            if !text.is_empty() {
                ctx.push_block(Block::Heading(level, text));
            }
        }
        "ul" | "ol" => {
            ctx.flush();
            let items = list_items(e);
            if !items.is_empty() {
                ctx.push_block(Block::List {
                    ordered: tag == "ol",
                    items,
                });
            }
        }
        "li" => {
            ctx.flush();
            let blocks = item_blocks(&e.children);
            if !blocks.is_empty() {
                ctx.push_block(Block::List {
                    ordered: false,
                    items: vec![blocks],
                });
            }
        }
        "pre" | "code" => {
            ctx.flush();
            let mut raw = String::new();
            raw_text(e, &mut raw);
            let raw = if tag == "pre" {
                raw.strip_prefix("\r\n").or_else(|| raw.strip_prefix('\n')).unwrap_or(&raw).to_string()
            } else {
                raw
            };
            let raw = raw.trim_end_matches(['\n', '\r']);
            if !raw.trim().is_empty() {
                ctx.push_block(Block::Code(raw.to_string()));
            }
        }
        "table" => {
            ctx.flush();
            let rows = table_rows(e);
            if !rows.is_empty() {
                ctx.push_block(Block::Table(rows));
            }
        }
        "strong" | "b" => wrap(e, "**", ctx),
        "em" | "i" => wrap(e, "*", ctx),
        "a" => link(e, ctx),
        _ if BLOCK_CONTAINERS.contains(&tag) => {
            ctx.flush();
            walk(&e.children, ctx);
            ctx.flush();
        }
        _ => walk(&e.children, ctx),
    }
}

/// Leading whitespace, core, trailing whitespace.
fn split_ws(s: &str) -> (&str, &str, &str) {
    let core_start = s.len() - s.trim_start().len();
    let core_end = s.trim_end().len();
    if core_start >= core_end {
        return (s, "", "");
    }
    (&s[..core_start], &s[core_start..core_end], &s[core_end..])
}

fn wrap(e: &Element, marker: &str, ctx: &mut Ctx) {
    let mut child = ctx.child();
    walk(&e.children, &mut child);
    if !child.blocks.is_empty() {
        return ctx.merge(child);
    }
    let (lead, core, trail) = split_ws(&child.inline);
    ctx.inline.push_str(lead);
    if !core.is_empty() {
        ctx.inline.push_str(marker);
        ctx.inline.push_str(core);
        ctx.inline.push_str(marker);
    }
    ctx.inline.push_str(trail);
}

fn is_web_url(href: &str) -> bool {
    let lower = href.trim().to_ascii_lowercase();
    lower.starts_with("http://") || lower.starts_with("https://")
}

fn escape_url(href: &str) -> String {
    let mut out = String::with_capacity(href.len());
    for c in href.trim().chars() {
        match c {
            ' ' => out.push_str("%20"),
            '(' => out.push_str("%28"),
            ')' => out.push_str("%29"),
            '<' => out.push_str("%3C"),
            '>' => out.push_str("%3E"),
            _ => out.push(c),
        }
    }
    out
}

fn link(e: &Element, ctx: &mut Ctx) {
    let mut child = ctx.child();
    walk(&e.children, &mut child);
    let href = e.attr("href").filter(|h| is_web_url(h));
    match href {
        Some(href) if child.blocks.is_empty() => {
            let (lead, core, trail) = split_ws(&child.inline);
            ctx.inline.push_str(lead);
            if !core.is_empty() {
                ctx.inline.push('[');
                ctx.inline.push_str(core);
                ctx.inline.push_str("](");
                ctx.inline.push_str(&escape_url(href));
                ctx.inline.push(')');
            }
            ctx.inline.push_str(trail);
        }
        _ => ctx.merge(child),
    }
}

/// Text content outside the stripped elements, without Markdown syntax.
pub fn visible_text(tree: &HtmlTree) -> String {
    let mut out = String::new();
    raw_text(&tree.root, &mut out);
    out
}

fn raw_text(e: &Element, out: &mut String) {
    for node in &e.children {
        match node {
            Node::Text(t) => out.push_str(t),
            Node::Element(c) if c.tag == "br" => out.push('\n'),
            Node::Element(c) if STRIP_TAGS.contains(&c.tag.as_str()) => {}
            Node::Element(c) => raw_text(c, out),
        }
    }
}

fn block_text(block: &Block, out: &mut Vec<String>) {
    match block {
        Block::Para(s) | Block::Heading(_, s) | Block::Code(s) => out.push(s.clone()),
        Block::List { items, .. } => items.iter().flatten().for_each(|b| block_text(b, out)),
        Block::Table(rows) => out.extend(rows.iter().flatten().cloned()),
    }
}

/// Single-line text of a subtree, for headings and table cells.
fn flat_text(e: &Element) -> String {
    let mut ctx = Ctx::new();
    walk(&e.children, &mut ctx);
    let mut parts = Vec::new();
    for b in &ctx.blocks {
        block_text(b, &mut parts);
    }
    parts.push(ctx.inline);
    parts
        .join(" ")
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
}

fn item_blocks(children: &[Node]) -> Vec<Block> {
    let mut ctx = Ctx::new();
    walk(children, &mut ctx);
    ctx.flush();
    ctx.blocks
}

fn list_items(list: &Element) -> Vec<Vec<Block>> {
    let mut items: Vec<Vec<Block>> = Vec::new();
    for node in &list.children {
        match node {
            Node::Element(li) if li.tag == "li" => {
                let blocks = item_blocks(&li.children);
                if !blocks.is_empty() {
                    items.push(blocks);
                }
            }
            other => {
                // stray content, e.g. a nested list that is a direct child
                let blocks = item_blocks(std::slice::from_ref(other));
                if blocks.is_empty() {
                    continue;
                }
                match items.last_mut() {
                    Some(last) => last.extend(blocks),
                    None => items.push(blocks),
                }
            }
        }
    }
    items
}

fn table_rows(table: &Element) -> Vec<Vec<String>> {
    fn collect(el: &Element, rows: &mut Vec<Vec<String>>) {
        let mut loose: Vec<String> = Vec::new();
        for node in &el.children {
            let Node::Element(c) = node else { continue };
            match c.tag.as_str() {
                "tr" => {
                    if !loose.is_empty() {
                        rows.push(std::mem::take(&mut loose));
                    }
                    let cells: Vec<String> = c
                        .children
                        .iter()
                        .filter_map(|n| match n {
                            Node::Element(cell) if cell.tag == "td" || cell.tag == "th" => {
                                Some(flat_text(cell))
                            }
                            _ => None,
                        })
                        .collect();
                    if !cells.is_empty() {
                        rows.push(cells);
                    }
                }
                "td" | "th" => loose.push(flat_text(c)),
                "table" => {}
                t if STRIP_TAGS.contains(&t) => {}
                _ => collect(c, rows),
            }
        }
        if !loose.is_empty() {
            rows.push(loose);
        }
    }
    let mut rows = Vec::new();
    collect(table, &mut rows);
    if rows.iter().flatten().all(|c| c.is_empty()) {
        rows.clear();
    }
    rows
}

/// NFKC, then neutralise `<` where it could open an HTML tag.
fn normalize_text(s: &str) -> String {
    let nfkc: String = s.nfkc().collect();
    let mut out = String::with_capacity(nfkc.len());
    let mut chars = nfkc.chars().peekable();
    while let Some(c) = chars.next() {
        if c == '<' && chars.peek().is_some_and(|n| n.is_ascii_alphabetic() || matches!(n, '/' | '!' | '?')) {
            out.push_str("&lt;");
        } else {
            out.push(c);
        }
    }
    out
}

fn para_lines(s: &str) -> Vec<String> {
    let text = normalize_text(s);
    let mut lines: Vec<String> = Vec::new();
    for line in text.split('\n') {
        let line = line.trim();
        if line.is_empty() && lines.last().is_none_or(|l| l.is_empty()) {
            continue;
        }
        lines.push(line.to_string());
    }
    while lines.last().is_some_and(|l| l.is_empty()) {
        lines.pop();
    }
    lines
}

fn fence_for(code: &str) -> String {
    let mut longest = 0;
    let mut run = 0;
    for c in code.chars() {
        if c == '`' {
            run += 1;
            longest = longest.max(run);
        } else {
            run = 0;
        }
    }
    "`".repeat((longest + 1).max(3))
}

fn cell(s: &str) -> String {
    normalize_text(s).replace('|', "\\|")
}

fn block_lines(block: &Block) -> Vec<String> {
    match block {
        Block::Para(s) => para_lines(s),
        Block::Heading(level, s) => {
            let text = normalize_text(s).trim().to_string();
            vec![format!("{} {}", "#".repeat(*level), text)]
        }
        Block::Code(code) => {
            let fence = fence_for(code);
            let mut lines = vec![fence.clone()];
            lines.extend(code.split('\n').map(|l| l.strip_suffix('\r').unwrap_or(l).to_string()));
            lines.push(fence);
            lines
        }
        Block::List { ordered, items } => {
            let mut lines = Vec::new();
            for (i, item) in items.iter().enumerate() {
                let marker = if *ordered {
                    format!("{}. ", i + 1)
                } else {
                    "- ".to_string()
                };
                let pad = " ".repeat(marker.len());
                let body: Vec<String> = item.iter().flat_map(block_lines).collect();
                for (j, line) in body.iter().enumerate() {
                    if j == 0 {
                        lines.push(format!("{marker}{line}"));
                    } else if line.is_empty() {
                        lines.push(String::new());
                    } else {
                        lines.push(format!("{pad}{line}"));
                    }
                }
            }
            lines
        }
        Block::Table(rows) => {
            let width = rows.iter().map(Vec::len).max().unwrap_or(0);
            let fmt_row = |row: &Vec<String>| {
                let cells: Vec<String> = (0..width)
                    .map(|i| row.get(i).map(|c| cell(c)).unwrap_or_default())
                    .collect();
                format!("| {} |", cells.join(" | "))
            };
            let mut lines = vec![fmt_row(&rows[0])];
            lines.push(format!("|{}", " --- |".repeat(width)));
            lines.extend(rows[1..].iter().map(fmt_row));
            lines
        }
    }
}

/// Renders the tree as Markdown ending in a single LF, or the empty string
/// when nothing survives.
pub fn render_markdown(tree: &HtmlTree) -> String {
    let mut ctx = Ctx::new();
    walk(&tree.root.children, &mut ctx);
    ctx.flush();
    let mut out = String::new();
    for block in &ctx.blocks {
        let lines = block_lines(block);
        if lines.is_empty() {
            continue;
        }
        if !out.is_empty() {
            out.push('\n');
        }
        for line in lines {
            out.push_str(&line);
            out.push('\n');
        }
    }
    out
}
