use unicode_normalization::UnicodeNormalization;

fn is_fence(line: &str) -> bool {
    line.nfkc().collect::<String>().trim_start().starts_with("```")
}

/// Normalises a plain-text document: LF line endings, control characters
/// other than LF and TAB removed, NFKC outside ``` fences, and runs of
/// three or more blank lines reduced to one.
pub fn normalize_plain(text: &str) -> String {
    let unified = text.replace("\r\n", "\n").replace('\r', "\n");
    let cleaned: String = unified
        .chars()
        .filter(|&c| c == '\n' || c == '\t' || !c.is_control())
        .collect();

    let mut lines: Vec<String> = Vec::new();
    let mut in_fence = false;
    let mut blank_run: Vec<String> = Vec::new();
    let flush_blanks = |run: &mut Vec<String>, lines: &mut Vec<String>| {
        if run.len() >= 3 {
            lines.push(String::new());
        } else {
            lines.append(run);
        }
        run.clear();
    };
    for line in cleaned.split('\n') {
        if in_fence {
            lines.push(line.to_string());
            if is_fence(line) {
                in_fence = false;
            }
            continue;
        }
        let normalized: String = line.nfkc().collect();
        if normalized.trim().is_empty() {
            blank_run.push(normalized);
            continue;
        }
        flush_blanks(&mut blank_run, &mut lines);
        if is_fence(line) {
            in_fence = true;
        }
        lines.push(normalized);
    }
    flush_blanks(&mut blank_run, &mut lines);
    lines.join("\n")
}
