//! Removal of license/copyright comment blocks from source files.
//!
//! Only the first `max_lines` lines are examined. Consecutive comment lines
//! form a block; a block is removed whole when any of its lines contains one
//! of the patterns (case-insensitive). Code lines are never touched, even if
//! they mention a pattern inside a string literal.

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BoilerplateRules {
    /// Lower-cased substrings.
    pub patterns: Vec<String>,
    pub max_lines: usize,
}

impl Default for BoilerplateRules {
    fn default() -> Self {
        BoilerplateRules {
            patterns: vec!["copyright".into(), "license".into(), "all rights reserved".into()],
            max_lines: 100,
        }
    }
}

impl BoilerplateRules {
    pub fn with_patterns<I: IntoIterator<Item = S>, S: AsRef<str>>(patterns: I) -> Self {
        BoilerplateRules {
            patterns: patterns.into_iter().map(|p| p.as_ref().to_lowercase()).collect(),
            ..Default::default()
        }
    }

    fn matches(&self, line: &str) -> bool {
        let lower = line.to_lowercase();
        self.patterns.iter().any(|p| lower.contains(p.as_str()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum LineKind {
    Blank,
    Comment,
    Code,
}

const LINE_PREFIXES: &[&str] = &["//", "--", ";;", "%"];

/// Block comment delimiters that may open a comment at the start of a line.
const BLOCKS: &[(&str, &str)] = &[("/*", "*/"), ("<!--", "-->"), ("\"\"\"", "\"\"\""), ("'''", "'''")];

fn is_hash_comment(trimmed: &str) -> bool {
    // `#` comments, but not shebangs or C preprocessor directives.
    match trimmed.strip_prefix('#') {
        Some(rest) => rest.is_empty() || rest.starts_with([' ', '\t', '#']),
        None => false,
    }
}

/// Classifies lines, tracking multi-line block comments.
fn classify(lines: &[&str]) -> Vec<LineKind> {
    let mut kinds = Vec::with_capacity(lines.len());
    let mut open_block: Option<&str> = None;
    for line in lines {
        let trimmed = line.trim();
        if let Some(close) = open_block {
            match trimmed.find(close) {
                Some(at) => {
                    open_block = None;
                    if trimmed[at + close.len()..].trim().is_empty() {
                        kinds.push(LineKind::Comment);
                    } else {
                        kinds.push(LineKind::Code);
                    }
                }
                None => kinds.push(LineKind::Comment),
            }
            continue;
        }
        if trimmed.is_empty() {
            kinds.push(LineKind::Blank);
            continue;
        }
        if LINE_PREFIXES.iter().any(|p| trimmed.starts_with(p)) || is_hash_comment(trimmed) {
            kinds.push(LineKind::Comment);
            continue;
        }
        if let Some(&(open, close)) = BLOCKS.iter().find(|(open, _)| trimmed.starts_with(open)) {
            let body = &trimmed[open.len()..];
            match body.find(close) {
                Some(at) if body[at + close.len()..].trim().is_empty() => kinds.push(LineKind::Comment),
                Some(_) => kinds.push(LineKind::Code),
                None => {
                    open_block = Some(close);
                    kinds.push(LineKind::Comment);
                }
            }
            continue;
        }
        // Continuation lines of `/* ... */` blocks written without an
        // opening line in view (e.g. " * text").
        if trimmed == "*" || ["* ", "*\t", "*/", "**"].iter().any(|p| trimmed.starts_with(p)) {
            kinds.push(LineKind::Comment);
            continue;
        }
        kinds.push(LineKind::Code);
    }
    kinds
}

/// Strips matching comment blocks and returns the new text plus the number
/// of bytes removed. Everything outside removed blocks is byte-identical.
pub fn strip_code_boilerplate(text: &str, rules: &BoilerplateRules) -> (String, usize) {
    let lines: Vec<&str> = text.split_inclusive('\n').collect();
    let head = lines.len().min(rules.max_lines);
    let kinds = classify(&lines[..head]);

    let mut remove = vec![false; lines.len()];
    let mut i = 0;
    while i < head {
        if kinds[i] != LineKind::Comment {
            i += 1;
            continue;
        }
        let start = i;
        while i < head && kinds[i] == LineKind::Comment {
            i += 1;
        }
        // A block cut off by the head limit may continue below it.
        let truncated = i == head && head < lines.len();
        if !truncated && lines[start..i].iter().any(|l| rules.matches(l)) {
            remove[start..i].iter_mut().for_each(|r| *r = true);
        }
    }

    if !remove.iter().any(|&r| r) {
        return (text.to_string(), 0);
    }
    let mut out = String::with_capacity(text.len());
    let mut removed = 0;
    for (line, gone) in lines.iter().zip(&remove) {
        if *gone {
            removed += line.len();
        } else {
            out.push_str(line);
        }
    }
    (out, removed)
}
