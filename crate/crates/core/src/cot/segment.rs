//! Turning the model's boundary excerpts into validated segment offsets.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

/// A half-open range of char offsets into the original text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub end: usize,
    pub start: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub summary: Option<String>,
}

impl Segment {
    pub fn new(start: usize, end: usize) -> Self {
        Segment { end, start, summary: None }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
pub struct Anchor {
    pub start: String,
    pub end: String,
}

/// Minimum share of the excerpt's char bigrams a fuzzy match must hit.
pub const FUZZY_MIN_OVERLAP: f64 = 0.6;

/// Parses the JSON array of `{start, end}` excerpts, tolerating prose or a
/// code fence around it.
pub fn parse_anchors(output: &str) -> Result<Vec<Anchor>, String> {
    let (open, close) = match (output.find('['), output.rfind(']')) {
        (Some(o), Some(c)) if o < c => (o, c),
        _ => return Err("no JSON array in the answer".into()),
    };
    let anchors: Vec<Anchor> =
        serde_json::from_str(&output[open..=close]).map_err(|e| format!("answer is not a list of {{start, end}} objects: {e}"))?;
    if anchors.is_empty() {
        return Err("the list of segments is empty".into());
    }
    if let Some(i) = anchors.iter().position(|a| a.start.trim().is_empty() || a.end.trim().is_empty()) {
        return Err(format!("segment {} has an empty start or end excerpt", i + 1));
    }
    Ok(anchors)
}

fn bigram_counts(chars: &[char]) -> HashMap<(char, char), i32> {
    let mut m = HashMap::new();
    for w in chars.windows(2) {
        *m.entry((w[0], w[1])).or_insert(0) += 1;
    }
    m
}

/// Char-offset range of `excerpt` in `text`. Exact search prefers the first
/// hit at or after `from`; otherwise the window of the same length sharing
/// the most char bigrams wins, provided it shares at least
/// [`FUZZY_MIN_OVERLAP`] of them.
pub fn locate(text: &[char], excerpt: &str, from: usize) -> Option<(usize, usize)> {
    let needle: Vec<char> = excerpt.trim().chars().collect();
    let k = needle.len();
    if k == 0 || k > text.len() {
        return None;
    }
    let exact: Vec<usize> = (0..=text.len() - k).filter(|&i| text[i..i + k] == needle[..]).collect();
    if let Some(&i) = exact.iter().find(|&&i| i >= from).or(exact.first()) {
        return Some((i, i + k));
    }
    if k < 4 {
        return None;
    }
    let target = bigram_counts(&needle);
    let total = (k - 1) as f64;
    let mut best: Option<(f64, usize)> = None;
    for i in 0..=text.len() - k {
        let window = bigram_counts(&text[i..i + k]);
        let shared: i32 = target.iter().map(|(b, &c)| c.min(*window.get(b).unwrap_or(&0))).sum();
        let score = shared as f64 / total;
        // Ties go to the earliest window at or after `from`.
        let better = match best {
            None => true,
            Some((s, j)) => score > s || (score == s && j < from && i >= from),
        };
        if better {
            best = Some((score, i));
        }
    }
    best.filter(|&(s, _)| s >= FUZZY_MIN_OVERLAP).map(|(_, i)| (i, i + k))
}

/// Converts anchors to segments covering `text` exactly. Whitespace-only
/// gaps (including leading/trailing whitespace) are absorbed into the
/// neighbouring segment; anything else is a violation.
pub fn anchors_to_segments(text: &str, anchors: &[Anchor], max_segments: usize) -> Result<Vec<Segment>, String> {
    if anchors.len() > max_segments {
        return Err(format!("{} segments returned, the limit is {max_segments}", anchors.len()));
    }
    let chars: Vec<char> = text.chars().collect();
    let n = chars.len();
    let mut raw = Vec::with_capacity(anchors.len());
    let mut cursor = 0;
    for (i, a) in anchors.iter().enumerate() {
        let (s, _) = locate(&chars, &a.start, cursor)
            .ok_or_else(|| format!("start excerpt of segment {} ({:?}) was not found in the document", i + 1, a.start))?;
        let (_, e) = locate(&chars, &a.end, s)
            .ok_or_else(|| format!("end excerpt of segment {} ({:?}) was not found in the document", i + 1, a.end))?;
        if e <= s {
            return Err(format!("segment {} ends before it starts", i + 1));
        }
        raw.push((s, e));
        cursor = e;
    }
    let blank = |a: usize, b: usize| chars[a..b].iter().all(|c| c.is_whitespace());
    let mut segments: Vec<Segment> = Vec::with_capacity(raw.len());
    for (i, &(s, e)) in raw.iter().enumerate() {
        let start = match segments.last_mut() {
            None if blank(0, s) => 0,
            None => return Err(format!("text before segment 1 is not covered (first {s} chars)")),
            Some(prev) if s < prev.end => {
                return Err(format!("segment {} overlaps segment {}", i + 1, i));
            }
            Some(prev) if blank(prev.end, s) => {
                prev.end = s;
                s
            }
            Some(prev) => {
                return Err(format!("chars {}..{s} between segments {i} and {} are not covered", prev.end, i + 1));
            }
        };
        segments.push(Segment::new(start, e));
    }
    let last = segments.last_mut().expect("anchors are non-empty");
    if !blank(last.end, n) {
        return Err(format!("text after the last segment is not covered (from char {})", last.end));
    }
    last.end = n;
    Ok(segments)
}

/// Checks the partition invariants against a text of `len` chars.
pub fn validate_segments(segments: &[Segment], len: usize) -> Result<(), String> {
    let mut expect = 0;
    for (i, s) in segments.iter().enumerate() {
        if s.start != expect || s.start >= s.end || s.end > len {
            return Err(format!("segment {} ({}..{}) breaks the partition at char {expect}", i + 1, s.start, s.end));
        }
        expect = s.end;
    }
    if expect != len {
        return Err(format!("segments end at char {expect}, text has {len}"));
    }
    Ok(())
}

/// The text of `segment` (char offsets) as a byte slice of `text`.
pub fn segment_text<'a>(text: &'a str, segment: &Segment) -> &'a str {
    let mut idx = text.char_indices().map(|(b, _)| b).chain(std::iter::once(text.len()));
    let start = idx.nth(segment.start).unwrap_or(text.len());
    let end = if segment.end > segment.start {
        idx.nth(segment.end - segment.start - 1).unwrap_or(text.len())
    } else {
        start
    };
    &text[start..end]
}
