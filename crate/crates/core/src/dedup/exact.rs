//! Exact substring deduplication over a corpus suffix array.
//!
//! Eligible documents are concatenated with a `0xFF 0xFF` separator (never
//! valid UTF-8). Every `length_threshold_bytes`-long window whose bytes
//! occur in two or more eligible documents is kept at its first occurrence
//! (document order, then offset) and marked for removal everywhere else.
//! The union of marked windows is excised per document, snapped inward to
//! code-point boundaries.

use serde::{Deserialize, Serialize};

use super::suffix_array::{build_suffix_array_with_budget, SuffixArrayError, MAX_SUFFIX_ARRAY_BYTES};
use crate::io::{fingerprint_records, format_fingerprint};
use crate::record::DocumentRecord;
use crate::report::StageReport;
use crate::text::{ceil_char_boundary, count_tokens, floor_char_boundary};

const SEPARATOR: [u8; 2] = [0xff, 0xff];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExactDedupParams {
    pub length_threshold_bytes: usize,
    pub min_doc_words: usize,
    pub min_remaining_chars: usize,
    /// Cap on the concatenated corpus handed to the suffix array.
    pub memory_budget_bytes: usize,
}

impl Default for ExactDedupParams {
    fn default() -> Self {
        ExactDedupParams {
            length_threshold_bytes: 800,
            min_doc_words: 35,
            min_remaining_chars: 100,
            memory_budget_bytes: MAX_SUFFIX_ARRAY_BYTES,
        }
    }
}

impl ExactDedupParams {
    pub fn validate(&self) -> Result<(), String> {
        for (name, v) in [
            ("length_threshold_bytes", self.length_threshold_bytes),
            ("min_doc_words", self.min_doc_words),
            ("min_remaining_chars", self.min_remaining_chars),
            ("memory_budget_bytes", self.memory_budget_bytes),
        ] {
            if v == 0 {
                return Err(format!("{name} must be positive"));
            }
        }
        Ok(())
    }
}

/// One excised byte range, for the audit sidecar.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RemovedRange {
    pub doc_id: String,
    pub end: usize,
    pub start: usize,
}

#[derive(Debug, thiserror::Error)]
pub enum ExactDedupError {
    #[error(transparent)]
    SuffixArray(#[from] SuffixArrayError),
}

#[derive(Debug, Clone)]
pub struct ExactDedupOutcome {
    pub docs: Vec<DocumentRecord>,
    /// Ranges in original-text byte offsets, grouped by doc in input order.
    pub removed: Vec<RemovedRange>,
    pub dropped_ids: Vec<String>,
    pub report: StageReport,
}

struct Layout {
    /// Input index of each eligible doc.
    members: Vec<usize>,
    /// Start offset of each eligible doc in the corpus.
    starts: Vec<usize>,
    lens: Vec<usize>,
}

impl Layout {
    fn slot_of(&self, pos: usize) -> usize {
        self.starts.partition_point(|&s| s <= pos) - 1
    }

    /// True if the window `[pos, pos + len)` lies inside one document.
    fn window_fits(&self, pos: usize, len: usize) -> bool {
        let slot = self.slot_of(pos);
        pos + len <= self.starts[slot] + self.lens[slot]
    }
}

/// Returns, per eligible slot, the merged `[start, end)` ranges (local byte
/// offsets, before code-point snapping) that must be excised.
fn marked_ranges(corpus: &[u8], layout: &Layout, window: usize, budget: usize) -> Result<Vec<Vec<(usize, usize)>>, ExactDedupError> {
    let sa = build_suffix_array_with_budget(corpus, budget)?;
    let mut marked: Vec<u32> = Vec::new();
    let mut group: Vec<u32> = Vec::new();

    let flush = |group: &mut Vec<u32>, marked: &mut Vec<u32>| {
        if group.len() >= 2 {
            let first_slot = layout.slot_of(group[0] as usize);
            let multi_doc = group.iter().any(|&p| layout.slot_of(p as usize) != first_slot);
            if multi_doc {
                let first = *group.iter().min().unwrap();
                marked.extend(group.iter().copied().filter(|&p| p != first));
            }
        }
        group.clear();
    };

    let mut prev: Option<usize> = None;
    for &pos in &sa {
        let pos = pos as usize;
        if !layout.window_fits(pos, window) {
            flush(&mut group, &mut marked);
            prev = None;
            continue;
        }
        match prev {
            Some(p) if corpus[p..p + window] == corpus[pos..pos + window] => {}
            _ => flush(&mut group, &mut marked),
        }
        group.push(pos as u32);
        prev = Some(pos);
    }
    flush(&mut group, &mut marked);
    drop(sa);

    marked.sort_unstable();
    let mut per_slot: Vec<Vec<(usize, usize)>> = vec![Vec::new(); layout.members.len()];
    for pos in marked {
        let pos = pos as usize;
        let slot = layout.slot_of(pos);
        let local = pos - layout.starts[slot];
        let ranges = &mut per_slot[slot];
        match ranges.last_mut() {
            Some(last) if local <= last.1 => last.1 = last.1.max(local + window),
            _ => ranges.push((local, local + window)),
        }
    }
    Ok(per_slot)
}

/// Removes cross-document repeated substrings of at least
/// `length_threshold_bytes` bytes, keeping the first occurrence.
pub fn exact_dedup(docs: Vec<DocumentRecord>, params: &ExactDedupParams) -> Result<ExactDedupOutcome, ExactDedupError> {
    let window = params.length_threshold_bytes;
    let mut layout = Layout { members: Vec::new(), starts: Vec::new(), lens: Vec::new() };
    let mut corpus_len = 0usize;
    for (i, doc) in docs.iter().enumerate() {
        if doc.text.len() >= window && count_tokens(&doc.text) >= params.min_doc_words {
            layout.members.push(i);
            layout.starts.push(corpus_len);
            layout.lens.push(doc.text.len());
            corpus_len += doc.text.len() + SEPARATOR.len();
        }
    }

    let mut per_slot = Vec::new();
    if layout.members.len() >= 2 {
        let mut corpus = Vec::with_capacity(corpus_len);
        for &i in &layout.members {
            corpus.extend_from_slice(docs[i].text.as_bytes());
            corpus.extend_from_slice(&SEPARATOR);
        }
        per_slot = marked_ranges(&corpus, &layout, window, params.memory_budget_bytes)?;
    }

    let mut edits: Vec<Option<&[(usize, usize)]>> = vec![None; docs.len()];
    for (slot, ranges) in per_slot.iter().enumerate() {
        if !ranges.is_empty() {
            edits[layout.members[slot]] = Some(ranges);
        }
    }

    let docs_in = docs.len() as u64;
    let mut out = Vec::with_capacity(docs.len());
    let mut removed = Vec::new();
    let mut dropped_ids = Vec::new();
    let mut bytes_removed = 0u64;
    for (mut doc, edit) in docs.into_iter().zip(edits) {
        let Some(ranges) = edit else {
            out.push(doc);
            continue;
        };
        let mut kept = String::with_capacity(doc.text.len());
        let mut cursor = 0;
        let mut edited = false;
        for &(start, end) in ranges {
            let start = ceil_char_boundary(&doc.text, start);
            let end = floor_char_boundary(&doc.text, end);
            if start >= end {
                continue;
            }
            kept.push_str(&doc.text[cursor..start]);
            cursor = end;
            bytes_removed += (end - start) as u64;
            edited = true;
            removed.push(RemovedRange { doc_id: doc.id.clone(), end, start });
        }
        if !edited {
            out.push(doc);
            continue;
        }
        kept.push_str(&doc.text[cursor..]);
        if kept.chars().count() < params.min_remaining_chars {
            dropped_ids.push(doc.id);
        } else {
            doc.text = kept;
            out.push(doc);
        }
    }

    let mut report = StageReport::new("dedup_exact")
        .param("length_threshold_bytes", window)
        .param("min_doc_words", params.min_doc_words)
        .param("min_remaining_chars", params.min_remaining_chars);
    report.docs_in = docs_in;
    report.docs_out = out.len() as u64;
    report.docs_dropped = dropped_ids.len() as u64;
    report.bytes_removed = bytes_removed;
    report.fingerprint = format_fingerprint(fingerprint_records(&out));
    Ok(ExactDedupOutcome { docs: out, removed, dropped_ids, report })
}
