use serde::{Deserialize, Serialize};

use super::sensitive::SensitiveMatcher;

/// Why a document was dropped by [`apply_char_filters`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropReason {
    Empty,
    TooShort,
    TooLong,
    LowAvgLine,
    SensitiveTerm,
}

impl DropReason {
    pub fn as_str(self) -> &'static str {
        match self {
            DropReason::Empty => "empty",
            DropReason::TooShort => "too_short",
            DropReason::TooLong => "too_long",
            DropReason::LowAvgLine => "low_avg_line",
            DropReason::SensitiveTerm => "sensitive_term",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct FilterDecision {
    pub keep: bool,
    pub reason: Option<DropReason>,
    /// (term, byte offset) of every sensitive match.
    pub matched_terms: Vec<(String, usize)>,
}

impl FilterDecision {
    pub fn keep() -> Self {
        FilterDecision { keep: true, reason: None, matched_terms: Vec::new() }
    }

    pub fn drop(reason: DropReason) -> Self {
        FilterDecision { keep: false, reason: Some(reason), matched_terms: Vec::new() }
    }
}

/// Line count and total character count, in Unicode scalar values.
///
/// Lines are split on `'\n'` and a trailing empty line is ignored. The total
/// excludes the newline separators, so `total / lines` is the mean line
/// length.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LineStats {
    pub lines: usize,
    pub total_chars: usize,
}

impl LineStats {
    pub fn of(text: &str) -> Self {
        let body = text.strip_suffix('\n').unwrap_or(text);
        if body.is_empty() && text.is_empty() {
            return LineStats { lines: 0, total_chars: 0 };
        }
        let mut lines = 0;
        let mut total_chars = 0;
        for line in body.split('\n') {
            lines += 1;
            total_chars += line.chars().count();
        }
        LineStats { lines, total_chars }
    }

    pub fn mean_line_chars(&self) -> f64 {
        if self.lines == 0 {
            0.0
        } else {
            self.total_chars as f64 / self.lines as f64
        }
    }
}

/// Length and sensitivity thresholds applied by [`apply_char_filters`].
#[derive(Debug, Clone)]
pub struct CharFilterRules {
    pub min_avg_line_chars: f64,
    pub min_total_chars: usize,
    pub max_total_chars: usize,
}

impl Default for CharFilterRules {
    fn default() -> Self {
        CharFilterRules { min_avg_line_chars: 10.0, min_total_chars: 100, max_total_chars: 20_000 }
    }
}

/// Decides whether a document survives the rule-based filters. Checks run in
/// order: empty, total-length bounds (inclusive), mean line length (`>=`),
/// then sensitive terms.
pub fn apply_char_filters(
    text: &str,
    rules: &CharFilterRules,
    sensitive: Option<&SensitiveMatcher>,
) -> FilterDecision {
    if text.trim().is_empty() {
        return FilterDecision::drop(DropReason::Empty);
    }
    let stats = LineStats::of(text);
    if stats.total_chars < rules.min_total_chars {
        return FilterDecision::drop(DropReason::TooShort);
    }
    if stats.total_chars > rules.max_total_chars {
        return FilterDecision::drop(DropReason::TooLong);
    }
    if stats.mean_line_chars() < rules.min_avg_line_chars {
        return FilterDecision::drop(DropReason::LowAvgLine);
    }
    if let Some(matcher) = sensitive {
        let matched = matcher.find_all(text);
        if !matched.is_empty() {
            return FilterDecision {
                keep: false,
                reason: Some(DropReason::SensitiveTerm),
                matched_terms: matched,
            };
        }
    }
    FilterDecision::keep()
}
