//! Rule-based filters and normalizations applied before deduplication:
//! Simplified-script conversion, code boilerplate stripping, length and
//! line-length bounds, and sensitive-term filtering.

mod boilerplate;
mod filters;
mod sensitive;
mod simplify;

pub use boilerplate::{strip_code_boilerplate, BoilerplateRules};
pub use filters::{apply_char_filters, CharFilterRules, DropReason, FilterDecision, LineStats};
pub use sensitive::{drop_matching_lines, match_sensitive_terms, SensitiveMatcher};
pub use simplify::{to_simplified, SimplifyMap};

use serde::{Deserialize, Serialize};

use crate::record::DocumentRecord;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SensitivePolicy {
    /// Any match drops the whole document.
    #[default]
    DropDoc,
    /// Lines containing a match are removed; the rest is kept if it still
    /// passes the length filters.
    DropLine,
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum RulesError {
    #[error("min_total_chars ({min}) exceeds max_total_chars ({max})")]
    InvertedBounds { min: usize, max: usize },
    #[error("min_avg_line_chars must be positive, got {0}")]
    NonPositiveLineLength(f64),
}

#[derive(Debug, Clone)]
pub struct FilterRules {
    pub chars: CharFilterRules,
    pub sensitive: Option<SensitiveMatcher>,
    pub sensitive_policy: SensitivePolicy,
    pub simplify_map: Option<SimplifyMap>,
    /// Languages the simplify map applies to.
    pub simplify_langs: Vec<String>,
    pub strip_code_boilerplate: bool,
    pub boilerplate: BoilerplateRules,
    /// `source` values treated as code.
    pub code_sources: Vec<String>,
}

impl Default for FilterRules {
    fn default() -> Self {
        FilterRules {
            chars: CharFilterRules::default(),
            sensitive: None,
            sensitive_policy: SensitivePolicy::DropDoc,
            simplify_map: None,
            simplify_langs: vec!["zh".into()],
            strip_code_boilerplate: true,
            boilerplate: BoilerplateRules::default(),
            code_sources: vec!["code".into()],
        }
    }
}

impl FilterRules {
    pub fn validate(&self) -> Result<(), RulesError> {
        if self.chars.min_total_chars > self.chars.max_total_chars {
            return Err(RulesError::InvertedBounds {
                min: self.chars.min_total_chars,
                max: self.chars.max_total_chars,
            });
        }
        if !(self.chars.min_avg_line_chars > 0.0) {
            return Err(RulesError::NonPositiveLineLength(self.chars.min_avg_line_chars));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct PreprocessOutcome {
    /// The normalized record, or `None` when dropped.
    pub record: Option<DocumentRecord>,
    pub decision: FilterDecision,
    /// Bytes removed by boilerplate stripping and line-level term removal.
    pub bytes_removed: usize,
}

/// Runs every preprocessing rule over one record.
///
/// Order: script conversion, code boilerplate stripping, line-level
/// sensitive removal (if that policy is active), then [`apply_char_filters`].
pub fn preprocess_record(mut doc: DocumentRecord, rules: &FilterRules) -> PreprocessOutcome {
    if let Some(map) = &rules.simplify_map {
        if rules.simplify_langs.contains(&doc.lang) {
            doc.text = to_simplified(&doc.text, map);
        }
    }

    let mut bytes_removed = 0;
    if rules.strip_code_boilerplate && rules.code_sources.contains(&doc.source) {
        let (text, removed) = strip_code_boilerplate(&doc.text, &rules.boilerplate);
        doc.text = text;
        bytes_removed += removed;
    }

    let mut line_hits = Vec::new();
    let doc_level_matcher = match (&rules.sensitive, rules.sensitive_policy) {
        (Some(m), SensitivePolicy::DropLine) => {
            let before = doc.text.len();
            let (text, hits) = drop_matching_lines(&doc.text, m);
            doc.text = text;
            bytes_removed += before - doc.text.len();
            line_hits = hits;
            None
        }
        (m, _) => m.as_ref(),
    };

    let mut decision = apply_char_filters(&doc.text, &rules.chars, doc_level_matcher);
    if decision.matched_terms.is_empty() {
        decision.matched_terms = line_hits;
    }
    let record = decision.keep.then_some(doc);
    PreprocessOutcome { record, decision, bytes_removed }
}
