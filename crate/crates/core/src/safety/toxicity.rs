use std::collections::{BTreeSet, HashSet};
use std::io::{self, BufRead};

use serde::{Deserialize, Serialize};

use crate::record::DocumentRecord;
use crate::scorer::{Scorer, ScorerError};
use crate::text::tokens;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToxicityAnnotation {
    pub flagged: bool,
    pub score: f64,
    pub scorer: String,
}

/// Lexicon hits per 1,000 tokens at which the fallback score reaches 1.0.
pub const DEFAULT_SATURATION_PER_1000: f64 = 100.0;

/// Fallback scorer: matched lexicon terms per 1,000 tokens, scaled linearly
/// and clamped to [0, 1]. Terms may span several tokens and match
/// case-insensitively on token boundaries.
#[derive(Debug, Clone)]
pub struct LexiconScorer {
    terms: HashSet<Vec<String>>,
    max_term_tokens: usize,
    saturation_per_1000: f64,
}

impl LexiconScorer {
    pub fn new<I, S>(terms: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let terms: HashSet<Vec<String>> = terms
            .into_iter()
            .map(|t| tokens(t.as_ref()).map(str::to_lowercase).collect::<Vec<_>>())
            .filter(|t| !t.is_empty())
            .collect();
        let max_term_tokens = terms.iter().map(Vec::len).max().unwrap_or(0);
        LexiconScorer { terms, max_term_tokens, saturation_per_1000: DEFAULT_SATURATION_PER_1000 }
    }

    /// One term per line; blank lines ignored.
    pub fn from_reader<R: BufRead>(reader: R) -> io::Result<Self> {
        let mut terms = BTreeSet::new();
        for line in reader.lines() {
            let line = line?;
            let t = line.trim();
            if !t.is_empty() {
                terms.insert(t.to_string());
            }
        }
        Ok(Self::new(terms))
    }

    pub fn with_saturation(mut self, hits_per_1000: f64) -> Self {
        self.saturation_per_1000 = hits_per_1000;
        self
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// `(hits, tokens)`; matching is leftmost-longest, non-overlapping.
    pub fn hits(&self, text: &str) -> (usize, usize) {
        let toks: Vec<String> = tokens(text).map(str::to_lowercase).collect();
        let mut hits = 0;
        let mut i = 0;
        while i < toks.len() {
            let longest = (1..=self.max_term_tokens.min(toks.len() - i))
                .rev()
                .find(|&n| self.terms.contains(&toks[i..i + n]));
            match longest {
                Some(n) => {
                    hits += 1;
                    i += n;
                }
                None => i += 1,
            }
        }
        (hits, toks.len())
    }

    pub fn score(&self, text: &str) -> f64 {
        let (hits, n) = self.hits(text);
        if n == 0 || hits == 0 {
            return 0.0;
        }
        let rate = hits as f64 * 1000.0 / n as f64;
        (rate / self.saturation_per_1000).min(1.0)
    }
}

impl Scorer for LexiconScorer {
    fn name(&self) -> &str {
        "lexicon"
    }

    fn score_text(&self, text: &str) -> Result<f64, ScorerError> {
        Ok(self.score(text))
    }
}

#[derive(Debug, thiserror::Error)]
#[error("toxicity scoring failed for doc {doc_id:?}: {source}")]
pub struct ToxicityError {
    pub doc_id: String,
    #[source]
    pub source: ScorerError,
}

pub fn score_toxicity(doc: &DocumentRecord, scorer: &dyn Scorer, threshold: f64) -> Result<ToxicityAnnotation, ToxicityError> {
    let score = scorer
        .score_doc(doc)
        .map_err(|source| ToxicityError { doc_id: doc.id.clone(), source })?;
    Ok(ToxicityAnnotation { flagged: score >= threshold, score, scorer: scorer.name().to_string() })
}
