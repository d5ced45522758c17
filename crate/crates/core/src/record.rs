//! The document record that flows through every stage.
//!
//! Field declaration order is alphabetical and all maps are `BTreeMap`, so
//! plain serde serialization already yields sorted keys. Empty optional
//! fields are skipped, which keeps the JSON-Lines output canonical.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::quality::QualityAnnotation;
use crate::safety::ToxicityAnnotation;

/// Strict-mode ceiling on `text` size.
pub const MAX_TEXT_BYTES: usize = 4 * 1024 * 1024;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DocumentRecord {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain: Option<String>,
    pub id: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub lang: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub loss: Option<f64>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub meta: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quality: Option<QualityAnnotation>,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub source: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub toxicity: Option<ToxicityAnnotation>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RecordError {
    #[error("record id is empty")]
    EmptyId,
    #[error("record {id}: loss must be finite and non-negative")]
    InvalidLoss { id: String },
    #[error("record {id}: text is {bytes} bytes, over the {MAX_TEXT_BYTES}-byte limit")]
    TextTooLarge { id: String, bytes: usize },
}

impl DocumentRecord {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        DocumentRecord {
            domain: None,
            id: id.into(),
            lang: String::new(),
            loss: None,
            meta: BTreeMap::new(),
            quality: None,
            source: String::new(),
            text: text.into(),
            toxicity: None,
        }
    }

    pub fn with_lang(mut self, lang: impl Into<String>) -> Self {
        self.lang = lang.into();
        self
    }

    pub fn with_source(mut self, source: impl Into<String>) -> Self {
        self.source = source.into();
        self
    }

    pub fn with_domain(mut self, domain: impl Into<String>) -> Self {
        self.domain = Some(domain.into());
        self
    }

    pub fn with_loss(mut self, loss: f64) -> Self {
        self.loss = Some(loss);
        self
    }

    pub fn with_meta(mut self, key: impl Into<String>, value: impl Into<String>) -> Self {
        self.meta.insert(key.into(), value.into());
        self
    }

    pub fn byte_len(&self) -> usize {
        self.text.len()
    }

    /// Per-record invariants. Uniqueness of ids is a corpus-level property
    /// checked by the reader.
    pub fn validate(&self, enforce_size_limit: bool) -> Result<(), RecordError> {
        if self.id.is_empty() {
            return Err(RecordError::EmptyId);
        }
        if let Some(loss) = self.loss {
            if !loss.is_finite() || loss < 0.0 {
                return Err(RecordError::InvalidLoss { id: self.id.clone() });
            }
        }
        if enforce_size_limit && self.text.len() > MAX_TEXT_BYTES {
            return Err(RecordError::TextTooLarge {
                id: self.id.clone(),
                bytes: self.text.len(),
            });
        }
        Ok(())
    }
}
