//! Quality scoring: a hashed n-gram logistic classifier, training-set
//! construction, per-classifier percentile normalization, max aggregation
//! and equal-frequency bucketing.

mod model;
mod rank;
mod train;
mod training_set;

pub use model::{
    extract_features, sigmoid, Features, LinearNgramModel, ModelError, DEFAULT_HASH_DIM, MODEL_MAGIC, MODEL_VERSION,
};
pub use rank::{aggregate_final_score, assign_buckets, normalize_to_percentiles, percentile_ranks};
pub use train::{accuracy, train_linear_classifier, LabeledExample, TrainError, TrainHyper};
pub use training_set::{build_training_set, TrainingSetError, TrainingSetSpec, TrainingSplit};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub const DEFAULT_BUCKETS: u32 = 20;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum QualityError {
    #[error("document {doc} has no score from classifier {classifier:?}")]
    MissingScore { doc: usize, classifier: String },
    #[error("document {doc} has a non-finite score from classifier {classifier:?}")]
    NonFiniteScore { doc: usize, classifier: String },
    #[error("no classifier percentiles to aggregate")]
    NoClassifiers,
    #[error("bucket count must be at least 1")]
    ZeroBins,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QualityAnnotation {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bucket: Option<u32>,
    pub final_score: f64,
    pub percentiles: BTreeMap<String, f64>,
    pub raw_scores: BTreeMap<String, f64>,
}

/// Normalizes, aggregates and (optionally) buckets a whole corpus at once.
/// `ids[d]` and `raw[d]` describe document `d`.
pub fn annotate_corpus(
    ids: &[&str],
    raw: Vec<BTreeMap<String, f64>>,
    classifiers: &[String],
    bins: Option<u32>,
) -> Result<Vec<QualityAnnotation>, QualityError> {
    if classifiers.is_empty() {
        return Err(QualityError::NoClassifiers);
    }
    let percentiles = normalize_to_percentiles(&raw, classifiers)?;
    let mut out = Vec::with_capacity(raw.len());
    for (raw_scores, percentiles) in raw.into_iter().zip(percentiles) {
        let final_score = aggregate_final_score(&percentiles)?;
        out.push(QualityAnnotation { bucket: None, final_score, percentiles, raw_scores });
    }
    if let Some(k) = bins {
        let keyed: Vec<(&str, f64)> = ids.iter().copied().zip(out.iter().map(|a| a.final_score)).collect();
        for (a, b) in out.iter_mut().zip(assign_buckets(&keyed, k)?) {
            a.bucket = Some(b);
        }
    }
    Ok(out)
}
