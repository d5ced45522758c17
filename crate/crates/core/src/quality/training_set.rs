use std::collections::{BTreeSet, HashSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::train::LabeledExample;
use crate::record::DocumentRecord;
use crate::text::token_spans;

/// Share of each decile's positives that length balancing must retain.
const MIN_DECILE_RETENTION: f64 = 0.9;

#[derive(Debug, Clone)]
pub struct TrainingSetSpec {
    pub positive: Vec<DocumentRecord>,
    pub negative: Vec<DocumentRecord>,
    /// `(train, test)` parts; 10:1 by default.
    pub ratio: (usize, usize),
    pub length_balance: bool,
    /// Tokens removed from positive texts before training.
    pub stopword_injection: BTreeSet<String>,
}

impl TrainingSetSpec {
    pub fn new(positive: Vec<DocumentRecord>, negative: Vec<DocumentRecord>) -> Self {
        TrainingSetSpec { positive, negative, ratio: (10, 1), length_balance: false, stopword_injection: BTreeSet::new() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TrainingSetError {
    #[error("{0} pool is empty")]
    EmptyPool(&'static str),
    #[error("doc id {0:?} appears in both pools")]
    Overlap(String),
    #[error("split ratio parts must be positive")]
    Ratio,
    #[error("length decile {decile} keeps {kept} of {wanted} positives; negatives cannot match the length histogram")]
    Unbalanceable { decile: usize, kept: usize, wanted: usize },
    #[error("pools too small: {0} examples per class")]
    TooSmall(usize),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrainingSplit {
    pub train: Vec<LabeledExample>,
    pub test: Vec<LabeledExample>,
}

pub fn build_training_set(spec: &TrainingSetSpec, seed: u64) -> Result<TrainingSplit, TrainingSetError> {
    if spec.positive.is_empty() {
        return Err(TrainingSetError::EmptyPool("positive"));
    }
    if spec.negative.is_empty() {
        return Err(TrainingSetError::EmptyPool("negative"));
    }
    let (train_parts, test_parts) = spec.ratio;
    if train_parts == 0 || test_parts == 0 {
        return Err(TrainingSetError::Ratio);
    }
    let pos_ids: HashSet<&str> = spec.positive.iter().map(|d| d.id.as_str()).collect();
    if let Some(d) = spec.negative.iter().find(|d| pos_ids.contains(d.id.as_str())) {
        return Err(TrainingSetError::Overlap(d.id.clone()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pos: Vec<&DocumentRecord> = spec.positive.iter().collect();
    let mut neg: Vec<&DocumentRecord> = spec.negative.iter().collect();
    pos.sort_by(|a, b| a.id.cmp(&b.id));
    neg.sort_by(|a, b| a.id.cmp(&b.id));
    pos.shuffle(&mut rng);
    neg.shuffle(&mut rng);

    if spec.length_balance {
        (pos, neg) = balance_lengths(pos, neg)?;
    }
    let n = pos.len().min(neg.len());
    pos.truncate(n);
    neg.truncate(n);

    let parts = train_parts + test_parts;
    let n_test = ((n * test_parts) as f64 / parts as f64).round() as usize;
    if n_test == 0 || n_test == n {
        return Err(TrainingSetError::TooSmall(n));
    }

    let pos_examples: Vec<LabeledExample> = pos
        .iter()
        .map(|d| LabeledExample::new(strip_stopwords(&d.text, &spec.stopword_injection), true))
        .collect();
    let neg_examples: Vec<LabeledExample> = neg.iter().map(|d| LabeledExample::new(d.text.clone(), false)).collect();

    let mut test: Vec<LabeledExample> = pos_examples[..n_test].to_vec();
    test.extend_from_slice(&neg_examples[..n_test]);
    let mut train: Vec<LabeledExample> = pos_examples[n_test..].to_vec();
    train.extend_from_slice(&neg_examples[n_test..]);
    train.shuffle(&mut rng);
    test.shuffle(&mut rng);
    Ok(TrainingSplit { train, test })
}

fn char_len(d: &DocumentRecord) -> usize {
    d.text.chars().count()
}

/// Cuts both classes, decile by decile of the positive length distribution,
/// to the smaller count so the two histograms match.
fn balance_lengths<'a>(
    pos: Vec<&'a DocumentRecord>,
    neg: Vec<&'a DocumentRecord>,
) -> Result<(Vec<&'a DocumentRecord>, Vec<&'a DocumentRecord>), TrainingSetError> {
    let mut sorted: Vec<usize> = pos.iter().map(|d| char_len(d)).collect();
    sorted.sort_unstable();
    let (lo, hi) = (sorted[0], sorted[sorted.len() - 1]);
    let edges: Vec<usize> = (1..10).map(|k| sorted[k * sorted.len() / 10]).collect();
    let bin_of = |len: usize| edges.partition_point(|&e| e <= len);

    let mut pos_bins: Vec<Vec<&DocumentRecord>> = vec![Vec::new(); 10];
    let mut neg_bins: Vec<Vec<&DocumentRecord>> = vec![Vec::new(); 10];
    for d in pos {
        pos_bins[bin_of(char_len(d))].push(d);
    }
    for d in neg {
        let len = char_len(d);
        if (lo..=hi).contains(&len) {
            neg_bins[bin_of(len)].push(d);
        }
    }
    let mut kept_pos = Vec::new();
    let mut kept_neg = Vec::new();
    for (decile, (p, n)) in pos_bins.into_iter().zip(neg_bins).enumerate() {
        let take = p.len().min(n.len());
        if (take as f64) < MIN_DECILE_RETENTION * p.len() as f64 {
            return Err(TrainingSetError::Unbalanceable { decile, kept: take, wanted: p.len() });
        }
        kept_pos.extend_from_slice(&p[..take]);
        kept_neg.extend_from_slice(&n[..take]);
    }
    Ok((kept_pos, kept_neg))
}

fn strip_stopwords(text: &str, stopwords: &BTreeSet<String>) -> String {
    if stopwords.is_empty() {
        return text.to_string();
    }
    let mut out = String::with_capacity(text.len());
    let mut last = 0;
    for span in token_spans(text) {
        let (start, end) = (span.start, span.end);
        if stopwords.contains(&text[start..end].to_lowercase()) {
            out.push_str(&text[last..start]);
            last = end;
        }
    }
    out.push_str(&text[last..]);
    out
}
