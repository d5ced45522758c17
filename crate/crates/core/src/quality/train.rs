use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::{extract_features, sigmoid, Features, LinearNgramModel, ModelError, DEFAULT_HASH_DIM};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledExample {
    pub text: String,
    /// `true` for the high-quality class.
    pub label: bool,
}

impl LabeledExample {
    pub fn new(text: impl Into<String>, label: bool) -> Self {
        LabeledExample { text: text.into(), label }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainHyper {
    pub epochs: usize,
    pub hash_dim: usize,
    /// Initial learning rate, decayed linearly to zero over all updates.
    pub lr: f64,
    pub ngram_orders: Vec<usize>,
}

impl Default for TrainHyper {
    fn default() -> Self {
        TrainHyper { epochs: 5, hash_dim: DEFAULT_HASH_DIM, lr: 0.1, ngram_orders: vec![1, 2] }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("training set is empty")]
    Empty,
    #[error("training set contains only {} examples", if *.0 { "positive" } else { "negative" })]
    SingleLabel(bool),
    #[error("epochs and learning rate must be positive")]
    Hyper,
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Plain SGD on logistic loss over hashed n-gram features. Single-threaded,
/// so a fixed seed yields a bit-identical model.
pub fn train_linear_classifier(
    train: &[LabeledExample],
    hyper: &TrainHyper,
    seed: u64,
) -> Result<LinearNgramModel, TrainError> {
    if train.is_empty() {
        return Err(TrainError::Empty);
    }
    let first = train[0].label;
    if train.iter().all(|e| e.label == first) {
        return Err(TrainError::SingleLabel(first));
    }
    if hyper.epochs == 0 || !(hyper.lr > 0.0 && hyper.lr.is_finite()) {
        return Err(TrainError::Hyper);
    }
    let mut model = LinearNgramModel::zeros(hyper.hash_dim, hyper.ngram_orders.clone())?;
    let features: Vec<Features> = train
        .iter()
        .map(|e| extract_features(&e.text, model.hash_dim, &model.ngram_orders))
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let total_steps = (hyper.epochs * train.len()) as f64;
    let mut step = 0usize;
    for _ in 0..hyper.epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            let lr = hyper.lr * (1.0 - step as f64 / total_steps);
            step += 1;
            let x = &features[i];
            let y = if train[i].label { 1.0 } else { 0.0 };
            let grad = sigmoid(model.logit(x)) - y;
            let scale = lr * grad;
            for &(j, v) in x {
                model.weights[j as usize] -= (scale * v as f64) as f32;
            }
            model.bias -= scale as f32;
        }
    }
    Ok(model)
}

/// Fraction of examples whose thresholded score (0.5) matches the label.
pub fn accuracy(model: &LinearNgramModel, examples: &[LabeledExample]) -> f64 {
    if examples.is_empty() {
        return 0.0;
    }
    let hits = examples.iter().filter(|e| (model.score_text(&e.text) > 0.5) == e.label).count();
    hits as f64 / examples.len() as f64
}
