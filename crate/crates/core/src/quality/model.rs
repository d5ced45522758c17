//! Hashed bag-of-n-grams logistic model and its binary file format.
//!
//! File layout (little-endian):
//!
//! ```text
//! magic      4 bytes  "CFQM"
//! version    u32      1
//! hash_dim   u32      power of two
//! n_orders   u32
//! orders     n_orders x u32
//! bias       f32
//! weights    hash_dim x f32
//! ```

use std::io::{self, Read, Write};

use xxhash_rust::xxh3::xxh3_64_with_seed;

use crate::text::tokens;

pub const MODEL_MAGIC: [u8; 4] = *b"CFQM";
pub const MODEL_VERSION: u32 = 1;
pub const DEFAULT_HASH_DIM: usize = 1 << 21;

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("not a model file (bad magic)")]
    BadMagic,
    #[error("unsupported model version {0}")]
    UnsupportedVersion(u32),
    #[error("hash_dim {0} is not a power of two")]
    HashDim(usize),
    #[error("n-gram orders must be non-empty and positive")]
    Orders,
    #[error("model contains non-finite weights")]
    NonFinite,
}

/// Sparse feature vector: sorted unique bucket indices with values.
pub type Features = Vec<(u32, f32)>;

#[derive(Debug, Clone, PartialEq)]
pub struct LinearNgramModel {
    pub hash_dim: usize,
    pub ngram_orders: Vec<usize>,
    pub weights: Vec<f32>,
    pub bias: f32,
}

impl LinearNgramModel {
    pub fn zeros(hash_dim: usize, ngram_orders: Vec<usize>) -> Result<Self, ModelError> {
        if !hash_dim.is_power_of_two() || hash_dim > u32::MAX as usize {
            return Err(ModelError::HashDim(hash_dim));
        }
        if ngram_orders.is_empty() || ngram_orders.contains(&0) {
            return Err(ModelError::Orders);
        }
        Ok(LinearNgramModel { hash_dim, ngram_orders, weights: vec![0.0; hash_dim], bias: 0.0 })
    }

    /// Hashed n-gram counts over lower-cased tokens, divided by the token
    /// count.
    pub fn features(&self, text: &str) -> Features {
        extract_features(text, self.hash_dim, &self.ngram_orders)
    }

    pub fn logit(&self, features: &Features) -> f64 {
        let dot: f64 = features
            .iter()
            .map(|&(i, v)| self.weights[i as usize] as f64 * v as f64)
            .sum();
        dot + self.bias as f64
    }

    /// Probability that `text` is high quality.
    pub fn score_text(&self, text: &str) -> f64 {
        sigmoid(self.logit(&self.features(text)))
    }

    pub fn write_to<W: Write>(&self, mut out: W) -> Result<(), ModelError> {
        out.write_all(&MODEL_MAGIC)?;
        out.write_all(&MODEL_VERSION.to_le_bytes())?;
        out.write_all(&(self.hash_dim as u32).to_le_bytes())?;
        out.write_all(&(self.ngram_orders.len() as u32).to_le_bytes())?;
        for &o in &self.ngram_orders {
            out.write_all(&(o as u32).to_le_bytes())?;
        }
        out.write_all(&self.bias.to_le_bytes())?;
        let mut buf = Vec::with_capacity(self.weights.len() * 4);
        for w in &self.weights {
            buf.extend_from_slice(&w.to_le_bytes());
        }
        out.write_all(&buf)?;
        out.flush()?;
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("writing to a Vec cannot fail");
        buf
    }

    pub fn read_from<R: Read>(mut input: R) -> Result<Self, ModelError> {
        let mut word = [0u8; 4];
        input.read_exact(&mut word)?;
        if word != MODEL_MAGIC {
            return Err(ModelError::BadMagic);
        }
        let read_u32 = |input: &mut R| -> io::Result<u32> {
            let mut b = [0u8; 4];
            input.read_exact(&mut b)?;
            Ok(u32::from_le_bytes(b))
        };
        let version = read_u32(&mut input)?;
        if version != MODEL_VERSION {
            return Err(ModelError::UnsupportedVersion(version));
        }
        let hash_dim = read_u32(&mut input)? as usize;
        let n_orders = read_u32(&mut input)? as usize;
        if n_orders > 16 {
            return Err(ModelError::Orders);
        }
        let mut orders = Vec::with_capacity(n_orders);
        for _ in 0..n_orders {
            orders.push(read_u32(&mut input)? as usize);
        }
        let mut model = LinearNgramModel::zeros(hash_dim, orders)?;
        input.read_exact(&mut word)?;
        model.bias = f32::from_le_bytes(word);
        let mut raw = vec![0u8; hash_dim * 4];
        input.read_exact(&mut raw)?;
        for (w, chunk) in model.weights.iter_mut().zip(raw.chunks_exact(4)) {
            *w = f32::from_le_bytes(chunk.try_into().unwrap());
        }
        if !model.bias.is_finite() || model.weights.iter().any(|w| !w.is_finite()) {
            return Err(ModelError::NonFinite);
        }
        Ok(model)
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn extract_features(text: &str, hash_dim: usize, orders: &[usize]) -> Features {
    let toks: Vec<String> = tokens(text).map(str::to_lowercase).collect();
    if toks.is_empty() {
        return Vec::new();
    }
    let mask = (hash_dim - 1) as u64;
    let mut idx: Vec<u32> = Vec::new();
    let mut buf = Vec::new();
    for &order in orders {
        if toks.len() < order {
            continue;
        }
        for window in toks.windows(order) {
            buf.clear();
            for (k, t) in window.iter().enumerate() {
                if k > 0 {
                    buf.push(b' ');
                }
                buf.extend_from_slice(t.as_bytes());
            }
            idx.push((xxh3_64_with_seed(&buf, order as u64) & mask) as u32);
        }
    }
    idx.sort_unstable();
    let norm = 1.0 / toks.len() as f32;
    let mut out: Features = Vec::new();
    for i in idx {
        match out.last_mut() {
            Some((last, v)) if *last == i => *v += norm,
            _ => out.push((i, norm)),
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_text_scores_sigmoid_bias() {
        let mut m = LinearNgramModel::zeros(1 << 10, vec![1, 2]).unwrap();
        m.bias = 0.7;
        assert_eq!(m.score_text(""), sigmoid(m.bias as f64));
    }

    #[test]
    fn features_normalized_by_token_count() {
        let f = extract_features("a a b", 1 << 16, &[1]);
        let total: f32 = f.iter().map(|&(_, v)| v).sum();
        assert!((total - 1.0).abs() < 1e-6);
        assert_eq!(f.len(), 2);
        let f = extract_features("a b c", 1 << 16, &[1, 2]);
        assert_eq!(f.len(), 5);
    }

    #[test]
    fn case_insensitive() {
        assert_eq!(extract_features("Hello World", 1 << 12, &[1, 2]), extract_features("hello world", 1 << 12, &[1, 2]));
    }

    #[test]
    fn file_round_trip_is_bit_exact() {
        let mut m = LinearNgramModel::zeros(1 << 8, vec![1, 3]).unwrap();
        for (i, w) in m.weights.iter_mut().enumerate() {
            *w = (i as f32 * 0.37).sin();
        }
        m.bias = -0.25;
        let bytes = m.to_bytes();
        assert_eq!(bytes.len(), 4 + 4 + 4 + 4 + 8 + 4 + 256 * 4);
        let back = LinearNgramModel::read_from(bytes.as_slice()).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn rejects_bad_header() {
        assert!(matches!(LinearNgramModel::read_from(&b"XXXX"[..]), Err(ModelError::BadMagic)));
        let mut bytes = LinearNgramModel::zeros(4, vec![1]).unwrap().to_bytes();
        bytes[4] = 9;
        assert!(matches!(LinearNgramModel::read_from(bytes.as_slice()), Err(ModelError::UnsupportedVersion(9))));
        assert!(matches!(LinearNgramModel::zeros(1000, vec![1]), Err(ModelError::HashDim(1000))));
    }

    #[test]
    fn sigmoid_is_stable() {
        assert_eq!(sigmoid(-1000.0), 0.0);
        assert_eq!(sigmoid(1000.0), 1.0);
        assert_eq!(sigmoid(0.0), 0.5);
    }
}
