//! MinHash signatures over word shingles.

use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use xxhash_rust::xxh3::{xxh3_64, Xxh3};

use crate::text::tokens;

const MERSENNE_61: u64 = (1 << 61) - 1;
const SHINGLE_SEP: u8 = 0x1f;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MinHashParams {
    pub shingle_width: usize,
    pub num_perms: usize,
    pub bands: usize,
    pub rows: usize,
    pub jaccard_threshold: f64,
    pub seed: u64,
}

impl Default for MinHashParams {
    fn default() -> Self {
        MinHashParams {
            shingle_width: 5,
            num_perms: 128,
            bands: 16,
            rows: 8,
            jaccard_threshold: 0.7,
            seed: 0x5eed_1234,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ParamsError {
    #[error("bands x rows ({bands} x {rows} = {}) must equal num_perms ({num_perms})", bands * rows)]
    BandingMismatch { bands: usize, rows: usize, num_perms: usize },
    #[error("jaccard_threshold must be in (0, 1], got {0}")]
    Threshold(f64),
    #[error("{0} must be positive")]
    Zero(&'static str),
}

impl MinHashParams {
    pub fn validate(&self) -> Result<(), ParamsError> {
        for (name, v) in [
            ("shingle_width", self.shingle_width),
            ("num_perms", self.num_perms),
            ("bands", self.bands),
            ("rows", self.rows),
        ] {
            if v == 0 {
                return Err(ParamsError::Zero(name));
            }
        }
        if self.bands * self.rows != self.num_perms {
            return Err(ParamsError::BandingMismatch {
                bands: self.bands,
                rows: self.rows,
                num_perms: self.num_perms,
            });
        }
        if !(self.jaccard_threshold > 0.0 && self.jaccard_threshold <= 1.0) {
            return Err(ParamsError::Threshold(self.jaccard_threshold));
        }
        Ok(())
    }

    /// Identifies the hash family; signatures are only comparable when
    /// this matches.
    pub fn family_id(&self) -> u64 {
        let mut h = Xxh3::new();
        for v in [self.shingle_width as u64, self.num_perms as u64, self.seed] {
            h.update(&v.to_le_bytes());
        }
        h.digest()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Signature {
    pub doc_id: String,
    pub family: u64,
    pub values: Vec<u64>,
}

impl Signature {
    /// Sentinel for documents without a single full shingle.
    pub fn is_empty(&self) -> bool {
        self.values.iter().all(|&v| v == u64::MAX)
    }

    pub fn estimate_jaccard(&self, other: &Signature) -> f64 {
        debug_assert_eq!(self.values.len(), other.values.len());
        if self.values.is_empty() || self.is_empty() || other.is_empty() {
            return 0.0;
        }
        let equal = self.values.iter().zip(&other.values).filter(|(a, b)| a == b).count();
        equal as f64 / self.values.len() as f64
    }
}

/// Hashes of the distinct word shingles of `text`.
pub fn shingle_hashes(text: &str, width: usize) -> HashSet<u64> {
    let toks: Vec<&str> = tokens(text).collect();
    let mut out = HashSet::new();
    if width == 0 || toks.len() < width {
        return out;
    }
    let mut buf = Vec::new();
    for window in toks.windows(width) {
        buf.clear();
        for (i, t) in window.iter().enumerate() {
            if i > 0 {
                buf.push(SHINGLE_SEP);
            }
            buf.extend_from_slice(t.as_bytes());
        }
        out.insert(xxh3_64(&buf));
    }
    out
}

/// The permutation family: `h_i(x) = (a_i * x + b_i) mod (2^61 - 1)`.
#[derive(Debug, Clone)]
pub struct MinHasher {
    params: MinHashParams,
    family: u64,
    coeffs: Vec<(u64, u64)>,
}

fn mul_add_mod61(a: u64, x: u64, b: u64) -> u64 {
    let prod = a as u128 * x as u128 + b as u128;
    let folded = (prod & MERSENNE_61 as u128) + (prod >> 61);
    let mut r = folded as u64;
    while r >= MERSENNE_61 {
        r -= MERSENNE_61;
    }
    r
}

impl MinHasher {
    pub fn new(params: MinHashParams) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        let coeffs = (0..params.num_perms)
            .map(|_| (rng.gen_range(1..MERSENNE_61), rng.gen_range(0..MERSENNE_61)))
            .collect();
        MinHasher { family: params.family_id(), params, coeffs }
    }

    pub fn params(&self) -> &MinHashParams {
        &self.params
    }

    pub fn signature(&self, doc_id: &str, text: &str) -> Signature {
        let shingles = shingle_hashes(text, self.params.shingle_width);
        self.signature_of_shingles(doc_id, &shingles)
    }

    pub fn signature_of_shingles(&self, doc_id: &str, shingles: &HashSet<u64>) -> Signature {
        let mut values = vec![u64::MAX; self.params.num_perms];
        for &s in shingles {
            let x = s % MERSENNE_61;
            for (v, &(a, b)) in values.iter_mut().zip(&self.coeffs) {
                let h = mul_add_mod61(a, x, b);
                if h < *v {
                    *v = h;
                }
            }
        }
        Signature { doc_id: doc_id.to_string(), family: self.family, values }
    }
}

/// Convenience wrapper building a fresh [`MinHasher`].
pub fn minhash_signature(doc_id: &str, text: &str, params: &MinHashParams) -> Signature {
    MinHasher::new(*params).signature(doc_id, text)
}
