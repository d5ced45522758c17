//! LSH banding and union-find clustering of near-duplicates.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use super::minhash::{MinHashParams, Signature};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LshError {
    #[error("signature {doc_id:?} comes from a different hash family or length")]
    MixedParameters { doc_id: String },
}

/// Unordered pair of indices into the signature slice, stored `(low, high)`.
pub type CandidatePair = (usize, usize);

/// Emits every pair of documents that agree on all rows of at least one
/// band. Sentinel (empty) signatures never become candidates.
pub fn lsh_candidates(signatures: &[Signature], params: &MinHashParams) -> Result<BTreeSet<CandidatePair>, LshError> {
    let family = params.family_id();
    for sig in signatures {
        if sig.family != family || sig.values.len() != params.num_perms {
            return Err(LshError::MixedParameters { doc_id: sig.doc_id.clone() });
        }
    }
    let live: Vec<usize> = (0..signatures.len()).filter(|&i| !signatures[i].is_empty()).collect();
    let mut pairs = BTreeSet::new();
    for band in 0..params.bands {
        let rows = band * params.rows..(band + 1) * params.rows;
        let mut buckets: HashMap<&[u64], Vec<usize>> = HashMap::new();
        for &i in &live {
            buckets.entry(&signatures[i].values[rows.clone()]).or_default().push(i);
        }
        for members in buckets.values().filter(|m| m.len() > 1) {
            for (k, &a) in members.iter().enumerate() {
                for &b in &members[k + 1..] {
                    pairs.insert((a.min(b), a.max(b)));
                }
            }
        }
    }
    Ok(pairs)
}

/// Probability that a pair with Jaccard `j` shares at least one band.
pub fn collision_probability(j: f64, bands: usize, rows: usize) -> f64 {
    1.0 - (1.0 - j.powi(rows as i32)).powi(bands as i32)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DuplicateCluster {
    pub dropped: Vec<String>,
    pub kept: String,
    pub members: Vec<String>,
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind { parent: (0..n).collect() }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.parent[ra.max(rb)] = ra.min(rb);
        }
    }
}

/// Unions candidate pairs whose estimated Jaccard reaches the threshold and
/// returns every component of two or more documents. The lexicographically
/// smallest id in a cluster is kept. Clusters are ordered by kept id.
pub fn cluster_duplicates(
    pairs: &BTreeSet<CandidatePair>,
    signatures: &[Signature],
    params: &MinHashParams,
) -> Vec<DuplicateCluster> {
    let mut uf = UnionFind::new(signatures.len());
    for &(a, b) in pairs {
        if signatures[a].estimate_jaccard(&signatures[b]) >= params.jaccard_threshold {
            uf.union(a, b);
        }
    }
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in 0..signatures.len() {
        let root = uf.find(i);
        groups.entry(root).or_default().push(i);
    }
    let mut clusters: Vec<DuplicateCluster> = groups
        .into_values()
        .filter(|m| m.len() >= 2)
        .map(|m| {
            let mut members: Vec<String> = m.iter().map(|&i| signatures[i].doc_id.clone()).collect();
            members.sort();
            let kept = members[0].clone();
            let dropped = members[1..].to_vec();
            DuplicateCluster { dropped, kept, members }
        })
        .collect();
    clusters.sort_by(|a, b| a.kept.cmp(&b.kept));
    clusters
}
