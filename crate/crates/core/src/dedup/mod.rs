//! Two-stage deduplication: document-level fuzzy dedup with MinHash + LSH,
//! then exact substring dedup with a suffix array.

mod exact;
mod lsh;
mod minhash;
mod suffix_array;

pub use exact::{exact_dedup, ExactDedupError, ExactDedupOutcome, ExactDedupParams, RemovedRange};
pub use lsh::{cluster_duplicates, collision_probability, lsh_candidates, CandidatePair, DuplicateCluster, LshError};
pub use minhash::{minhash_signature, shingle_hashes, MinHashParams, MinHasher, ParamsError, Signature};
pub use suffix_array::{build_suffix_array, build_suffix_array_with_budget, SuffixArrayError, MAX_SUFFIX_ARRAY_BYTES};

use std::collections::HashSet;

use rayon::prelude::*;

use crate::io::{fingerprint_records, format_fingerprint};
use crate::record::DocumentRecord;
use crate::report::StageReport;

#[derive(Debug, Clone)]
pub struct FuzzyDedupOutcome {
    pub docs: Vec<DocumentRecord>,
    pub clusters: Vec<DuplicateCluster>,
    pub report: StageReport,
}

/// Drops every non-representative member of each near-duplicate cluster,
/// preserving the input order of survivors.
pub fn fuzzy_dedup(docs: Vec<DocumentRecord>, params: &MinHashParams) -> Result<FuzzyDedupOutcome, LshError> {
    let hasher = MinHasher::new(*params);
    let signatures: Vec<Signature> = docs.par_iter().map(|d| hasher.signature(&d.id, &d.text)).collect();
    let pairs = lsh_candidates(&signatures, params)?;
    let clusters = cluster_duplicates(&pairs, &signatures, params);
    drop(signatures);

    let drop_set: HashSet<String> = clusters.iter().flat_map(|c| c.dropped.iter().cloned()).collect();
    let docs_in = docs.len() as u64;
    let mut bytes_removed = 0u64;
    let mut dropped_count = 0u64;
    let mut kept = Vec::with_capacity(docs.len());
    for doc in docs {
        if drop_set.contains(&doc.id) {
            bytes_removed += doc.text.len() as u64;
            dropped_count += 1;
        } else {
            kept.push(doc);
        }
    }

    let mut report = StageReport::new("dedup_fuzzy")
        .param("shingle_width", params.shingle_width)
        .param("num_perms", params.num_perms)
        .param("bands", params.bands)
        .param("rows", params.rows)
        .param("jaccard_threshold", params.jaccard_threshold)
        .param("seed", params.seed)
        .param("count.clusters", clusters.len());
    report.docs_in = docs_in;
    report.docs_out = kept.len() as u64;
    report.docs_dropped = dropped_count;
    report.bytes_removed = bytes_removed;
    report.fingerprint = format_fingerprint(fingerprint_records(&kept));
    Ok(FuzzyDedupOutcome { docs: kept, clusters, report })
}
