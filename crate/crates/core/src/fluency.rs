//! Domain-aware loss filtering: per-domain nearest-rank loss percentiles
//! and removal of docs whose loss strictly exceeds their domain threshold.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::io::{fingerprint_records, format_fingerprint};
use crate::record::DocumentRecord;
use crate::report::StageReport;

pub const DEFAULT_PERCENTILE: f64 = 0.995;
pub const DEFAULT_MIN_DOMAIN_SIZE: usize = 200;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainLossProfile {
    pub domain: String,
    pub n: usize,
    pub percentile: f64,
    pub removed: usize,
    /// `None` means the domain is too small to filter (an infinite
    /// threshold).
    pub threshold: Option<f64>,
}

impl DomainLossProfile {
    pub fn drops(&self, loss: f64) -> bool {
        self.threshold.is_some_and(|t| loss > t)
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FluencyError {
    #[error("percentile {0} must lie strictly between 0 and 1")]
    Percentile(f64),
    #[error("doc {doc_id:?} has domain {domain:?}, which has no loss profile")]
    UnknownDomain { doc_id: String, domain: String },
}

fn scored(doc: &DocumentRecord) -> Option<(&str, f64)> {
    match (&doc.domain, doc.loss) {
        (Some(d), Some(l)) if l.is_finite() => Some((d.as_str(), l)),
        _ => None,
    }
}

/// 1-based nearest rank `ceil(p * n)`. A product that is an integer up to
/// rounding error (0.995 * 10_000) is not bumped to the next rank.
pub fn nearest_rank(p: f64, n: usize) -> usize {
    let x = p * n as f64;
    let r = x.round();
    let rank = if (x - r).abs() <= 1e-9 * (n as f64).max(1.0) { r } else { x.ceil() };
    (rank as usize).clamp(1, n.max(1))
}

pub fn compute_domain_thresholds(
    docs: &[DocumentRecord],
    p: f64,
    min_domain_size: usize,
) -> Result<BTreeMap<String, DomainLossProfile>, FluencyError> {
    if !(p > 0.0 && p < 1.0) {
        return Err(FluencyError::Percentile(p));
    }
    let mut by_domain: HashMap<&str, Vec<f64>> = HashMap::new();
    for (domain, loss) in docs.iter().filter_map(scored) {
        by_domain.entry(domain).or_default().push(loss);
    }
    let mut profiles = BTreeMap::new();
    for (domain, mut losses) in by_domain {
        losses.sort_by(f64::total_cmp);
        let n = losses.len();
        let threshold = (n >= min_domain_size).then(|| losses[nearest_rank(p, n) - 1]);
        let removed = threshold.map_or(0, |t| losses.iter().filter(|&&l| l > t).count());
        profiles.insert(
            domain.to_string(),
            DomainLossProfile { domain: domain.to_string(), n, percentile: p, removed, threshold },
        );
    }
    Ok(profiles)
}

#[derive(Debug, Clone)]
pub struct FluencyOutcome {
    pub kept: Vec<DocumentRecord>,
    pub dropped: Vec<DocumentRecord>,
    /// Docs without a domain or finite loss, passed through unfiltered.
    pub unscored: u64,
    pub report: StageReport,
}

pub fn filter_by_loss(
    docs: Vec<DocumentRecord>,
    profiles: &BTreeMap<String, DomainLossProfile>,
) -> Result<FluencyOutcome, FluencyError> {
    for doc in &docs {
        if let Some((domain, _)) = scored(doc) {
            if !profiles.contains_key(domain) {
                return Err(FluencyError::UnknownDomain { doc_id: doc.id.clone(), domain: domain.to_string() });
            }
        }
    }
    let docs_in = docs.len() as u64;
    let mut kept = Vec::with_capacity(docs.len());
    let mut dropped = Vec::new();
    let mut unscored = 0u64;
    let mut removed: BTreeMap<&str, usize> = BTreeMap::new();
    for doc in docs {
        match scored(&doc) {
            Some((domain, loss)) if profiles[domain].drops(loss) => {
                *removed.entry(profiles[domain].domain.as_str()).or_default() += 1;
                dropped.push(doc);
            }
            Some(_) => kept.push(doc),
            None => {
                unscored += 1;
                kept.push(doc);
            }
        }
    }
    let mut report = StageReport::new("fluency").param("count.unscored", unscored);
    for (domain, count) in &removed {
        report = report.param(format!("count.removed.{domain}"), count);
    }
    report.docs_in = docs_in;
    report.docs_out = kept.len() as u64;
    report.docs_dropped = dropped.len() as u64;
    report.bytes_removed = dropped.iter().map(|d| d.text.len() as u64).sum();
    report.fingerprint = format_fingerprint(fingerprint_records(&kept));
    Ok(FluencyOutcome { kept, dropped, unscored, report })
}
