//! End-to-end pipeline execution: read, shard, run stages, write outputs and
//! the manifest.
//!
//! Records are held in memory, grouped into shards. Dedup stages run per
//! shard; scoring, bucketing and loss filtering need corpus-wide
//! statistics and see every shard at once.

mod config;

pub use config::{
    validate_config, ConfigErrors, CotStageParams, FluencyParams, PiiParams, PipelineConfig, PreprocessParams,
    QualityBucketParams, QualityScoreParams, ScorerSpec, StageSpec, ToxicityParams, DEFAULT_CONFIG,
    DEFAULT_SHARD_SIZE_BYTES, STAGE_NAMES,
};

use std::collections::{BTreeMap, HashSet};
use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::Serialize;

use crate::cot::{synthesize_batch, ChatModel, CotConfig, EndpointConfig, HttpChatClient};
use crate::dedup::{exact_dedup, fuzzy_dedup, ExactDedupParams, MinHashParams};
use crate::fluency::{compute_domain_thresholds, filter_by_loss};
use crate::io::{fingerprint_records, format_fingerprint, open_input, JsonlWriter, ReadStats, RecordReader};
use crate::preprocess::{preprocess_record, CharFilterRules, FilterRules, SensitiveMatcher, SimplifyMap};
use crate::quality::{annotate_corpus, assign_buckets, LinearNgramModel};
use crate::record::DocumentRecord;
use crate::report::{RunManifest, StageFailure, StageReport, MANIFEST_SCHEMA_VERSION, TOOLKIT_VERSION};
use crate::safety::{detect_pii, redact, score_toxicity, LexiconScorer, RedactPolicy};
use crate::scorer::{LinearScorer, MetaScorer, ProcessScorer, Scorer};

const DEFAULT_LEXICON: &str = include_str!("../../config/lexicon.txt");

pub const DATA_FILE: &str = "data.jsonl";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const TIMING_FILE: &str = "timing.json";
pub const DROPPED_FILE: &str = "dropped.jsonl";
pub const REMOVED_RANGES_FILE: &str = "removed_ranges.jsonl";
pub const CLUSTERS_FILE: &str = "duplicate_clusters.jsonl";
pub const FLUENCY_PROFILES_FILE: &str = "fluency_profiles.json";
pub const COT_RECORDS_FILE: &str = "cot_records.jsonl";
pub const COT_REJECTS_FILE: &str = "cot_rejects.jsonl";

/// Reads a config file, validates it and resolves relative paths in stage
/// params against the file's directory.
pub fn load_config(path: &Path) -> Result<PipelineConfig, ConfigErrors> {
    let raw = fs::read_to_string(path).map_err(|e| ConfigErrors(vec![format!("cannot read {}: {e}", path.display())]))?;
    let mut config = validate_config(&raw)?;
    if let Some(base) = path.parent() {
        resolve_paths(&mut config, base);
    }
    Ok(config)
}

fn resolve(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

fn resolve_scorer(base: &Path, spec: &mut ScorerSpec) {
    match spec {
        ScorerSpec::Linear { model, .. } => resolve(base, model),
        ScorerSpec::Lexicon { lexicon_file: Some(f), .. } => resolve(base, f),
        _ => {}
    }
}

pub fn resolve_paths(config: &mut PipelineConfig, base: &Path) {
    for stage in &mut config.stages {
        match stage {
            StageSpec::Preprocess(p) => {
                if let Some(f) = &mut p.sensitive_terms_file {
                    resolve(base, f);
                }
                if let Some(f) = &mut p.simplify_map_file {
                    resolve(base, f);
                }
            }
            StageSpec::QualityScore(p) => p.classifiers.iter_mut().for_each(|c| resolve_scorer(base, c)),
            StageSpec::Toxicity(p) => resolve_scorer(base, &mut p.scorer),
            _ => {}
        }
    }
}

#[derive(Default, Clone)]
pub struct RunOptions {
    /// Leave wall-clock times out of the manifest so reruns are
    /// byte-identical. Timings still go to `timing.json`.
    pub deterministic: bool,
    /// Replaces the HTTP client of a `cot` stage.
    pub chat_model: Option<Arc<dyn ChatModel>>,
}

#[derive(Debug)]
pub struct RunOutcome {
    pub manifest: RunManifest,
    pub read: ReadStats,
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("cannot write {path}: {source}")]
    Output { path: PathBuf, source: io::Error },
    #[error("cannot build worker pool: {0}")]
    Pool(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DroppedDoc {
    pub doc_id: String,
    pub reason: String,
    pub stage: String,
}

impl DroppedDoc {
    fn new(doc_id: impl Into<String>, reason: impl Into<String>, stage: &str) -> Self {
        DroppedDoc { doc_id: doc_id.into(), reason: reason.into(), stage: stage.to_string() }
    }
}

#[derive(Debug, Serialize)]
struct StageTiming {
    ms: u64,
    stage: String,
}

#[derive(Debug, Serialize)]
struct Timing {
    read_ms: u64,
    stages: Vec<StageTiming>,
    total_ms: u64,
    write_ms: u64,
}

enum Prepared {
    Preprocess(FilterRules),
    DedupFuzzy(MinHashParams),
    DedupExact(ExactDedupParams),
    QualityScore(Vec<Box<dyn Scorer>>),
    QualityBucket(u32),
    Fluency(FluencyParams),
    Pii(RedactPolicy),
    Toxicity { scorer: Box<dyn Scorer>, threshold: f64, drop_flagged: bool },
    Cot { model: Arc<dyn ChatModel>, config: CotConfig, max_inflight: usize },
}

fn open_file(path: &Path) -> Result<BufReader<File>, String> {
    File::open(path).map(BufReader::new).map_err(|e| format!("cannot open {}: {e}", path.display()))
}

fn build_scorer(spec: &ScorerSpec) -> Result<Box<dyn Scorer>, String> {
    Ok(match spec {
        ScorerSpec::Linear { name, model } => {
            let m = LinearNgramModel::read_from(open_file(model)?)
                .map_err(|e| format!("cannot load model {}: {e}", model.display()))?;
            Box::new(LinearScorer::new(name.clone(), m))
        }
        ScorerSpec::Command { name, command, timeout_ms } => Box::new(
            ProcessScorer::spawn(name.clone(), command, Duration::from_millis(*timeout_ms)).map_err(|e| e.to_string())?,
        ),
        ScorerSpec::Meta { name, field } => Box::new(MetaScorer::new(name.clone(), field.clone())),
        ScorerSpec::Lexicon { lexicon_file, saturation_per_1000 } => {
            let mut lex = match lexicon_file {
                Some(f) => LexiconScorer::from_reader(open_file(f)?).map_err(|e| format!("{}: {e}", f.display()))?,
                None => LexiconScorer::from_reader(DEFAULT_LEXICON.as_bytes()).expect("in-memory read"),
            };
            if let Some(s) = saturation_per_1000 {
                lex = lex.with_saturation(*s);
            }
            Box::new(lex)
        }
    })
}

fn prepare_stage(spec: &StageSpec, options: &RunOptions) -> Result<Prepared, String> {
    Ok(match spec {
        StageSpec::Preprocess(p) => {
            let sensitive = match &p.sensitive_terms_file {
                Some(f) => Some(SensitiveMatcher::from_reader(open_file(f)?).map_err(|e| format!("{}: {e}", f.display()))?),
                None => None,
            };
            let simplify_map = match &p.simplify_map_file {
                Some(f) => Some(SimplifyMap::from_tsv(open_file(f)?).map_err(|e| format!("{}: {e}", f.display()))?),
                None if p.simplify => Some(SimplifyMap::sample()),
                None => None,
            };
            let rules = FilterRules {
                chars: CharFilterRules {
                    min_avg_line_chars: p.min_avg_line_chars,
                    min_total_chars: p.min_total_chars,
                    max_total_chars: p.max_total_chars,
                },
                sensitive,
                sensitive_policy: p.sensitive_policy,
                simplify_map,
                simplify_langs: p.simplify_langs.clone(),
                strip_code_boilerplate: p.strip_code_boilerplate,
                code_sources: p.code_sources.clone(),
                ..FilterRules::default()
            };
            rules.validate().map_err(|e| e.to_string())?;
            Prepared::Preprocess(rules)
        }
        StageSpec::DedupFuzzy(p) => Prepared::DedupFuzzy(*p),
        StageSpec::DedupExact(p) => Prepared::DedupExact(*p),
        StageSpec::QualityScore(p) => {
            Prepared::QualityScore(p.classifiers.iter().map(build_scorer).collect::<Result<_, _>>()?)
        }
        StageSpec::QualityBucket(p) => Prepared::QualityBucket(p.bins),
        StageSpec::Fluency(p) => Prepared::Fluency(p.clone()),
        StageSpec::Pii(p) => Prepared::Pii(p.policy),
        StageSpec::Toxicity(p) => Prepared::Toxicity {
            scorer: build_scorer(&p.scorer)?,
            threshold: p.threshold,
            drop_flagged: p.drop_flagged,
        },
        StageSpec::Cot(p) => {
            let model: Arc<dyn ChatModel> = match &options.chat_model {
                Some(m) => m.clone(),
                None => {
                    let mut endpoint = EndpointConfig::new(p.endpoint.clone(), p.model.clone());
                    endpoint.api_key = std::env::var(&p.api_key_env).ok().filter(|k| !k.is_empty());
                    endpoint.max_attempts = p.max_attempts;
                    endpoint.max_inflight = p.max_inflight;
                    endpoint.requests_per_second = p.requests_per_second;
                    endpoint.timeout = Duration::from_millis(p.timeout_ms);
                    Arc::new(HttpChatClient::new(endpoint).map_err(|e| e.to_string())?)
                }
            };
            Prepared::Cot { model, config: p.synthesis.clone(), max_inflight: p.max_inflight }
        }
    })
}

/// Lists `*.jsonl` and `*.jsonl.gz` files in a directory, sorted by name, or
/// the path itself when it is a file.
pub fn input_files(input: &Path) -> io::Result<Vec<PathBuf>> {
    if input.is_file() {
        return Ok(vec![input.to_path_buf()]);
    }
    let mut files: Vec<PathBuf> = fs::read_dir(input)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            let name = p.file_name().and_then(|n| n.to_str()).unwrap_or("");
            p.is_file() && (name.ends_with(".jsonl") || name.ends_with(".jsonl.gz"))
        })
        .collect();
    files.sort();
    Ok(files)
}

fn read_corpus(input: &Path, strict: bool) -> Result<(Vec<DocumentRecord>, ReadStats), String> {
    let files = input_files(input).map_err(|e| format!("cannot list {}: {e}", input.display()))?;
    if files.is_empty() {
        return Err(format!("no .jsonl or .jsonl.gz files in {}", input.display()));
    }
    let mut docs = Vec::new();
    let mut total = ReadStats::default();
    let mut ids: HashSet<String> = HashSet::new();
    for file in files {
        let reader = open_input(&file).map_err(|e| format!("cannot open {}: {e}", file.display()))?;
        let mut records = RecordReader::new(reader, strict);
        for r in records.by_ref() {
            let doc = r.map_err(|e| format!("{}: {e}", file.display()))?;
            if ids.contains(&doc.id) {
                if strict {
                    return Err(format!("{}: duplicate record id {:?} across input files", file.display(), doc.id));
                }
                total.skipped += 1;
                continue;
            }
            ids.insert(doc.id.clone());
            docs.push(doc);
        }
        let s = records.stats();
        total.lines += s.lines;
        total.skipped += s.skipped;
    }
    total.records = docs.len() as u64;
    Ok((docs, total))
}

/// Groups records by language (if asked) and cuts each group into shards
/// of at most `max_bytes` of text, keeping input order inside a shard.
pub fn make_shards(docs: Vec<DocumentRecord>, partition_by_lang: bool, max_bytes: u64) -> Vec<Vec<DocumentRecord>> {
    let mut groups: BTreeMap<String, Vec<DocumentRecord>> = BTreeMap::new();
    for doc in docs {
        let key = if partition_by_lang { doc.lang.clone() } else { String::new() };
        groups.entry(key).or_default().push(doc);
    }
    let mut shards = Vec::new();
    for (_, group) in groups {
        let mut shard = Vec::new();
        let mut bytes = 0u64;
        for doc in group {
            let len = doc.text.len() as u64;
            if !shard.is_empty() && bytes + len > max_bytes {
                shards.push(std::mem::take(&mut shard));
                bytes = 0;
            }
            bytes += len;
            shard.push(doc);
        }
        if !shard.is_empty() {
            shards.push(shard);
        }
    }
    shards
}

/// Sums counts and `count.`-prefixed params; other params keep the first
/// shard's value.
fn merge_reports(name: &str, parts: Vec<StageReport>) -> StageReport {
    let mut merged = StageReport::new(name);
    for part in parts {
        merged.absorb_counts(&part);
        for (k, v) in part.parameters {
            match merged.parameters.get_mut(&k) {
                Some(existing) if k.starts_with("count.") => {
                    let sum = existing.parse::<u64>().unwrap_or(0) + v.parse::<u64>().unwrap_or(0);
                    *existing = sum.to_string();
                }
                Some(_) => {}
                None => {
                    merged.parameters.insert(k, v);
                }
            }
        }
    }
    merged
}

#[derive(Default)]
struct Sidecars {
    dropped: Vec<DroppedDoc>,
    removed_ranges: Vec<crate::dedup::RemovedRange>,
    clusters: Vec<crate::dedup::DuplicateCluster>,
    fluency_profiles: Option<Vec<crate::fluency::DomainLossProfile>>,
    cot_records: Vec<crate::cot::CotRecord>,
    cot_rejects: Vec<crate::cot::CotReject>,
}

fn total_docs(shards: &[Vec<DocumentRecord>]) -> u64 {
    shards.iter().map(|s| s.len() as u64).sum()
}

fn pass_through(name: &str, n: u64) -> StageReport {
    let mut r = StageReport::new(name);
    r.docs_in = n;
    r.docs_out = n;
    r
}

fn run_stage(stage: &Prepared, shards: &mut Vec<Vec<DocumentRecord>>, side: &mut Sidecars) -> Result<StageReport, String> {
    let docs_in = total_docs(shards);
    match stage {
        Prepared::Preprocess(rules) => {
            let mut reasons: BTreeMap<&'static str, u64> = BTreeMap::new();
            let mut bytes_removed = 0u64;
            for shard in shards.iter_mut() {
                let outcomes: Vec<(String, crate::preprocess::PreprocessOutcome, usize)> = std::mem::take(shard)
                    .into_par_iter()
                    .map(|d| {
                        let (id, len) = (d.id.clone(), d.text.len());
                        (id, preprocess_record(d, rules), len)
                    })
                    .collect();
                for (id, outcome, original_len) in outcomes {
                    match outcome.record {
                        Some(doc) => {
                            bytes_removed += outcome.bytes_removed as u64;
                            shard.push(doc);
                        }
                        None => {
                            let reason = outcome.decision.reason.map_or("filtered", |r| r.as_str());
                            *reasons.entry(reason).or_default() += 1;
                            bytes_removed += original_len as u64;
                            side.dropped.push(DroppedDoc::new(id, reason, "preprocess"));
                        }
                    }
                }
            }
            let mut report = StageReport::new("preprocess")
                .param("min_total_chars", rules.chars.min_total_chars)
                .param("max_total_chars", rules.chars.max_total_chars)
                .param("min_avg_line_chars", rules.chars.min_avg_line_chars);
            for (reason, n) in reasons {
                report = report.param(format!("count.dropped.{reason}"), n);
            }
            report.docs_in = docs_in;
            report.docs_out = total_docs(shards);
            report.docs_dropped = docs_in - report.docs_out;
            report.bytes_removed = bytes_removed;
            Ok(report)
        }
        Prepared::DedupFuzzy(params) => {
            let mut parts = Vec::new();
            for shard in shards.iter_mut() {
                let out = fuzzy_dedup(std::mem::take(shard), params).map_err(|e| e.to_string())?;
                for c in &out.clusters {
                    side.dropped.extend(c.dropped.iter().map(|id| DroppedDoc::new(id.clone(), "near_duplicate", "dedup_fuzzy")));
                }
                side.clusters.extend(out.clusters);
                *shard = out.docs;
                parts.push(out.report);
            }
            Ok(merge_reports("dedup_fuzzy", parts))
        }
        Prepared::DedupExact(params) => {
            let mut parts = Vec::new();
            for shard in shards.iter_mut() {
                let out = exact_dedup(std::mem::take(shard), params).map_err(|e| e.to_string())?;
                side.dropped.extend(
                    out.dropped_ids.iter().map(|id| DroppedDoc::new(id.clone(), "too_short_after_removal", "dedup_exact")),
                );
                side.removed_ranges.extend(out.removed);
                *shard = out.docs;
                parts.push(out.report);
            }
            Ok(merge_reports("dedup_exact", parts))
        }
        Prepared::QualityScore(scorers) => {
            let names: Vec<String> = scorers.iter().map(|s| s.name().to_string()).collect();
            let all: Vec<&DocumentRecord> = shards.iter().flatten().collect();
            let raw: Vec<BTreeMap<String, f64>> = all
                .par_iter()
                .map(|doc| {
                    scorers
                        .iter()
                        .map(|s| s.score_doc(doc).map(|v| (s.name().to_string(), v)).map_err(|e| e.to_string()))
                        .collect::<Result<BTreeMap<_, _>, _>>()
                })
                .collect::<Result<_, _>>()?;
            let ids: Vec<&str> = all.iter().map(|d| d.id.as_str()).collect();
            let annotations = annotate_corpus(&ids, raw, &names, None).map_err(|e| e.to_string())?;
            drop(all);
            for (doc, ann) in shards.iter_mut().flatten().zip(annotations) {
                doc.quality = Some(ann);
            }
            Ok(pass_through("quality_score", docs_in).param("classifiers", names.join(",")))
        }
        Prepared::QualityBucket(bins) => {
            let keyed: Vec<(&str, f64)> = shards
                .iter()
                .flatten()
                .map(|d| {
                    d.quality
                        .as_ref()
                        .map(|q| (d.id.as_str(), q.final_score))
                        .ok_or_else(|| format!("doc {:?} has no quality score", d.id))
                })
                .collect::<Result<_, _>>()?;
            let buckets = assign_buckets(&keyed, *bins).map_err(|e| e.to_string())?;
            for (doc, b) in shards.iter_mut().flatten().zip(buckets) {
                if let Some(q) = &mut doc.quality {
                    q.bucket = Some(b);
                }
            }
            Ok(pass_through("quality_bucket", docs_in).param("bins", bins))
        }
        Prepared::Fluency(p) => {
            let sizes: Vec<usize> = shards.iter().map(Vec::len).collect();
            let all: Vec<DocumentRecord> = std::mem::take(shards).into_iter().flatten().collect();
            let profiles = compute_domain_thresholds(&all, p.percentile, p.min_domain_size).map_err(|e| e.to_string())?;
            let mut rest = all.into_iter();
            let mut parts = Vec::new();
            for size in sizes {
                let out = filter_by_loss(rest.by_ref().take(size).collect(), &profiles).map_err(|e| e.to_string())?;
                side.dropped.extend(out.dropped.iter().map(|d| DroppedDoc::new(d.id.clone(), "loss_above_threshold", "fluency")));
                shards.push(out.kept);
                parts.push(out.report);
            }
            side.fluency_profiles = Some(profiles.into_values().collect());
            Ok(merge_reports("fluency", parts).param("percentile", p.percentile).param("min_domain_size", p.min_domain_size))
        }
        Prepared::Pii(policy) => {
            let mut parts = Vec::new();
            for shard in shards.iter_mut() {
                let results: Vec<Result<(DocumentRecord, usize, bool), String>> = std::mem::take(shard)
                    .into_par_iter()
                    .map(|mut doc| {
                        let spans = detect_pii(&doc.text);
                        let r = redact(&doc.text, &spans, *policy).map_err(|e| format!("doc {:?}: {e}", doc.id))?;
                        doc.text = r.text;
                        Ok((doc, r.count, r.drop_doc))
                    })
                    .collect();
                let mut report = StageReport::new("pii");
                let mut spans_total = 0u64;
                for r in results {
                    let (doc, count, drop_doc) = r?;
                    report.docs_in += 1;
                    spans_total += count as u64;
                    if drop_doc {
                        report.docs_dropped += 1;
                        report.bytes_removed += doc.text.len() as u64;
                        side.dropped.push(DroppedDoc::new(doc.id, "pii", "pii"));
                    } else {
                        report.docs_out += 1;
                        shard.push(doc);
                    }
                }
                parts.push(report.param("count.pii_spans", spans_total));
            }
            let policy_name = match policy {
                RedactPolicy::Mask => "mask",
                RedactPolicy::DropDoc => "drop_doc",
            };
            Ok(merge_reports("pii", parts).param("policy", policy_name))
        }
        Prepared::Toxicity { scorer, threshold, drop_flagged } => {
            let mut report = StageReport::new("toxicity");
            let mut flagged = 0u64;
            for shard in shards.iter_mut() {
                let results: Vec<Result<DocumentRecord, String>> = std::mem::take(shard)
                    .into_par_iter()
                    .map(|mut doc| {
                        let ann = score_toxicity(&doc, scorer.as_ref(), *threshold).map_err(|e| e.to_string())?;
                        doc.toxicity = Some(ann);
                        Ok(doc)
                    })
                    .collect();
                for r in results {
                    let doc = r?;
                    report.docs_in += 1;
                    let is_flagged = doc.toxicity.as_ref().is_some_and(|t| t.flagged);
                    flagged += is_flagged as u64;
                    if is_flagged && *drop_flagged {
                        report.docs_dropped += 1;
                        report.bytes_removed += doc.text.len() as u64;
                        side.dropped.push(DroppedDoc::new(doc.id, "toxic", "toxicity"));
                    } else {
                        report.docs_out += 1;
                        shard.push(doc);
                    }
                }
            }
            Ok(report
                .param("scorer", scorer.name())
                .param("threshold", threshold)
                .param("drop_flagged", drop_flagged)
                .param("count.flagged", flagged))
        }
        Prepared::Cot { model, config, max_inflight } => {
            let all: Vec<DocumentRecord> = shards.iter().flatten().cloned().collect();
            let out = synthesize_batch(&all, model.as_ref(), config, *max_inflight);
            let mut report = pass_through("cot", docs_in);
            for (k, v) in out.report.parameters {
                report.parameters.insert(k, v);
            }
            report = report.param("count.records", out.records.len());
            side.cot_records.extend(out.records);
            side.cot_rejects.extend(out.rejects);
            Ok(report)
        }
    }
}

fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<u64, RunError> {
    let err = |source| RunError::Output { path: path.to_path_buf(), source };
    let file = File::create(path).map_err(err)?;
    let mut w = JsonlWriter::new(BufWriter::new(file));
    for item in items {
        w.write(item).map_err(err)?;
    }
    let (_, fp) = w.finish().map_err(err)?;
    Ok(fp)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), RunError> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("output types always serialize");
    bytes.push(b'\n');
    fs::write(path, bytes).map_err(|source| RunError::Output { path: path.to_path_buf(), source })
}

fn ms(d: Duration) -> u64 {
    d.as_millis() as u64
}

/// Runs the configured pipeline. Stage failures are reported in the
/// returned manifest (which is also written to `output`); only problems
/// writing the output directory are errors.
pub fn run_pipeline(config: &PipelineConfig, input: &Path, output: &Path, options: &RunOptions) -> Result<RunOutcome, RunError> {
    let started = Instant::now();
    fs::create_dir_all(output).map_err(|source| RunError::Output { path: output.to_path_buf(), source })?;
    // Stale outputs from an earlier run must not survive a failed one.
    for name in [
        DATA_FILE,
        DROPPED_FILE,
        REMOVED_RANGES_FILE,
        CLUSTERS_FILE,
        FLUENCY_PROFILES_FILE,
        COT_RECORDS_FILE,
        COT_REJECTS_FILE,
    ] {
        let _ = fs::remove_file(output.join(name));
    }

    let mut manifest = RunManifest {
        config: config.snapshot.clone(),
        failure: None,
        input_records: 0,
        output_fingerprint: format_fingerprint(fingerprint_records(std::iter::empty())),
        schema_version: MANIFEST_SCHEMA_VERSION,
        stages: Vec::new(),
        toolkit_version: TOOLKIT_VERSION.to_string(),
        wall_clock_ms: None,
    };
    let mut timing = Timing { read_ms: 0, stages: Vec::new(), total_ms: 0, write_ms: 0 };
    let mut read = ReadStats::default();

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.parallelism)
        .build()
        .map_err(|e| RunError::Pool(e.to_string()))?;

    let result: Result<(), RunError> = pool.install(|| {
        let mut prepared = Vec::with_capacity(config.stages.len());
        for spec in &config.stages {
            match prepare_stage(spec, options) {
                Ok(p) => prepared.push(p),
                Err(error) => {
                    manifest.failure = Some(StageFailure { error, stage: spec.name().to_string() });
                    return Ok(());
                }
            }
        }

        let t = Instant::now();
        let docs = match read_corpus(input, config.strict) {
            Ok((docs, stats)) => {
                read = stats;
                docs
            }
            Err(error) => {
                manifest.failure = Some(StageFailure { error, stage: "read".into() });
                return Ok(());
            }
        };
        timing.read_ms = ms(t.elapsed());
        manifest.input_records = docs.len() as u64;
        let mut shards = make_shards(docs, config.partition_by_lang, config.shard_size_bytes);

        let mut side = Sidecars::default();
        for (spec, stage) in config.stages.iter().zip(&prepared) {
            let t = Instant::now();
            match run_stage(stage, &mut shards, &mut side) {
                Ok(mut report) => {
                    report.fingerprint = format_fingerprint(fingerprint_records(shards.iter().flatten()));
                    manifest.stages.push(report);
                }
                Err(error) => {
                    manifest.failure = Some(StageFailure { error, stage: spec.name().to_string() });
                    return Ok(());
                }
            }
            timing.stages.push(StageTiming { ms: ms(t.elapsed()), stage: spec.name().to_string() });
        }
        drop(prepared);

        let t = Instant::now();
        let final_docs: Vec<DocumentRecord> = shards.into_iter().flatten().collect();
        let fp = write_jsonl(&output.join(DATA_FILE), &final_docs)?;
        manifest.output_fingerprint = format_fingerprint(fp);
        write_jsonl(&output.join(DROPPED_FILE), &side.dropped)?;
        if config.stages.iter().any(|s| matches!(s, StageSpec::DedupExact(_))) {
            write_jsonl(&output.join(REMOVED_RANGES_FILE), &side.removed_ranges)?;
        }
        if config.stages.iter().any(|s| matches!(s, StageSpec::DedupFuzzy(_))) {
            write_jsonl(&output.join(CLUSTERS_FILE), &side.clusters)?;
        }
        if let Some(profiles) = &side.fluency_profiles {
            write_json(&output.join(FLUENCY_PROFILES_FILE), profiles)?;
        }
        if config.stages.iter().any(|s| matches!(s, StageSpec::Cot(_))) {
            write_jsonl(&output.join(COT_RECORDS_FILE), &side.cot_records)?;
            write_jsonl(&output.join(COT_REJECTS_FILE), &side.cot_rejects)?;
        }
        timing.write_ms = ms(t.elapsed());
        Ok(())
    });
    result?;

    timing.total_ms = ms(started.elapsed());
    if !options.deterministic {
        manifest.wall_clock_ms = Some(timing.total_ms);
    }
    write_json(&output.join(MANIFEST_FILE), &manifest)?;
    write_json(&output.join(TIMING_FILE), &timing)?;
    Ok(RunOutcome { manifest, read })
}
