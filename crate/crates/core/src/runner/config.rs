//! Pipeline configuration: parsing and whole-config validation.

use std::collections::BTreeSet;
use std::path::PathBuf;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::cot::CotConfig;
use crate::dedup::{ExactDedupParams, MinHashParams};
use crate::fluency::{DEFAULT_MIN_DOMAIN_SIZE, DEFAULT_PERCENTILE};
use crate::preprocess::SensitivePolicy;
use crate::quality::DEFAULT_BUCKETS;
use crate::safety::RedactPolicy;

pub const STAGE_NAMES: [&str; 9] = [
    "preprocess",
    "dedup_fuzzy",
    "dedup_exact",
    "quality_score",
    "quality_bucket",
    "fluency",
    "pii",
    "toxicity",
    "cot",
];

/// The config shipped with the toolkit.
pub const DEFAULT_CONFIG: &str = include_str!("../../config/default.json");

pub const DEFAULT_SHARD_SIZE_BYTES: u64 = 2 * 1024 * 1024 * 1024;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PreprocessParams {
    pub code_sources: Vec<String>,
    pub max_total_chars: usize,
    pub min_avg_line_chars: f64,
    pub min_total_chars: usize,
    pub sensitive_policy: SensitivePolicy,
    /// One term per line.
    pub sensitive_terms_file: Option<PathBuf>,
    /// Use the built-in sample table when no map file is given.
    pub simplify: bool,
    pub simplify_langs: Vec<String>,
    /// Tab-separated `traditional<TAB>simplified` pairs.
    pub simplify_map_file: Option<PathBuf>,
    pub strip_code_boilerplate: bool,
}

impl Default for PreprocessParams {
    fn default() -> Self {
        PreprocessParams {
            code_sources: vec!["code".into()],
            max_total_chars: 20_000,
            min_avg_line_chars: 10.0,
            min_total_chars: 100,
            sensitive_policy: SensitivePolicy::DropDoc,
            sensitive_terms_file: None,
            simplify: false,
            simplify_langs: vec!["zh".into()],
            simplify_map_file: None,
            strip_code_boilerplate: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScorerSpec {
    /// A model file written by `quality train`.
    Linear { name: String, model: PathBuf },
    /// A long-lived process speaking the line protocol.
    Command {
        name: String,
        command: Vec<String>,
        #[serde(default = "default_timeout_ms")]
        timeout_ms: u64,
    },
    /// A numeric string already present in each record's `meta`.
    Meta { name: String, field: String },
    /// Toxic-term hit rate; only meaningful for the toxicity stage.
    Lexicon {
        #[serde(default)]
        lexicon_file: Option<PathBuf>,
        #[serde(default)]
        saturation_per_1000: Option<f64>,
    },
}

fn default_timeout_ms() -> u64 {
    30_000
}

impl ScorerSpec {
    pub fn name(&self) -> &str {
        match self {
            ScorerSpec::Linear { name, .. }
            | ScorerSpec::Command { name, .. }
            | ScorerSpec::Meta { name, .. } => name,
            ScorerSpec::Lexicon { .. } => "lexicon",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QualityScoreParams {
    pub classifiers: Vec<ScorerSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QualityBucketParams {
    pub bins: u32,
}

impl Default for QualityBucketParams {
    fn default() -> Self {
        QualityBucketParams { bins: DEFAULT_BUCKETS }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FluencyParams {
    pub min_domain_size: usize,
    pub percentile: f64,
}

impl Default for FluencyParams {
    fn default() -> Self {
        FluencyParams { min_domain_size: DEFAULT_MIN_DOMAIN_SIZE, percentile: DEFAULT_PERCENTILE }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PiiParams {
    pub policy: RedactPolicy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToxicityParams {
    /// Drop flagged docs instead of only annotating them.
    pub drop_flagged: bool,
    pub scorer: ScorerSpec,
    pub threshold: f64,
}

impl Default for ToxicityParams {
    fn default() -> Self {
        ToxicityParams {
            drop_flagged: false,
            scorer: ScorerSpec::Lexicon { lexicon_file: None, saturation_per_1000: None },
            threshold: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CotStageParams {
    /// Environment variable holding the bearer token.
    pub api_key_env: String,
    pub endpoint: String,
    pub max_attempts: u32,
    pub max_inflight: usize,
    pub model: String,
    pub requests_per_second: Option<f64>,
    pub synthesis: CotConfig,
    pub timeout_ms: u64,
}

impl Default for CotStageParams {
    fn default() -> Self {
        CotStageParams {
            api_key_env: crate::cot::API_KEY_ENV.into(),
            endpoint: String::new(),
            max_attempts: 5,
            max_inflight: 4,
            model: String::new(),
            requests_per_second: None,
            synthesis: CotConfig::default(),
            timeout_ms: 120_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum StageSpec {
    Preprocess(PreprocessParams),
    DedupFuzzy(MinHashParams),
    DedupExact(ExactDedupParams),
    QualityScore(QualityScoreParams),
    QualityBucket(QualityBucketParams),
    Fluency(FluencyParams),
    Pii(PiiParams),
    Toxicity(ToxicityParams),
    Cot(CotStageParams),
}

impl StageSpec {
    pub fn name(&self) -> &'static str {
        match self {
            StageSpec::Preprocess(_) => "preprocess",
            StageSpec::DedupFuzzy(_) => "dedup_fuzzy",
            StageSpec::DedupExact(_) => "dedup_exact",
            StageSpec::QualityScore(_) => "quality_score",
            StageSpec::QualityBucket(_) => "quality_bucket",
            StageSpec::Fluency(_) => "fluency",
            StageSpec::Pii(_) => "pii",
            StageSpec::Toxicity(_) => "toxicity",
            StageSpec::Cot(_) => "cot",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub seed: u64,
    pub shard_size_bytes: u64,
    /// Worker threads; 0 uses every core.
    pub parallelism: usize,
    /// Shard (and therefore dedup) per language.
    pub partition_by_lang: bool,
    /// Abort on malformed input lines instead of skipping them.
    pub strict: bool,
    pub stages: Vec<StageSpec>,
    /// The parsed config as written, stored in the manifest.
    pub snapshot: Value,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    #[serde(default)]
    seed: u64,
    #[serde(default = "default_shard_size")]
    shard_size_bytes: u64,
    #[serde(default)]
    parallelism: usize,
    #[serde(default = "default_true")]
    partition_by_lang: bool,
    #[serde(default)]
    strict: bool,
    stages: Vec<RawStage>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawStage {
    name: String,
    #[serde(default)]
    params: Option<Value>,
}

fn default_shard_size() -> u64 {
    DEFAULT_SHARD_SIZE_BYTES
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid config:\n  - {}", .0.join("\n  - "))]
pub struct ConfigErrors(pub Vec<String>);

fn nearest_stage(name: &str) -> &'static str {
    STAGE_NAMES
        .iter()
        .copied()
        .min_by_key(|candidate| strsim::levenshtein(name, candidate))
        .expect("stage list is non-empty")
}

fn parse_params<T: DeserializeOwned + Default>(
    index: usize,
    name: &str,
    params: Option<Value>,
    errors: &mut Vec<String>,
) -> Option<T> {
    match params {
        None | Some(Value::Null) => Some(T::default()),
        Some(v) => match serde_json::from_value(v) {
            Ok(p) => Some(p),
            Err(e) => {
                errors.push(format!("stage {} ({name}): {e}", index + 1));
                None
            }
        },
    }
}

fn check_stage(index: usize, spec: &StageSpec, errors: &mut Vec<String>) {
    let mut fail = |msg: String| errors.push(format!("stage {} ({}): {msg}", index + 1, spec.name()));
    match spec {
        StageSpec::Preprocess(p) => {
            if p.min_total_chars > p.max_total_chars {
                fail(format!("min_total_chars ({}) exceeds max_total_chars ({})", p.min_total_chars, p.max_total_chars));
            }
            if !(p.min_avg_line_chars > 0.0) {
                fail(format!("min_avg_line_chars must be positive, got {}", p.min_avg_line_chars));
            }
        }
        StageSpec::DedupFuzzy(p) => {
            if let Err(e) = p.validate() {
                fail(e.to_string());
            }
        }
        StageSpec::DedupExact(p) => {
            if let Err(e) = p.validate() {
                fail(e);
            }
        }
        StageSpec::QualityScore(p) => {
            if p.classifiers.is_empty() {
                fail("at least one classifier is required".into());
            }
            let mut seen = BTreeSet::new();
            for c in &p.classifiers {
                if c.name().is_empty() {
                    fail("classifier names must be non-empty".into());
                } else if !seen.insert(c.name()) {
                    fail(format!("classifier name {:?} is used twice", c.name()));
                }
                match c {
                    ScorerSpec::Lexicon { .. } => fail(format!("classifier {:?}: lexicon scorers are for toxicity", c.name())),
                    ScorerSpec::Command { command, .. } if command.is_empty() => {
                        fail(format!("classifier {:?}: command is empty", c.name()))
                    }
                    _ => {}
                }
            }
        }
        StageSpec::QualityBucket(p) => {
            if p.bins == 0 {
                fail("bins must be at least 1".into());
            }
        }
        StageSpec::Fluency(p) => {
            if !(p.percentile > 0.0 && p.percentile < 1.0) {
                fail(format!("percentile {} must lie strictly between 0 and 1", p.percentile));
            }
        }
        StageSpec::Pii(_) => {}
        StageSpec::Toxicity(p) => {
            if !(0.0..=1.0).contains(&p.threshold) {
                fail(format!("threshold {} must lie in [0, 1]", p.threshold));
            }
            if let ScorerSpec::Command { command, .. } = &p.scorer {
                if command.is_empty() {
                    fail("scorer command is empty".into());
                }
            }
        }
        StageSpec::Cot(p) => {
            if p.endpoint.is_empty() {
                fail("endpoint is required".into());
            }
            if p.model.is_empty() {
                fail("model is required".into());
            }
            if p.max_inflight == 0 {
                fail("max_inflight must be at least 1".into());
            }
            if p.synthesis.max_segments == 0 {
                fail("synthesis.max_segments must be at least 1".into());
            }
        }
    }
}

/// Parses and validates a config, reporting every violation found.
pub fn validate_config(raw: &str) -> Result<PipelineConfig, ConfigErrors> {
    let snapshot: Value = serde_json::from_str(raw).map_err(|e| ConfigErrors(vec![format!("not valid JSON: {e}")]))?;
    let parsed: RawConfig =
        serde_json::from_value(snapshot.clone()).map_err(|e| ConfigErrors(vec![format!("top level: {e}")]))?;
    let mut errors = Vec::new();
    if parsed.shard_size_bytes == 0 {
        errors.push("shard_size_bytes must be positive".into());
    }
    let mut stages = Vec::with_capacity(parsed.stages.len());
    let mut scored = false;
    for (i, stage) in parsed.stages.into_iter().enumerate() {
        let spec = match stage.name.as_str() {
            "preprocess" => parse_params(i, &stage.name, stage.params, &mut errors).map(StageSpec::Preprocess),
            "dedup_fuzzy" => {
                // The pipeline seed is the default MinHash seed.
                let mut params = stage.params.unwrap_or(Value::Object(Default::default()));
                if let Value::Object(map) = &mut params {
                    map.entry("seed").or_insert(Value::from(parsed.seed));
                }
                parse_params(i, &stage.name, Some(params), &mut errors).map(StageSpec::DedupFuzzy)
            }
            "dedup_exact" => parse_params(i, &stage.name, stage.params, &mut errors).map(StageSpec::DedupExact),
            "quality_score" => parse_params(i, &stage.name, stage.params, &mut errors).map(StageSpec::QualityScore),
            "quality_bucket" => parse_params(i, &stage.name, stage.params, &mut errors).map(StageSpec::QualityBucket),
            "fluency" => parse_params(i, &stage.name, stage.params, &mut errors).map(StageSpec::Fluency),
            "pii" => parse_params(i, &stage.name, stage.params, &mut errors).map(StageSpec::Pii),
            "toxicity" => parse_params(i, &stage.name, stage.params, &mut errors).map(StageSpec::Toxicity),
            "cot" => parse_params(i, &stage.name, stage.params, &mut errors).map(StageSpec::Cot),
            other => {
                errors.push(format!(
                    "stage {}: unknown stage {other:?} (did you mean {:?}?)",
                    i + 1,
                    nearest_stage(other)
                ));
                None
            }
        };
        if let Some(spec) = spec {
            match &spec {
                StageSpec::QualityScore(_) => scored = true,
                StageSpec::QualityBucket(_) if !scored => {
                    errors.push(format!("stage {} (quality_bucket): needs an earlier quality_score stage", i + 1))
                }
                _ => {}
            }
            check_stage(i, &spec, &mut errors);
            stages.push(spec);
        }
    }
    if !errors.is_empty() {
        return Err(ConfigErrors(errors));
    }
    Ok(PipelineConfig {
        seed: parsed.seed,
        shard_size_bytes: parsed.shard_size_bytes,
        parallelism: parsed.parallelism,
        partition_by_lang: parsed.partition_by_lang,
        strict: parsed.strict,
        stages,
        snapshot,
    })
}
