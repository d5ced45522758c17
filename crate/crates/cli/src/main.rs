use std::collections::BTreeSet;
use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use corpusforge_core::cot::CotConfig;
use corpusforge_core::dedup::{ExactDedupParams, MinHashParams};
use corpusforge_core::io::RecordReader;
use corpusforge_core::preprocess::SensitivePolicy;
use corpusforge_core::quality::{accuracy, build_training_set, train_linear_classifier, LinearNgramModel, TrainHyper, TrainingSetSpec};
use corpusforge_core::runner::{
    input_files, load_config, validate_config, CotStageParams, FluencyParams, PiiParams, PipelineConfig, PreprocessParams,
    QualityBucketParams, QualityScoreParams, ScorerSpec, StageSpec, DEFAULT_CONFIG, DEFAULT_SHARD_SIZE_BYTES,
};
use corpusforge_core::safety::RedactPolicy;
use corpusforge_core::scorer::{serve_scorer, LinearScorer};
use corpusforge_core::{run_pipeline, DocumentRecord, RunOptions};

#[derive(Parser)]
#[command(name = "corpusforge", version, about = "Curate text corpora for language-model pretraining")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a whole pipeline described by a config file.
    Run {
        /// Pipeline config (JSON). The built-in default is used when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        io: IoArgs,
    },
    /// Inspect or check pipeline configs.
    #[command(subcommand)]
    Config(ConfigCommand),
    /// Rule-based cleaning: script conversion, length and line filters,
    /// sensitive terms, code boilerplate.
    Preprocess {
        #[arg(long, default_value_t = 100)]
        min_chars: usize,
        #[arg(long, default_value_t = 20_000)]
        max_chars: usize,
        #[arg(long, default_value_t = 10.0)]
        min_avg_line: f64,
        /// Sensitive terms, one per line.
        #[arg(long)]
        sensitive_terms: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = SensitiveArg::DropDoc)]
        sensitive_policy: SensitiveArg,
        /// Convert traditional characters with the built-in table.
        #[arg(long)]
        simplify: bool,
        /// Tab-separated conversion table; implies --simplify.
        #[arg(long)]
        simplify_map: Option<PathBuf>,
        #[arg(long)]
        keep_code_boilerplate: bool,
        #[command(flatten)]
        io: IoArgs,
    },
    #[command(subcommand)]
    Dedup(DedupCommand),
    #[command(subcommand)]
    Quality(QualityCommand),
    /// Drop docs whose loss exceeds their domain's percentile threshold.
    Fluency {
        /// Percentile in percent, e.g. 99.5.
        #[arg(long, default_value_t = 99.5)]
        percentile: f64,
        /// Smaller domains are left untouched.
        #[arg(long, default_value_t = 200)]
        min_domain_size: usize,
        #[command(flatten)]
        io: IoArgs,
    },
    /// Detect and redact national ids and phone numbers.
    Pii {
        #[arg(long, value_enum, default_value_t = PiiArg::Mask)]
        policy: PiiArg,
        #[command(flatten)]
        io: IoArgs,
    },
    #[command(subcommand)]
    Cot(CotCommand),
}

#[derive(Subcommand)]
enum ConfigCommand {
    /// Print the built-in default config.
    Default,
    /// Validate a config and report every problem found.
    Validate { file: PathBuf },
}

#[derive(Subcommand)]
enum DedupCommand {
    /// Near-duplicate removal with MinHash and LSH banding.
    Fuzzy {
        #[arg(long, default_value_t = 0.7)]
        threshold: f64,
        #[arg(long, default_value_t = 128)]
        perms: usize,
        /// Defaults to perms / 8.
        #[arg(long)]
        bands: Option<usize>,
        #[arg(long, default_value_t = 5)]
        shingle_width: usize,
        #[arg(long, default_value_t = 0x5eed_1234)]
        seed: u64,
        #[command(flatten)]
        io: IoArgs,
    },
    /// Exact substring removal with a suffix array.
    Exact {
        /// Minimum repeated span, in bytes.
        #[arg(long, default_value_t = 800)]
        length_threshold: usize,
        #[arg(long, default_value_t = 35)]
        min_doc_words: usize,
        #[arg(long, default_value_t = 100)]
        min_remaining_chars: usize,
        #[command(flatten)]
        io: IoArgs,
    },
}

#[derive(Subcommand)]
enum QualityCommand {
    /// Train a hashed n-gram linear classifier.
    Train {
        /// JSONL of high-quality docs.
        #[arg(long)]
        positive: PathBuf,
        /// JSONL of low-quality docs.
        #[arg(long)]
        negative: PathBuf,
        /// Where to write the model.
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value_t = 5)]
        epochs: usize,
        #[arg(long, default_value_t = 0.1)]
        lr: f64,
        /// log2 of the feature space size.
        #[arg(long, default_value_t = 21)]
        hash_bits: u32,
        #[arg(long, value_delimiter = ',', default_values_t = [1usize, 2])]
        orders: Vec<usize>,
        /// Train:test split.
        #[arg(long, default_value = "10:1")]
        split: String,
        /// Match the negative length histogram to the positive one.
        #[arg(long)]
        length_balance: bool,
        /// Tokens (one per line) stripped from positives before training.
        #[arg(long)]
        stopwords: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Score docs with one or more classifiers and aggregate percentiles.
    Score {
        /// NAME=PATH of a trained model; repeatable.
        #[arg(long = "model")]
        models: Vec<String>,
        /// NAME=FIELD of a numeric meta field; repeatable.
        #[arg(long = "meta")]
        metas: Vec<String>,
        /// NAME=COMMAND of a line-protocol scorer process; repeatable.
        #[arg(long = "command")]
        commands: Vec<String>,
        #[command(flatten)]
        io: IoArgs,
    },
    /// Assign equal-frequency buckets over already scored docs.
    Bucket {
        #[arg(long, default_value_t = 20)]
        bins: u32,
        #[command(flatten)]
        io: IoArgs,
    },
    /// Serve a model over the line protocol on stdin/stdout.
    Serve {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value = "linear")]
        name: String,
    },
}

#[derive(Subcommand)]
enum CotCommand {
    /// Synthesize chain-of-thought records through a chat-completions endpoint.
    /// The bearer token is read from CORPUSFORGE_API_KEY.
    Synth {
        #[arg(long)]
        endpoint: String,
        #[arg(long)]
        model: String,
        #[arg(long, default_value_t = 4)]
        max_inflight: usize,
        #[arg(long)]
        requests_per_second: Option<f64>,
        #[arg(long, default_value_t = 32)]
        max_segments: usize,
        /// Comma-separated sources to synthesize; empty means all.
        #[arg(long, value_delimiter = ',')]
        sources: Option<Vec<String>>,
        #[command(flatten)]
        io: IoArgs,
    },
}

#[derive(Args)]
struct IoArgs {
    /// A .jsonl / .jsonl.gz file or a directory of them.
    #[arg(long)]
    input: PathBuf,
    /// Output directory.
    #[arg(long)]
    output: PathBuf,
    /// Leave wall-clock time out of the manifest.
    #[arg(long)]
    deterministic: bool,
    /// Worker threads; 0 uses all cores.
    #[arg(long, default_value_t = 0)]
    threads: usize,
    /// Abort on the first malformed input line.
    #[arg(long)]
    strict: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum SensitiveArg {
    DropDoc,
    DropLine,
}

#[derive(Clone, Copy, ValueEnum)]
enum PiiArg {
    Mask,
    DropDoc,
}

fn single_stage(stage: StageSpec, params: serde_json::Value, io: &IoArgs) -> PipelineConfig {
    let name = stage.name();
    PipelineConfig {
        seed: 0,
        shard_size_bytes: DEFAULT_SHARD_SIZE_BYTES,
        parallelism: io.threads,
        partition_by_lang: true,
        strict: io.strict,
        stages: vec![stage],
        snapshot: json!({ "stages": [{ "name": name, "params": params }] }),
    }
}

fn execute(config: &PipelineConfig, io: &IoArgs) -> Result<bool> {
    let options = RunOptions { deterministic: io.deterministic, ..Default::default() };
    let outcome = run_pipeline(config, &io.input, &io.output, &options)?;
    let m = &outcome.manifest;
    if outcome.read.skipped > 0 {
        eprintln!("skipped {} malformed or duplicate input lines", outcome.read.skipped);
    }
    for s in &m.stages {
        eprintln!("{:<16} in {:>9}  out {:>9}  dropped {:>9}  bytes removed {:>12}", s.stage_name, s.docs_in, s.docs_out, s.docs_dropped, s.bytes_removed);
    }
    if let Some(f) = &m.failure {
        eprintln!("error: stage {} failed: {}", f.stage, f.error);
        return Ok(false);
    }
    eprintln!("wrote {} (fingerprint {})", io.output.join("data.jsonl").display(), m.output_fingerprint);
    Ok(true)
}

fn stage<T: serde::Serialize>(io: &IoArgs, params: T, wrap: impl FnOnce(T) -> StageSpec) -> Result<bool> {
    let snapshot = serde_json::to_value(&params)?;
    execute(&single_stage(wrap(params), snapshot, io), io)
}

fn named_pairs(values: &[String], what: &str) -> Result<Vec<(String, String)>> {
    values
        .iter()
        .map(|v| match v.split_once('=') {
            Some((n, x)) if !n.is_empty() && !x.is_empty() => Ok((n.to_string(), x.to_string())),
            _ => bail!("--{what} expects NAME=VALUE, got {v:?}"),
        })
        .collect()
}

fn read_docs(path: &Path) -> Result<Vec<DocumentRecord>> {
    let mut docs = Vec::new();
    for file in input_files(path).with_context(|| format!("cannot list {}", path.display()))? {
        let reader = corpusforge_core::io::open_input(&file).with_context(|| format!("cannot open {}", file.display()))?;
        for record in RecordReader::new(reader, true) {
            docs.push(record.with_context(|| file.display().to_string())?);
        }
    }
    Ok(docs)
}

fn parse_split(s: &str) -> Result<(usize, usize)> {
    let (a, b) = s.split_once(':').context("--split expects TRAIN:TEST, e.g. 10:1")?;
    Ok((a.trim().parse()?, b.trim().parse()?))
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Run { config, io } => {
            let mut cfg = match &config {
                Some(path) => load_config(path).map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))?,
                None => validate_config(DEFAULT_CONFIG).expect("built-in config is valid"),
            };
            if io.threads > 0 {
                cfg.parallelism = io.threads;
            }
            cfg.strict |= io.strict;
            execute(&cfg, &io)
        }
        Command::Config(ConfigCommand::Default) => {
            print!("{DEFAULT_CONFIG}");
            Ok(true)
        }
        Command::Config(ConfigCommand::Validate { file }) => match load_config(&file) {
            Ok(cfg) => {
                let names: Vec<&str> = cfg.stages.iter().map(StageSpec::name).collect();
                println!("ok: {} stages ({})", names.len(), names.join(" -> "));
                Ok(true)
            }
            Err(e) => {
                eprintln!("{}: {e}", file.display());
                Ok(false)
            }
        },
        Command::Preprocess {
            min_chars,
            max_chars,
            min_avg_line,
            sensitive_terms,
            sensitive_policy,
            simplify,
            simplify_map,
            keep_code_boilerplate,
            io,
        } => {
            let params = PreprocessParams {
                max_total_chars: max_chars,
                min_avg_line_chars: min_avg_line,
                min_total_chars: min_chars,
                sensitive_policy: match sensitive_policy {
                    SensitiveArg::DropDoc => SensitivePolicy::DropDoc,
                    SensitiveArg::DropLine => SensitivePolicy::DropLine,
                },
                sensitive_terms_file: sensitive_terms,
                simplify: simplify || simplify_map.is_some(),
                simplify_map_file: simplify_map,
                strip_code_boilerplate: !keep_code_boilerplate,
                ..Default::default()
            };
            if params.min_total_chars > params.max_total_chars {
                bail!("--min-chars exceeds --max-chars");
            }
            stage(&io, params, StageSpec::Preprocess)
        }
        Command::Dedup(DedupCommand::Fuzzy { threshold, perms, bands, shingle_width, seed, io }) => {
            let bands = bands.unwrap_or(perms / 8);
            if bands == 0 || perms % bands != 0 {
                bail!("--perms ({perms}) must be a positive multiple of --bands ({bands})");
            }
            let params = MinHashParams { shingle_width, num_perms: perms, bands, rows: perms / bands, jaccard_threshold: threshold, seed };
            params.validate().map_err(|e| anyhow::anyhow!("{e}"))?;
            stage(&io, params, StageSpec::DedupFuzzy)
        }
        Command::Dedup(DedupCommand::Exact { length_threshold, min_doc_words, min_remaining_chars, io }) => {
            let params = ExactDedupParams {
                length_threshold_bytes: length_threshold,
                min_doc_words,
                min_remaining_chars,
                ..Default::default()
            };
            params.validate().map_err(|e| anyhow::anyhow!(e))?;
            stage(&io, params, StageSpec::DedupExact)
        }
        Command::Quality(QualityCommand::Train {
            positive,
            negative,
            model,
            epochs,
            lr,
            hash_bits,
            orders,
            split,
            length_balance,
            stopwords,
            seed,
        }) => {
            if !(4..=28).contains(&hash_bits) {
                bail!("--hash-bits must be between 4 and 28");
            }
            let mut spec = TrainingSetSpec::new(read_docs(&positive)?, read_docs(&negative)?);
            spec.ratio = parse_split(&split)?;
            spec.length_balance = length_balance;
            if let Some(path) = stopwords {
                spec.stopword_injection = fs::read_to_string(&path)
                    .with_context(|| format!("cannot read {}", path.display()))?
                    .lines()
                    .map(|l| l.trim().to_lowercase())
                    .filter(|l| !l.is_empty())
                    .collect::<BTreeSet<_>>();
            }
            let data = build_training_set(&spec, seed)?;
            let hyper = TrainHyper { epochs, hash_dim: 1 << hash_bits, lr, ngram_orders: orders };
            let trained = train_linear_classifier(&data.train, &hyper, seed)?;
            let acc = accuracy(&trained, &data.test);
            let out = BufWriter::new(File::create(&model).with_context(|| format!("cannot create {}", model.display()))?);
            trained.write_to(out)?;
            println!("{}", json!({"model": model, "test_accuracy": acc, "test_examples": data.test.len(), "train_examples": data.train.len()}));
            Ok(true)
        }
        Command::Quality(QualityCommand::Score { models, metas, commands, io }) => {
            let mut classifiers = Vec::new();
            for (name, path) in named_pairs(&models, "model")? {
                classifiers.push(ScorerSpec::Linear { name, model: path.into() });
            }
            for (name, field) in named_pairs(&metas, "meta")? {
                classifiers.push(ScorerSpec::Meta { name, field });
            }
            for (name, cmd) in named_pairs(&commands, "command")? {
                let command = cmd.split_whitespace().map(str::to_string).collect();
                classifiers.push(ScorerSpec::Command { name, command, timeout_ms: 30_000 });
            }
            if classifiers.is_empty() {
                bail!("give at least one --model, --meta or --command");
            }
            stage(&io, QualityScoreParams { classifiers }, StageSpec::QualityScore)
        }
        Command::Quality(QualityCommand::Bucket { bins, io }) => {
            if bins == 0 {
                bail!("--bins must be at least 1");
            }
            stage(&io, QualityBucketParams { bins }, StageSpec::QualityBucket)
        }
        Command::Quality(QualityCommand::Serve { model, name }) => {
            let file = File::open(&model).with_context(|| format!("cannot open {}", model.display()))?;
            let scorer = LinearScorer::new(name, LinearNgramModel::read_from(BufReader::new(file))?);
            let stdin = io::stdin().lock();
            serve_scorer(&scorer, stdin, io::stdout().lock())?;
            Ok(true)
        }
        Command::Fluency { percentile, min_domain_size, io } => {
            if !(percentile > 0.0 && percentile < 100.0) {
                bail!("--percentile must lie strictly between 0 and 100");
            }
            stage(&io, FluencyParams { min_domain_size, percentile: percentile / 100.0 }, StageSpec::Fluency)
        }
        Command::Pii { policy, io } => {
            let policy = match policy {
                PiiArg::Mask => RedactPolicy::Mask,
                PiiArg::DropDoc => RedactPolicy::DropDoc,
            };
            stage(&io, PiiParams { policy }, StageSpec::Pii)
        }
        Command::Cot(CotCommand::Synth { endpoint, model, max_inflight, requests_per_second, max_segments, sources, io }) => {
            if max_inflight == 0 {
                bail!("--max-inflight must be at least 1");
            }
            let mut synthesis = CotConfig { max_segments, ..Default::default() };
            if let Some(s) = sources {
                synthesis.eligible_sources = s.into_iter().filter(|s| !s.is_empty()).collect();
            }
            let params = CotStageParams { endpoint, model, max_inflight, requests_per_second, synthesis, ..Default::default() };
            stage(&io, params, StageSpec::Cot)
        }
    }
}
