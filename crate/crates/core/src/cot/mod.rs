//! Staged chain-of-thought synthesis: segment a document, summarize each
//! segment, consolidate the summaries into a chain of thought, then derive
//! the core question from that chain.

mod llm;
mod segment;

pub use llm::{
    ChatModel, EndpointConfig, HttpChatClient, LlmError, LlmRequest, LlmResponse, Message, Usage, API_KEY_ENV,
};
pub use segment::{
    anchors_to_segments, locate, parse_anchors, segment_text, validate_segments, Anchor, Segment, FUZZY_MIN_OVERLAP,
};

use std::collections::BTreeSet;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::record::DocumentRecord;
use crate::report::StageReport;
use crate::text::token_spans;

pub const PROMPT_VERSION: &str = "v1";

pub mod prompts {
    pub const SYSTEM: &str = include_str!("../../prompts/v1/system.txt");
    pub const SEGMENT: &str = include_str!("../../prompts/v1/segment.txt");
    pub const SEGMENT_RETRY: &str = include_str!("../../prompts/v1/segment_retry.txt");
    pub const SUMMARIZE: &str = include_str!("../../prompts/v1/summarize.txt");
    pub const CONSOLIDATE: &str = include_str!("../../prompts/v1/consolidate.txt");
    pub const QUESTION: &str = include_str!("../../prompts/v1/question.txt");

    /// Substitutes `{{name}}` placeholders in one pass, so values that
    /// themselves contain braces are left alone.
    pub fn render(template: &str, vars: &[(&str, &str)]) -> String {
        let mut out = String::with_capacity(template.len() + vars.iter().map(|(_, v)| v.len()).sum::<usize>());
        let mut rest = template;
        while let Some(open) = rest.find("{{") {
            out.push_str(&rest[..open]);
            let after = &rest[open + 2..];
            match after.find("}}") {
                Some(close) => {
                    let key = &after[..close];
                    match vars.iter().find(|(k, _)| *k == key) {
                        Some((_, v)) => out.push_str(v),
                        None => out.push_str(&rest[open..open + 2 + close + 2]),
                    }
                    rest = &after[close + 2..];
                }
                None => {
                    out.push_str(&rest[open..]);
                    rest = "";
                }
            }
        }
        out.push_str(rest);
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CotConfig {
    /// Only docs whose `source` is listed are synthesized; empty means all.
    pub eligible_sources: BTreeSet<String>,
    pub max_output_tokens: u32,
    pub max_segments: usize,
    pub max_summary_tokens: u32,
    pub min_doc_chars: usize,
    pub temperature: f64,
}

impl Default for CotConfig {
    fn default() -> Self {
        CotConfig {
            eligible_sources: ["web", "code", "math", "papers", "encyclopedia"].iter().map(|s| s.to_string()).collect(),
            max_output_tokens: 2048,
            max_segments: 32,
            max_summary_tokens: 256,
            min_doc_chars: 400,
            temperature: 0.0,
        }
    }
}

impl CotConfig {
    pub fn is_eligible(&self, doc: &DocumentRecord) -> bool {
        self.eligible_sources.is_empty() || self.eligible_sources.contains(&doc.source)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CotRecord {
    pub chain_of_thought: String,
    pub core_question: String,
    pub model: String,
    pub original_doc_id: String,
    pub original_text: String,
    pub prompt_version: String,
    pub segments: Vec<Segment>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CotReject {
    pub cause: String,
    pub doc_id: String,
    pub stage: String,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CotError {
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("model call failed: {0}")]
    Llm(#[from] LlmError),
    #[error("segmentation failed twice; first answer {first:?} ({first_violation}); second answer {second:?} ({second_violation})")]
    Segmentation { first: String, first_violation: String, second: String, second_violation: String },
    #[error("model returned an empty answer twice")]
    EmptyOutput,
}

fn request(model: &dyn ChatModel, config: &CotConfig, messages: Vec<Message>, max_tokens: u32) -> LlmRequest {
    LlmRequest { max_tokens: Some(max_tokens), messages, model: model.model_name().to_string(), temperature: config.temperature }
}

/// One call, repeated once if the trimmed answer is empty.
fn complete_non_empty(model: &dyn ChatModel, req: &LlmRequest) -> Result<String, CotError> {
    for _ in 0..2 {
        let out = model.complete(req)?;
        let text = out.content.trim();
        if !text.is_empty() {
            return Ok(text.to_string());
        }
    }
    Err(CotError::EmptyOutput)
}

pub fn segment_document(doc: &DocumentRecord, model: &dyn ChatModel, config: &CotConfig) -> Result<Vec<Segment>, CotError> {
    let n = doc.text.chars().count();
    if n == 0 {
        return Err(CotError::Precondition(format!("doc {:?} is empty", doc.id)));
    }
    if n < config.min_doc_chars {
        return Ok(vec![Segment::new(0, n)]);
    }
    let max_segments = config.max_segments.max(1).to_string();
    let prompt = prompts::render(prompts::SEGMENT, &[("max_segments", &max_segments), ("document", &doc.text)]);
    let mut messages = vec![Message::system(prompts::SYSTEM.trim()), Message::user(prompt)];

    let attempt = |messages: &[Message]| -> Result<(String, Result<Vec<Segment>, String>), CotError> {
        let out = model.complete(&request(model, config, messages.to_vec(), config.max_output_tokens))?;
        let parsed = parse_anchors(&out.content)
            .and_then(|a| anchors_to_segments(&doc.text, &a, config.max_segments.max(1)))
            .and_then(|s| validate_segments(&s, n).map(|_| s));
        Ok((out.content, parsed))
    };

    let (first, first_result) = attempt(&messages)?;
    let first_violation = match first_result {
        Ok(segments) => return Ok(segments),
        Err(v) => v,
    };
    messages.push(Message::assistant(first.clone()));
    messages.push(Message::user(prompts::render(prompts::SEGMENT_RETRY, &[("violation", &first_violation)])));
    let (second, second_result) = attempt(&messages)?;
    second_result.map_err(|second_violation| CotError::Segmentation { first, first_violation, second, second_violation })
}

/// Keeps at most `max_tokens` tokens, cutting right after the last kept one.
fn cap_tokens(text: &str, max_tokens: u32) -> String {
    match token_spans(text).nth(max_tokens as usize) {
        Some(_) => {
            let end = token_spans(text).nth(max_tokens as usize - 1).map_or(0, |s| s.end);
            text[..end].to_string()
        }
        None => text.to_string(),
    }
}

pub fn summarize_segment(
    doc: &DocumentRecord,
    segment: &Segment,
    model: &dyn ChatModel,
    config: &CotConfig,
) -> Result<String, CotError> {
    if segment.start >= segment.end || segment.end > doc.text.chars().count() {
        let msg = format!("segment {}..{} is not inside doc {:?}", segment.start, segment.end, doc.id);
        return Err(CotError::Precondition(msg));
    }
    let prompt = prompts::render(prompts::SUMMARIZE, &[("segment", segment_text(&doc.text, segment))]);
    let req = request(model, config, vec![Message::system(prompts::SYSTEM.trim()), Message::user(prompt)], config.max_summary_tokens);
    let summary = complete_non_empty(model, &req)?;
    Ok(cap_tokens(&summary, config.max_summary_tokens.max(1)))
}

pub fn consolidate_cot(summaries: &[String], model: &dyn ChatModel, config: &CotConfig) -> Result<String, CotError> {
    if summaries.is_empty() {
        return Err(CotError::Precondition("no summaries to consolidate".into()));
    }
    let numbered: Vec<String> = summaries.iter().enumerate().map(|(i, s)| format!("{}. {}", i + 1, s)).collect();
    let prompt = prompts::render(prompts::CONSOLIDATE, &[("summaries", &numbered.join("\n\n"))]);
    let req = request(model, config, vec![Message::system(prompts::SYSTEM.trim()), Message::user(prompt)], config.max_output_tokens);
    complete_non_empty(model, &req)
}

pub fn derive_core_question(chain_of_thought: &str, model: &dyn ChatModel, config: &CotConfig) -> Result<String, CotError> {
    if chain_of_thought.trim().is_empty() {
        return Err(CotError::Precondition("chain of thought is empty".into()));
    }
    let prompt = prompts::render(prompts::QUESTION, &[("chain_of_thought", chain_of_thought)]);
    let req = request(model, config, vec![Message::system(prompts::SYSTEM.trim()), Message::user(prompt)], config.max_output_tokens);
    complete_non_empty(model, &req)
}

/// Runs all four stages for one document. Any stage error becomes a reject
/// naming the stage; no partial record is produced.
pub fn synthesize(doc: &DocumentRecord, model: &dyn ChatModel, config: &CotConfig) -> Result<CotRecord, CotReject> {
    let reject = |stage: &str, e: CotError| CotReject { cause: e.to_string(), doc_id: doc.id.clone(), stage: stage.to_string() };
    let mut segments = segment_document(doc, model, config).map_err(|e| reject("segment", e))?;
    for seg in segments.iter_mut() {
        seg.summary = Some(summarize_segment(doc, seg, model, config).map_err(|e| reject("summarize", e))?);
    }
    let summaries: Vec<String> = segments.iter().filter_map(|s| s.summary.clone()).collect();
    let chain_of_thought = consolidate_cot(&summaries, model, config).map_err(|e| reject("consolidate", e))?;
    let core_question = derive_core_question(&chain_of_thought, model, config).map_err(|e| reject("question", e))?;
    Ok(CotRecord {
        chain_of_thought,
        core_question,
        model: model.model_name().to_string(),
        original_doc_id: doc.id.clone(),
        original_text: doc.text.clone(),
        prompt_version: PROMPT_VERSION.to_string(),
        segments,
    })
}

#[derive(Debug, Clone)]
pub struct CotBatchOutcome {
    /// In input order.
    pub records: Vec<CotRecord>,
    /// In input order.
    pub rejects: Vec<CotReject>,
    pub ineligible: u64,
    pub report: StageReport,
}

/// Synthesizes every eligible doc with up to `max_inflight` documents in
/// flight. Output order follows input order regardless of completion order.
pub fn synthesize_batch(
    docs: &[DocumentRecord],
    model: &dyn ChatModel,
    config: &CotConfig,
    max_inflight: usize,
) -> CotBatchOutcome {
    let eligible: Vec<usize> = (0..docs.len()).filter(|&i| config.is_eligible(&docs[i])).collect();
    let results: Mutex<Vec<Option<Result<CotRecord, CotReject>>>> = Mutex::new(vec![None; eligible.len()]);
    let next = AtomicUsize::new(0);
    let workers = max_inflight.max(1).min(eligible.len().max(1));
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let k = next.fetch_add(1, Ordering::Relaxed);
                if k >= eligible.len() {
                    break;
                }
                let result = synthesize(&docs[eligible[k]], model, config);
                results.lock().unwrap_or_else(|e| e.into_inner())[k] = Some(result);
            });
        }
    });
    let mut records = Vec::new();
    let mut rejects = Vec::new();
    for r in results.into_inner().unwrap_or_else(|e| e.into_inner()).into_iter().flatten() {
        match r {
            Ok(rec) => records.push(rec),
            Err(rej) => rejects.push(rej),
        }
    }
    let ineligible = (docs.len() - eligible.len()) as u64;
    let mut report = StageReport::new("cot")
        .param("model", model.model_name())
        .param("prompt_version", PROMPT_VERSION)
        .param("count.ineligible", ineligible)
        .param("count.rejects", rejects.len());
    report.docs_in = docs.len() as u64;
    report.docs_out = records.len() as u64;
    report.docs_dropped = rejects.len() as u64 + ineligible;
    let mut fp = crate::io::JsonlWriter::new(std::io::sink());
    for r in &records {
        fp.write(r).expect("sink never fails");
    }
    report.fingerprint = crate::io::format_fingerprint(fp.fingerprint());
    CotBatchOutcome { records, rejects, ineligible, report }
}
