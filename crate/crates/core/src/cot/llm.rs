//! Chat-completions client: retries with exponential backoff and jitter,
//! a shared token-bucket rate limit, and a bound on in-flight requests.

use std::sync::{Condvar, Mutex};
use std::time::{Duration, Instant};

use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;

/// Environment variable holding the bearer token.
pub const API_KEY_ENV: &str = "CORPUSFORGE_API_KEY";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub content: String,
    pub role: String,
}

impl Message {
    pub fn system(content: impl Into<String>) -> Self {
        Message { content: content.into(), role: "system".into() }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Message { content: content.into(), role: "user".into() }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Message { content: content.into(), role: "assistant".into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmRequest {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_tokens: Option<u32>,
    pub messages: Vec<Message>,
    pub model: String,
    pub temperature: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Usage {
    #[serde(default)]
    pub completion_tokens: u64,
    #[serde(default)]
    pub prompt_tokens: u64,
    #[serde(default)]
    pub total_tokens: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LlmResponse {
    /// HTTP attempts spent on this response, including the successful one.
    pub attempts: u32,
    pub content: String,
    pub finish_reason: String,
    pub usage: Usage,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LlmError {
    #[error("request has no messages")]
    EmptyRequest,
    #[error("authentication failed (HTTP {status})")]
    Auth { status: u16 },
    #[error("endpoint rejected the request (HTTP {status}): {body}")]
    Rejected { status: u16, body: String },
    #[error("gave up after {attempts} attempts; last error: {last}")]
    Exhausted { attempts: u32, last: String },
    #[error("client setup failed: {0}")]
    Setup(String),
}

pub trait ChatModel: Send + Sync {
    fn model_name(&self) -> &str;

    fn complete(&self, request: &LlmRequest) -> Result<LlmResponse, LlmError>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct EndpointConfig {
    pub url: String,
    pub model: String,
    pub api_key: Option<String>,
    pub timeout: Duration,
    pub max_attempts: u32,
    pub base_backoff: Duration,
    pub max_backoff: Duration,
    pub max_inflight: usize,
    /// Sustained requests per second; `None` disables rate limiting.
    pub requests_per_second: Option<f64>,
    pub burst: u32,
}

impl EndpointConfig {
    pub fn new(url: impl Into<String>, model: impl Into<String>) -> Self {
        EndpointConfig {
            url: url.into(),
            model: model.into(),
            api_key: std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty()),
            timeout: Duration::from_secs(120),
            max_attempts: 5,
            base_backoff: Duration::from_millis(500),
            max_backoff: Duration::from_secs(30),
            max_inflight: 8,
            requests_per_second: None,
            burst: 1,
        }
    }
}

struct TokenBucket {
    rate: f64,
    capacity: f64,
    state: Mutex<(f64, Instant)>,
}

impl TokenBucket {
    fn new(rate: f64, burst: u32) -> Self {
        let capacity = burst.max(1) as f64;
        TokenBucket { rate, capacity, state: Mutex::new((capacity, Instant::now())) }
    }

    fn acquire(&self) {
        loop {
            let wait = {
                let mut state = self.state.lock().unwrap_or_else(|e| e.into_inner());
                let now = Instant::now();
                let refill = now.duration_since(state.1).as_secs_f64() * self.rate;
                state.0 = (state.0 + refill).min(self.capacity);
                state.1 = now;
                if state.0 >= 1.0 {
                    state.0 -= 1.0;
                    return;
                }
                Duration::from_secs_f64((1.0 - state.0) / self.rate)
            };
            std::thread::sleep(wait);
        }
    }
}

struct Semaphore {
    free: Mutex<usize>,
    cv: Condvar,
}

struct Permit<'a>(&'a Semaphore);

impl Semaphore {
    fn new(n: usize) -> Self {
        Semaphore { free: Mutex::new(n.max(1)), cv: Condvar::new() }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut free = self.free.lock().unwrap_or_else(|e| e.into_inner());
        while *free == 0 {
            free = self.cv.wait(free).unwrap_or_else(|e| e.into_inner());
        }
        *free -= 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().unwrap_or_else(|e| e.into_inner()) += 1;
        self.0.cv.notify_one();
    }
}

enum Attempt {
    Done(LlmResponse),
    Retry { error: String, retry_after: Option<Duration> },
    Fatal(LlmError),
}

pub struct HttpChatClient {
    config: EndpointConfig,
    http: reqwest::blocking::Client,
    bucket: Option<TokenBucket>,
    inflight: Semaphore,
}

impl HttpChatClient {
    pub fn new(config: EndpointConfig) -> Result<Self, LlmError> {
        let http = reqwest::blocking::Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| LlmError::Setup(e.to_string()))?;
        let bucket = config.requests_per_second.filter(|r| *r > 0.0).map(|r| TokenBucket::new(r, config.burst));
        let inflight = Semaphore::new(config.max_inflight);
        Ok(HttpChatClient { config, http, bucket, inflight })
    }

    pub fn config(&self) -> &EndpointConfig {
        &self.config
    }

    fn backoff(&self, attempt: u32, retry_after: Option<Duration>) -> Duration {
        let exp = self.config.base_backoff.saturating_mul(1u32 << (attempt - 1).min(16));
        let capped = exp.min(self.config.max_backoff);
        // Equal jitter: half of the delay fixed, half random.
        let jittered = capped / 2 + capped.mul_f64(rand::thread_rng().gen::<f64>() / 2.0);
        match retry_after {
            Some(ra) => jittered.max(ra.min(self.config.max_backoff)),
            None => jittered,
        }
    }

    fn attempt(&self, request: &LlmRequest, attempts: u32) -> Attempt {
        if let Some(bucket) = &self.bucket {
            bucket.acquire();
        }
        let _permit = self.inflight.acquire();
        let body = serde_json::to_vec(request).expect("requests always serialize");
        let mut builder = self
            .http
            .post(&self.config.url)
            .header(reqwest::header::CONTENT_TYPE, "application/json")
            .body(body);
        if let Some(key) = &self.config.api_key {
            builder = builder.bearer_auth(key);
        }
        let response = match builder.send() {
            Ok(r) => r,
            Err(e) => return Attempt::Retry { error: e.to_string(), retry_after: None },
        };
        let status = response.status().as_u16();
        let retry_after = response
            .headers()
            .get(reqwest::header::RETRY_AFTER)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.trim().parse::<u64>().ok())
            .map(Duration::from_secs);
        let body = match response.text() {
            Ok(b) => b,
            Err(e) => return Attempt::Retry { error: e.to_string(), retry_after: None },
        };
        match status {
            200..=299 => match parse_completion(&body) {
                Ok((content, finish_reason, usage)) => {
                    Attempt::Done(LlmResponse { attempts, content, finish_reason, usage })
                }
                Err(e) => Attempt::Retry { error: format!("non-conforming body: {e}"), retry_after: None },
            },
            401 | 403 => Attempt::Fatal(LlmError::Auth { status }),
            429 | 500..=599 => Attempt::Retry { error: format!("HTTP {status}"), retry_after },
            _ => Attempt::Fatal(LlmError::Rejected { status, body: truncate(&body, 500) }),
        }
    }
}

impl ChatModel for HttpChatClient {
    fn model_name(&self) -> &str {
        &self.config.model
    }

    fn complete(&self, request: &LlmRequest) -> Result<LlmResponse, LlmError> {
        if request.messages.is_empty() {
            return Err(LlmError::EmptyRequest);
        }
        let max = self.config.max_attempts.max(1);
        let mut last = String::new();
        for attempt in 1..=max {
            match self.attempt(request, attempt) {
                Attempt::Done(r) => return Ok(r),
                Attempt::Fatal(e) => return Err(e),
                Attempt::Retry { error, retry_after } => {
                    last = error;
                    if attempt < max {
                        std::thread::sleep(self.backoff(attempt, retry_after));
                    }
                }
            }
        }
        Err(LlmError::Exhausted { attempts: max, last })
    }
}

fn truncate(s: &str, max: usize) -> String {
    if s.len() <= max {
        return s.to_string();
    }
    let cut = crate::text::floor_char_boundary(s, max);
    format!("{}...", &s[..cut])
}

/// Pulls `(content, finish_reason, usage)` out of a chat-completions body.
fn parse_completion(body: &str) -> Result<(String, String, Usage), String> {
    let v: Value = serde_json::from_str(body).map_err(|e| e.to_string())?;
    let choice = v
        .get("choices")
        .and_then(Value::as_array)
        .and_then(|c| c.first())
        .ok_or("missing choices[0]")?;
    let finish_reason = choice.get("finish_reason").and_then(Value::as_str).unwrap_or("stop").to_string();
    let content = choice.get("message").and_then(|m| m.get("content")).and_then(Value::as_str);
    let content = match content {
        Some(c) => c.to_string(),
        None => return Err("missing choices[0].message.content".into()),
    };
    let usage = match v.get("usage") {
        Some(u) => serde_json::from_value(u.clone()).map_err(|e| format!("bad usage: {e}"))?,
        None => Usage::default(),
    };
    Ok((content, finish_reason, usage))
}
