//! Pluggable text scorers shared by quality scoring and toxicity.
//!
//! External scorers speak a line protocol: the toolkit writes one JSON string
//! per line to the scorer's stdin and reads back one real number per line.

use std::io::{self, BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::Mutex;
use std::thread;
use std::time::Duration;

use crate::quality::LinearNgramModel;
use crate::record::DocumentRecord;

#[derive(Debug, thiserror::Error)]
pub enum ScorerError {
    #[error("scorer {scorer:?} timed out after {timeout_ms} ms")]
    Timeout { scorer: String, timeout_ms: u64 },
    #[error("scorer {scorer:?} broke protocol: {message}")]
    Protocol { scorer: String, message: String },
    #[error("scorer {scorer:?} i/o error: {source}")]
    Io { scorer: String, source: io::Error },
    #[error("scorer {scorer:?} exited")]
    Exited { scorer: String },
    #[error("scorer {scorer:?}: {message}")]
    Unavailable { scorer: String, message: String },
}

pub trait Scorer: Send + Sync {
    fn name(&self) -> &str;

    fn score_text(&self, text: &str) -> Result<f64, ScorerError>;

    fn score_doc(&self, doc: &DocumentRecord) -> Result<f64, ScorerError> {
        self.score_text(&doc.text)
    }
}

pub struct LinearScorer {
    name: String,
    model: LinearNgramModel,
}

impl LinearScorer {
    pub fn new(name: impl Into<String>, model: LinearNgramModel) -> Self {
        LinearScorer { name: name.into(), model }
    }

    pub fn model(&self) -> &LinearNgramModel {
        &self.model
    }
}

impl Scorer for LinearScorer {
    fn name(&self) -> &str {
        &self.name
    }

    fn score_text(&self, text: &str) -> Result<f64, ScorerError> {
        Ok(self.model.score_text(text))
    }
}

/// Wraps a closure; handy for mocks and in-process models.
pub struct FnScorer<F> {
    name: String,
    f: F,
}

impl<F: Fn(&str) -> f64 + Send + Sync> FnScorer<F> {
    pub fn new(name: impl Into<String>, f: F) -> Self {
        FnScorer { name: name.into(), f }
    }
}

impl<F: Fn(&str) -> f64 + Send + Sync> Scorer for FnScorer<F> {
    fn name(&self) -> &str {
        &self.name
    }

    fn score_text(&self, text: &str) -> Result<f64, ScorerError> {
        Ok((self.f)(text))
    }
}

/// Reads a precomputed score from a record's `meta` map, for scores shipped
/// alongside the corpus by an upstream classifier.
pub struct MetaScorer {
    name: String,
    field: String,
}

impl MetaScorer {
    pub fn new(name: impl Into<String>, field: impl Into<String>) -> Self {
        MetaScorer { name: name.into(), field: field.into() }
    }
}

impl Scorer for MetaScorer {
    fn name(&self) -> &str {
        &self.name
    }

    fn score_text(&self, _text: &str) -> Result<f64, ScorerError> {
        Err(ScorerError::Unavailable {
            scorer: self.name.clone(),
            message: format!("reads meta field {:?} and needs a full record", self.field),
        })
    }

    fn score_doc(&self, doc: &DocumentRecord) -> Result<f64, ScorerError> {
        let value = doc.meta.get(&self.field).ok_or_else(|| ScorerError::Unavailable {
            scorer: self.name.clone(),
            message: format!("doc {:?} has no meta field {:?}", doc.id, self.field),
        })?;
        value.trim().parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| ScorerError::Protocol {
            scorer: self.name.clone(),
            message: format!("doc {:?} meta field {:?} is not a finite number", doc.id, self.field),
        })
    }
}

struct ProcessInner {
    child: Child,
    stdin: ChildStdin,
    lines: Receiver<io::Result<String>>,
    broken: bool,
}

/// Long-lived child process speaking the line protocol. Calls are
/// serialized; after a timeout or protocol error the process is killed and
/// every later call fails.
pub struct ProcessScorer {
    name: String,
    timeout: Duration,
    inner: Mutex<ProcessInner>,
}

impl ProcessScorer {
    pub fn spawn(name: impl Into<String>, argv: &[String], timeout: Duration) -> Result<Self, ScorerError> {
        let name = name.into();
        let (program, args) = argv.split_first().ok_or_else(|| ScorerError::Unavailable {
            scorer: name.clone(),
            message: "empty command".into(),
        })?;
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|source| ScorerError::Io { scorer: name.clone(), source })?;
        let stdin = child.stdin.take().expect("stdin piped");
        let stdout = child.stdout.take().expect("stdout piped");
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                let stop = line.is_err();
                if tx.send(line).is_err() || stop {
                    break;
                }
            }
        });
        Ok(ProcessScorer {
            name,
            timeout,
            inner: Mutex::new(ProcessInner { child, stdin, lines: rx, broken: false }),
        })
    }

    fn fail(&self, inner: &mut ProcessInner, err: ScorerError) -> ScorerError {
        inner.broken = true;
        let _ = inner.child.kill();
        err
    }
}

impl Scorer for ProcessScorer {
    fn name(&self) -> &str {
        &self.name
    }

    fn score_text(&self, text: &str) -> Result<f64, ScorerError> {
        let mut inner = self.inner.lock().unwrap_or_else(|e| e.into_inner());
        if inner.broken {
            return Err(ScorerError::Exited { scorer: self.name.clone() });
        }
        let mut line = serde_json::to_string(text).expect("strings always serialize");
        line.push('\n');
        if let Err(source) = inner.stdin.write_all(line.as_bytes()).and_then(|_| inner.stdin.flush()) {
            return Err(self.fail(&mut inner, ScorerError::Io { scorer: self.name.clone(), source }));
        }
        let reply = match inner.lines.recv_timeout(self.timeout) {
            Ok(Ok(reply)) => reply,
            Ok(Err(source)) => return Err(self.fail(&mut inner, ScorerError::Io { scorer: self.name.clone(), source })),
            Err(RecvTimeoutError::Timeout) => {
                let timeout_ms = self.timeout.as_millis() as u64;
                return Err(self.fail(&mut inner, ScorerError::Timeout { scorer: self.name.clone(), timeout_ms }));
            }
            Err(RecvTimeoutError::Disconnected) => {
                return Err(self.fail(&mut inner, ScorerError::Exited { scorer: self.name.clone() }))
            }
        };
        match reply.trim().parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(v),
            _ => {
                let message = format!("expected a real number, got {:?}", reply);
                Err(self.fail(&mut inner, ScorerError::Protocol { scorer: self.name.clone(), message }))
            }
        }
    }
}

impl Drop for ProcessScorer {
    fn drop(&mut self) {
        let inner = self.inner.get_mut().unwrap_or_else(|e| e.into_inner());
        let _ = inner.child.kill();
        let _ = inner.child.wait();
    }
}

/// Server side of the line protocol: answers each JSON-string line on
/// `input` with one score line on `output`. Returns the number of lines
/// served.
pub fn serve_scorer<R: BufRead, W: Write>(scorer: &dyn Scorer, input: R, mut output: W) -> io::Result<u64> {
    let mut served = 0;
    for (n, line) in input.lines().enumerate() {
        let line = line?;
        let text: String = serde_json::from_str(&line).map_err(|e| {
            io::Error::new(io::ErrorKind::InvalidData, format!("line {}: expected a JSON string: {e}", n + 1))
        })?;
        let score = scorer
            .score_text(&text)
            .map_err(|e| io::Error::other(e.to_string()))?;
        writeln!(output, "{score}")?;
        output.flush()?;
        served += 1;
    }
    Ok(served)
}
