//! Per-stage reports and the run manifest.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub const MANIFEST_SCHEMA_VERSION: u32 = 1;
pub const TOOLKIT_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageReport {
    pub bytes_removed: u64,
    pub docs_dropped: u64,
    pub docs_in: u64,
    pub docs_out: u64,
    /// xxh3-64 of the canonical JSON-Lines serialization of the stage's
    /// output, as 16 hex digits.
    pub fingerprint: String,
    pub parameters: BTreeMap<String, String>,
    pub stage_name: String,
}

impl StageReport {
    pub fn new(stage_name: impl Into<String>) -> Self {
        StageReport {
            bytes_removed: 0,
            docs_dropped: 0,
            docs_in: 0,
            docs_out: 0,
            fingerprint: crate::io::format_fingerprint(0),
            parameters: BTreeMap::new(),
            stage_name: stage_name.into(),
        }
    }

    pub fn param(mut self, key: impl Into<String>, value: impl ToString) -> Self {
        self.parameters.insert(key.into(), value.to_string());
        self
    }

    pub fn is_conserved(&self) -> bool {
        self.docs_in == self.docs_out + self.docs_dropped
    }

    /// Adds the counts of another shard's report for the same stage.
    pub fn absorb_counts(&mut self, other: &StageReport) {
        self.docs_in += other.docs_in;
        self.docs_out += other.docs_out;
        self.docs_dropped += other.docs_dropped;
        self.bytes_removed += other.bytes_removed;
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageFailure {
    pub error: String,
    pub stage: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config: serde_json::Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<StageFailure>,
    pub input_records: u64,
    pub output_fingerprint: String,
    pub schema_version: u32,
    pub stages: Vec<StageReport>,
    pub toolkit_version: String,
    /// Omitted in deterministic mode so two identical runs produce
    /// byte-identical manifests.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_clock_ms: Option<u64>,
}

impl RunManifest {
    pub fn succeeded(&self) -> bool {
        self.failure.is_none()
    }

    /// docs_in of each stage equals docs_out of the previous one.
    pub fn flow_conserved(&self) -> bool {
        let mut expected = self.input_records;
        for stage in &self.stages {
            if stage.docs_in != expected || !stage.is_conserved() {
                return false;
            }
            expected = stage.docs_out;
        }
        true
    }
}
