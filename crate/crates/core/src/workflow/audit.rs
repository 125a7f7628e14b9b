//! Session audit log: a JSON-lines event stream.
//!
//! The audit log is observational — it carries wall-clock timestamps and is
//! allowed to differ between byte-identical reruns. Everything deterministic
//! lives in `WorkflowState` instead.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::Mutex;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::agent::{Usage, WorkflowStep};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditEvent {
    pub session_id: String,
    pub event: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub step: Option<WorkflowStep>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub payload_hash: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub usage: Option<Usage>,
    /// Unix epoch milliseconds at emission.
    pub timestamp_ms: u64,
}

impl AuditEvent {
    pub fn new(session_id: &str, event: &str) -> Self {
        Self {
            session_id: session_id.to_string(),
            event: event.to_string(),
            step: None,
            payload_hash: None,
            usage: None,
            timestamp_ms: now_ms(),
        }
    }

    pub fn with_step(mut self, step: WorkflowStep) -> Self {
        self.step = Some(step);
        self
    }

    pub fn with_payload_hash(mut self, hash: String) -> Self {
        self.payload_hash = Some(hash);
        self
    }

    pub fn with_usage(mut self, usage: Usage) -> Self {
        self.usage = Some(usage);
        self
    }
}

fn now_ms() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis() as u64).unwrap_or(0)
}

/// Where audit events go. Implementations must tolerate concurrent records.
pub trait AuditSink: Send + Sync {
    fn record(&self, event: AuditEvent);
}

/// Discards everything.
pub struct NullSink;

impl AuditSink for NullSink {
    fn record(&self, _event: AuditEvent) {}
}

/// Collects events in memory; the cost-accounting checks read these back.
#[derive(Default)]
pub struct VecSink {
    events: Mutex<Vec<AuditEvent>>,
}

impl VecSink {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn events(&self) -> Vec<AuditEvent> {
        self.events.lock().expect("audit sink lock").clone()
    }
}

impl AuditSink for VecSink {
    fn record(&self, event: AuditEvent) {
        self.events.lock().expect("audit sink lock").push(event);
    }
}

/// Appends one JSON object per line to a file.
pub struct JsonLinesSink {
    writer: Mutex<BufWriter<File>>,
}

impl JsonLinesSink {
    pub fn create(path: &Path) -> std::io::Result<Self> {
        let file = std::fs::OpenOptions::new().create(true).append(true).open(path)?;
        Ok(Self { writer: Mutex::new(BufWriter::new(file)) })
    }
}

impl AuditSink for JsonLinesSink {
    fn record(&self, event: AuditEvent) {
        let mut writer = self.writer.lock().expect("audit sink lock");
        if let Ok(line) = serde_json::to_string(&event) {
            let _ = writeln!(writer, "{line}");
            let _ = writer.flush();
        }
    }
}
