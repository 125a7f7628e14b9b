//! The pluggable backend contract.

use serde::{Deserialize, Serialize};

use super::PromptSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Remote,
    RuleOracle,
    Replay,
}

/// Capability descriptor identifying a backend in reports and audit logs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendDescriptor {
    pub id: String,
    pub kind: BackendKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model_name: Option<String>,
}

/// Per-call usage accounting. Deterministic backends (rule oracle, replay)
/// report deterministic values so byte-identical reruns stay byte-identical;
/// wall-clock timing of deterministic calls lives in the audit log instead.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Usage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub wall_seconds: f64,
}

impl Usage {
    pub fn zero() -> Self {
        Usage::default()
    }

    pub fn total_tokens(&self) -> u64 {
        self.prompt_tokens + self.completion_tokens
    }

    pub fn add(&mut self, other: &Usage) {
        self.prompt_tokens += other.prompt_tokens;
        self.completion_tokens += other.completion_tokens;
        self.wall_seconds += other.wall_seconds;
    }
}

/// Raw structured text plus usage, as returned by a backend.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendReply {
    pub raw: String,
    pub usage: Usage,
}

#[derive(Debug, thiserror::Error)]
pub enum BackendError {
    #[error("transport failure after {attempts} attempt(s): {message}")]
    Transport { message: String, attempts: u32 },
    #[error("api error (status {status}): {message}")]
    Api { status: u16, message: String },
    #[error("cassette has no entry for prompt hash {prompt_hash}")]
    CassetteMiss { prompt_hash: String },
    #[error("malformed task payload: {0}")]
    Slice(String),
    #[error("rule oracle cannot complete this prompt: {0}")]
    Oracle(String),
    #[error("missing credentials: {0}")]
    MissingCredentials(String),
    #[error("cassette io: {0}")]
    CassetteIo(String),
}

/// A completion backend. Implementations must tolerate concurrent
/// `complete` calls; usage fields are always populated. On failure a typed
/// error propagates — a backend never fabricates a reply.
pub trait AgentBackend: Send + Sync {
    fn descriptor(&self) -> &BackendDescriptor;
    fn complete(&self, prompt: &PromptSpec) -> Result<BackendReply, BackendError>;
}

impl<T: AgentBackend + ?Sized> AgentBackend for &T {
    fn descriptor(&self) -> &BackendDescriptor {
        (**self).descriptor()
    }
    fn complete(&self, prompt: &PromptSpec) -> Result<BackendReply, BackendError> {
        (**self).complete(prompt)
    }
}

impl<T: AgentBackend + ?Sized> AgentBackend for std::sync::Arc<T> {
    fn descriptor(&self) -> &BackendDescriptor {
        (**self).descriptor()
    }
    fn complete(&self, prompt: &PromptSpec) -> Result<BackendReply, BackendError> {
        (**self).complete(prompt)
    }
}
