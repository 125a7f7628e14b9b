//! Remote chat-completion backend.
//!
//! Speaks the provider-style `/chat/completions` HTTP/JSON wire format
//! behind the backend contract. Transport failures are retried with
//! jittered exponential backoff; after exhaustion a typed error propagates —
//! a fabricated reply is never returned. A process-wide live-call counter
//! lets the offline test harness assert zero egress.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Condvar, Mutex};
use std::time::{Duration, Instant};

use rand::Rng;
use serde::Deserialize;
use serde_json::json;

use super::{
    AgentBackend, BackendDescriptor, BackendError, BackendKind, BackendReply, PromptSpec, Usage,
};

/// Environment variables the remote backend reads its credentials from.
pub const ENV_API_KEY: &str = "MAPIS_API_KEY";
pub const ENV_API_BASE: &str = "MAPIS_API_BASE";
pub const ENV_MODEL: &str = "MAPIS_MODEL";

static LIVE_CALLS: AtomicU64 = AtomicU64::new(0);

/// Number of live HTTP attempts made by any remote backend in this process.
/// The offline service test asserts this stays zero under the rule oracle.
pub fn live_call_count() -> u64 {
    LIVE_CALLS.load(Ordering::SeqCst)
}

#[derive(Debug, Clone)]
pub struct RemoteConfig {
    pub api_base: String,
    pub api_key: String,
    pub model: String,
    /// Retries on transport errors and retryable statuses (429/5xx).
    pub max_retries: u32,
    pub backoff_ms: u64,
    pub timeout_secs: u64,
    /// Concurrent in-flight request cap.
    pub max_in_flight: usize,
}

impl RemoteConfig {
    pub fn from_env() -> Result<Self, BackendError> {
        let var = |name: &str| {
            std::env::var(name).map_err(|_| BackendError::MissingCredentials(name.to_string()))
        };
        Ok(Self {
            api_base: var(ENV_API_BASE)?,
            api_key: var(ENV_API_KEY)?,
            model: var(ENV_MODEL)?,
            max_retries: 2,
            backoff_ms: 250,
            timeout_secs: 120,
            max_in_flight: 4,
        })
    }
}

/// Counting semaphore over std primitives.
struct Semaphore {
    permits: Mutex<usize>,
    available: Condvar,
}

impl Semaphore {
    fn new(permits: usize) -> Self {
        Self { permits: Mutex::new(permits.max(1)), available: Condvar::new() }
    }

    fn acquire(&self) -> SemaphoreGuard<'_> {
        let mut permits = self.permits.lock().expect("semaphore lock");
        while *permits == 0 {
            permits = self.available.wait(permits).expect("semaphore wait");
        }
        *permits -= 1;
        SemaphoreGuard { semaphore: self }
    }
}

struct SemaphoreGuard<'a> {
    semaphore: &'a Semaphore,
}

impl Drop for SemaphoreGuard<'_> {
    fn drop(&mut self) {
        let mut permits = self.semaphore.permits.lock().expect("semaphore lock");
        *permits += 1;
        self.semaphore.available.notify_one();
    }
}

pub struct RemoteBackend {
    cfg: RemoteConfig,
    client: reqwest::blocking::Client,
    semaphore: Semaphore,
    descriptor: BackendDescriptor,
}

impl RemoteBackend {
    pub fn new(cfg: RemoteConfig) -> Result<Self, BackendError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(cfg.timeout_secs))
            .build()
            .map_err(|e| BackendError::Transport { message: e.to_string(), attempts: 0 })?;
        let descriptor = BackendDescriptor {
            id: format!("remote:{}", cfg.model),
            kind: BackendKind::Remote,
            model_name: Some(cfg.model.clone()),
        };
        Ok(Self { semaphore: Semaphore::new(cfg.max_in_flight), cfg, client, descriptor })
    }

    pub fn from_env() -> Result<Self, BackendError> {
        Self::new(RemoteConfig::from_env()?)
    }

    fn endpoint(&self) -> String {
        format!("{}/chat/completions", self.cfg.api_base.trim_end_matches('/'))
    }

    fn send_once(&self, prompt: &PromptSpec) -> Result<BackendReply, RequestFailure> {
        LIVE_CALLS.fetch_add(1, Ordering::SeqCst);
        let started = Instant::now();
        let body = json!({
            "model": self.cfg.model,
            "temperature": 0,
            "top_p": 1,
            "messages": [
                {"role": "system", "content": prompt.role_preamble},
                {"role": "user", "content": prompt.render()},
            ],
        });
        let response = self
            .client
            .post(self.endpoint())
            .bearer_auth(&self.cfg.api_key)
            .json(&body)
            .send()
            .map_err(|e| RequestFailure::Transport(e.to_string()))?;

        let status = response.status();
        let text = response.text().map_err(|e| RequestFailure::Transport(e.to_string()))?;
        if !status.is_success() {
            let failure = RequestFailure::Api { status: status.as_u16(), message: text };
            return Err(failure);
        }

        let parsed: ChatCompletion =
            serde_json::from_str(&text).map_err(|e| RequestFailure::Transport(format!(
                "unparseable completion body: {e}"
            )))?;
        let content = parsed
            .choices
            .into_iter()
            .next()
            .map(|c| c.message.content)
            .ok_or_else(|| RequestFailure::Transport("completion has no choices".to_string()))?;
        let usage = Usage {
            prompt_tokens: parsed.usage.as_ref().map(|u| u.prompt_tokens).unwrap_or(0),
            completion_tokens: parsed.usage.as_ref().map(|u| u.completion_tokens).unwrap_or(0),
            wall_seconds: started.elapsed().as_secs_f64(),
        };
        Ok(BackendReply { raw: content, usage })
    }
}

enum RequestFailure {
    Transport(String),
    Api { status: u16, message: String },
}

impl RequestFailure {
    fn retryable(&self) -> bool {
        match self {
            RequestFailure::Transport(_) => true,
            RequestFailure::Api { status, .. } => *status == 429 || *status >= 500,
        }
    }
}

impl AgentBackend for RemoteBackend {
    fn descriptor(&self) -> &BackendDescriptor {
        &self.descriptor
    }

    fn complete(&self, prompt: &PromptSpec) -> Result<BackendReply, BackendError> {
        let _permit = self.semaphore.acquire();
        let mut attempts = 0u32;
        loop {
            attempts += 1;
            match self.send_once(prompt) {
                Ok(reply) => return Ok(reply),
                Err(failure) => {
                    if failure.retryable() && attempts <= self.cfg.max_retries {
                        let jitter: u64 = rand::rng().random_range(0..100);
                        let backoff = self.cfg.backoff_ms * 2u64.pow(attempts - 1) + jitter;
                        std::thread::sleep(Duration::from_millis(backoff));
                        continue;
                    }
                    return Err(match failure {
                        RequestFailure::Transport(message) => {
                            BackendError::Transport { message, attempts }
                        }
                        RequestFailure::Api { status, message } => {
                            BackendError::Api { status, message }
                        }
                    });
                }
            }
        }
    }
}

#[derive(Deserialize)]
struct ChatCompletion {
    choices: Vec<ChatChoice>,
    usage: Option<ChatUsage>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatMessage,
}

#[derive(Deserialize)]
struct ChatMessage {
    content: String,
}

#[derive(Deserialize)]
struct ChatUsage {
    #[serde(default)]
    prompt_tokens: u64,
    #[serde(default)]
    completion_tokens: u64,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn missing_credentials_are_typed() {
        // Guard against ambient configuration.
        if std::env::var(ENV_API_BASE).is_ok() {
            return;
        }
        assert!(matches!(
            RemoteConfig::from_env(),
            Err(BackendError::MissingCredentials(_))
        ));
    }

    #[test]
    fn semaphore_caps_and_releases() {
        let sem = Semaphore::new(2);
        let a = sem.acquire();
        let _b = sem.acquire();
        drop(a);
        let _c = sem.acquire(); // would deadlock if release failed
    }
}
