//! Pluggable text-completion backends.

mod http;
mod mock;
mod replay;

use std::time::Duration;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use http::{ChatCompletionsBackend, API_KEY_ENV, API_KEY_FALLBACK_ENV};
pub use mock::{direction_subject, MockScene, RuleBasedMock, CHEF_PROMPT};
pub use replay::{read_replay_file, write_replay_file, RecordingBackend, ReplayBackend, ReplayRecord};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodingParams {
    pub temperature: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_tokens: Option<u32>,
}

impl Default for DecodingParams {
    fn default() -> Self {
        Self {
            temperature: 0.0,
            max_tokens: None,
        }
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum BackendError {
    #[error("transport: {0}")]
    Transport(String),
    #[error("HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("malformed reply: {0}")]
    Protocol(String),
    #[error("no recorded response for prompt ({0} bytes)")]
    ReplayMiss(usize),
    #[error("{0}")]
    Config(String),
}

impl BackendError {
    /// Whether the same request might succeed if sent again.
    pub fn is_retryable(&self) -> bool {
        match self {
            Self::Transport(_) => true,
            Self::Status { status, .. } => *status == 429 || *status >= 500,
            _ => false,
        }
    }
}

/// A text-completion model. Implementations that cannot serve overlapping
/// requests report `supports_concurrency() == false`.
#[async_trait]
pub trait LlmBackend: Send + Sync {
    fn model_id(&self) -> String;

    fn supports_concurrency(&self) -> bool {
        true
    }

    async fn complete(&self, prompt: &str, params: &DecodingParams) -> Result<String, BackendError>;
}

#[async_trait]
impl<B: LlmBackend + ?Sized> LlmBackend for std::sync::Arc<B> {
    fn model_id(&self) -> String {
        (**self).model_id()
    }

    fn supports_concurrency(&self) -> bool {
        (**self).supports_concurrency()
    }

    async fn complete(&self, prompt: &str, params: &DecodingParams) -> Result<String, BackendError> {
        (**self).complete(prompt, params).await
    }
}

/// Calls the backend, retrying retryable failures up to `retries` extra
/// times with a short linear backoff.
pub async fn complete_with_retries(
    backend: &dyn LlmBackend,
    prompt: &str,
    params: &DecodingParams,
    retries: u32,
    backoff: Duration,
) -> Result<String, BackendError> {
    let mut attempt = 0;
    loop {
        match backend.complete(prompt, params).await {
            Ok(text) => return Ok(text),
            Err(e) if e.is_retryable() && attempt < retries => {
                attempt += 1;
                tracing::debug!(attempt, error = %e, "retrying backend call");
                tokio::time::sleep(backoff * attempt).await;
            }
            Err(e) => return Err(e),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicU32, Ordering};

    struct Flaky {
        failures: u32,
        calls: AtomicU32,
    }

    #[async_trait]
    impl LlmBackend for Flaky {
        fn model_id(&self) -> String {
            "flaky".into()
        }

        async fn complete(&self, _prompt: &str, _params: &DecodingParams) -> Result<String, BackendError> {
            let n = self.calls.fetch_add(1, Ordering::SeqCst);
            if n < self.failures {
                Err(BackendError::Transport("reset".into()))
            } else {
                Ok("ok".into())
            }
        }
    }

    #[tokio::test]
    async fn retries_are_bounded() {
        let b = Flaky {
            failures: 2,
            calls: AtomicU32::new(0),
        };
        let out = complete_with_retries(&b, "p", &DecodingParams::default(), 2, Duration::ZERO).await;
        assert_eq!(out.unwrap(), "ok");
        assert_eq!(b.calls.load(Ordering::SeqCst), 3);

        let b = Flaky {
            failures: 5,
            calls: AtomicU32::new(0),
        };
        let out = complete_with_retries(&b, "p", &DecodingParams::default(), 2, Duration::ZERO).await;
        assert!(matches!(out, Err(BackendError::Transport(_))));
        assert_eq!(b.calls.load(Ordering::SeqCst), 3);
    }

    #[test]
    fn retryable_classification() {
        assert!(BackendError::Status { status: 503, body: String::new() }.is_retryable());
        assert!(BackendError::Status { status: 429, body: String::new() }.is_retryable());
        assert!(!BackendError::Status { status: 401, body: String::new() }.is_retryable());
        assert!(!BackendError::ReplayMiss(3).is_retryable());
    }
}
