//! Pluggable chat/vision-model client: prompt templating, multimodal
//! message assembly, retry and rate-limit policy, and a deterministic
//! mock for offline runs.
//!
//! All calls are blocking from the caller's view; parallelism comes from
//! the pipeline's worker pool. A [`Client`] (backend + rate limiter +
//! clock) is shareable across workers.

mod http;
mod mock;
mod ratelimit;
mod retry;
mod template;

pub use http::HttpBackend;
pub use mock::{demo_responder, MockBackend, MockReply};
pub use ratelimit::{Clock, RateLimiter, SystemClock, TestClock};
pub use retry::RetryPolicy;
pub use template::{build_request, render_prompt, PromptAssets, Rendered, TEMPLATE_MANIFEST};

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::corpus::ImageBlob;

#[derive(Debug, thiserror::Error)]
pub enum BackendError {
    #[error("unknown template {0}")]
    UnknownTemplate(String),
    #[error("template {template}: no binding for placeholder {placeholder}")]
    MissingBinding {
        template: String,
        placeholder: String,
    },
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("backend returned HTTP {status}: {body}")]
    Http { status: u16, body: String },
    #[error("authentication rejected: {0}")]
    Auth(String),
    #[error("bad request: {0}")]
    BadRequest(String),
    #[error("backend refused to answer (empty response)")]
    Refusal,
    #[error("retries exhausted after {attempts} attempts: {last}")]
    Exhausted {
        attempts: u32,
        #[source]
        last: Box<BackendError>,
    },
}

impl BackendError {
    /// Default retry classifier: transient transport and server-side
    /// failures retry, auth and malformed requests do not.
    pub fn is_retryable(&self) -> bool {
        match self {
            BackendError::Transport(_) => true,
            BackendError::Http { status, .. } => *status == 408 || *status == 429 || *status >= 500,
            _ => false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    System,
    User,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Part {
    Text(String),
    Image(ImageBlob),
}

/// One chat message: a role plus ordered text/image parts.
#[derive(Debug, Clone, PartialEq)]
pub struct Message {
    pub role: Role,
    pub parts: Vec<Part>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecodeParams {
    pub temperature: f64,
    pub max_output_tokens: u32,
}

impl Default for DecodeParams {
    fn default() -> Self {
        DecodeParams {
            temperature: 0.2,
            max_output_tokens: 1024,
        }
    }
}

/// A fully assembled request. `request_key` is a pure digest of
/// (template_id, bindings, attachment hashes): equal content, equal key.
#[derive(Debug, Clone)]
pub struct ChatRequest {
    pub template_id: String,
    pub bindings: BTreeMap<String, String>,
    pub messages: Vec<Message>,
    pub decode: DecodeParams,
    pub request_key: String,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TokenUsage {
    pub input_tokens: u64,
    pub output_tokens: u64,
}

#[derive(Debug, Clone)]
pub struct ChatResponse {
    pub text: String,
    pub usage: Option<TokenUsage>,
    pub backend_id: String,
}

/// A model endpoint that can answer one request. Implementations are a
/// single attempt; retry and rate limiting live in [`Client`].
pub trait ChatBackend: Send + Sync {
    fn complete_once(&self, request: &ChatRequest) -> Result<ChatResponse, BackendError>;
    fn id(&self) -> &str;
}

/// Shareable client wrapping a backend with retry and rate-limit policy.
#[derive(Clone)]
pub struct Client {
    backend: Arc<dyn ChatBackend>,
    limiter: Option<Arc<RateLimiter>>,
    clock: Arc<dyn Clock>,
}

impl Client {
    pub fn new(backend: Arc<dyn ChatBackend>) -> Client {
        Client {
            backend,
            limiter: None,
            clock: Arc::new(SystemClock),
        }
    }

    pub fn with_rate_limiter(mut self, limiter: Arc<RateLimiter>) -> Client {
        self.limiter = Some(limiter);
        self
    }

    pub fn with_clock(mut self, clock: Arc<dyn Clock>) -> Client {
        self.clock = clock;
        self
    }

    pub fn backend_id(&self) -> &str {
        self.backend.id()
    }

    /// Issue `request`, retrying transient failures per `policy`. Returns
    /// the first successful response; every attempt is logged with the
    /// request key.
    pub fn complete(
        &self,
        request: &ChatRequest,
        policy: &RetryPolicy,
    ) -> Result<ChatResponse, BackendError> {
        let mut last: Option<BackendError> = None;
        for attempt in 1..=policy.max_attempts {
            if attempt > 1 {
                self.clock.sleep(policy.delay_before(attempt));
            }
            if let Some(limiter) = &self.limiter {
                limiter.acquire(self.clock.as_ref());
            }
            log::debug!(
                "backend={} attempt={} key={}",
                self.backend.id(),
                attempt,
                request.request_key
            );
            match self.backend.complete_once(request) {
                Ok(resp) => {
                    if resp.text.is_empty() {
                        return Err(BackendError::Refusal);
                    }
                    return Ok(resp);
                }
                Err(err) if (policy.classifier)(&err) && attempt < policy.max_attempts => {
                    log::warn!("retryable failure on key {}: {err}", request.request_key);
                    last = Some(err);
                }
                Err(err) => {
                    return if attempt == 1 && !(policy.classifier)(&err) {
                        Err(err)
                    } else {
                        Err(BackendError::Exhausted {
                            attempts: attempt,
                            last: Box::new(err),
                        })
                    };
                }
            }
        }
        Err(BackendError::Exhausted {
            attempts: policy.max_attempts,
            last: Box::new(last.unwrap_or(BackendError::Refusal)),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::time::Duration;

    fn request(key_salt: &str) -> ChatRequest {
        let assets = PromptAssets::builtin();
        build_request(
            &assets,
            "qs",
            &BTreeMap::from([("question".to_string(), key_salt.to_string())]),
            &[],
            DecodeParams::default(),
        )
        .unwrap()
    }

    #[test]
    fn scripted_mock_single_attempt() {
        let req = request("what grows here?");
        let mock = MockBackend::new().script(&req.request_key, r#"{"QSR":"ok","QS":2}"#);
        let client = Client::new(Arc::new(mock));
        let resp = client
            .complete(&req, &RetryPolicy::no_retry())
            .unwrap();
        assert_eq!(resp.text, r#"{"QSR":"ok","QS":2}"#);
    }

    #[test]
    fn transient_failures_then_success() {
        let req = request("q");
        let mock = MockBackend::new().script_seq(
            &req.request_key,
            vec![
                MockReply::TransportFailure,
                MockReply::TransportFailure,
                MockReply::Text("fine".into()),
            ],
        );
        let mock = Arc::new(mock);
        let client = Client::new(mock.clone()).with_clock(Arc::new(TestClock::new()));
        let policy = RetryPolicy {
            max_attempts: 3,
            base_delay: Duration::from_millis(10),
            backoff_factor: 2.0,
            classifier: BackendError::is_retryable,
        };
        let resp = client.complete(&req, &policy).unwrap();
        assert_eq!(resp.text, "fine");
        assert_eq!(mock.attempts(&req.request_key), 3);
    }

    #[test]
    fn single_attempt_failure_is_exhaustion() {
        let req = request("q");
        let mock =
            MockBackend::new().script_seq(&req.request_key, vec![MockReply::TransportFailure]);
        let client = Client::new(Arc::new(mock)).with_clock(Arc::new(TestClock::new()));
        let err = client
            .complete(&req, &RetryPolicy::no_retry())
            .unwrap_err();
        assert!(matches!(err, BackendError::Exhausted { attempts: 1, .. }));
    }

    #[test]
    fn non_retryable_fails_immediately() {
        let req = request("q");
        let mock = MockBackend::new()
            .script_seq(&req.request_key, vec![MockReply::AuthFailure]);
        let mock = Arc::new(mock);
        let client = Client::new(mock.clone()).with_clock(Arc::new(TestClock::new()));
        let policy = RetryPolicy {
            max_attempts: 5,
            ..RetryPolicy::default()
        };
        let err = client.complete(&req, &policy).unwrap_err();
        assert!(matches!(err, BackendError::Auth(_)));
        assert_eq!(mock.attempts(&req.request_key), 1);
    }
}
