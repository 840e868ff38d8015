//! Deterministic scripted backend for offline runs and tests.

use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use super::{BackendError, ChatBackend, ChatRequest, ChatResponse};
use crate::fnv1a64;

/// One scripted outcome for a request.
#[derive(Debug, Clone)]
pub enum MockReply {
    Text(String),
    /// Injected retryable failure.
    TransportFailure,
    /// Injected non-retryable failure.
    AuthFailure,
}

struct Script {
    replies: Vec<MockReply>,
    cursor: usize,
}

/// Scripted chat backend. Resolution order per request:
/// exact `request_key` script, then the responder function, then the
/// configured default text. Plain scripts make identical requests yield
/// identical responses; sequences exist for fault-injection tests and
/// are consumed one reply per attempt (the last reply repeats).
pub struct MockBackend {
    id: String,
    scripts: Mutex<HashMap<String, Script>>,
    responder: Option<Box<dyn Fn(&ChatRequest) -> Option<MockReply> + Send + Sync>>,
    default_reply: String,
    attempts: Mutex<HashMap<String, u32>>,
    total_calls: AtomicUsize,
}

impl MockBackend {
    pub fn new() -> MockBackend {
        MockBackend {
            id: "mock".into(),
            scripts: Mutex::new(HashMap::new()),
            responder: None,
            default_reply: String::new(),
            attempts: Mutex::new(HashMap::new()),
            total_calls: AtomicUsize::new(0),
        }
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = id.into();
        self
    }

    /// Fixed response for one request key.
    pub fn script(self, request_key: &str, text: impl Into<String>) -> Self {
        self.script_seq(request_key, vec![MockReply::Text(text.into())])
    }

    /// Per-attempt reply sequence for one request key.
    pub fn script_seq(self, request_key: &str, replies: Vec<MockReply>) -> Self {
        assert!(!replies.is_empty());
        self.scripts.lock().unwrap().insert(
            request_key.to_string(),
            Script { replies, cursor: 0 },
        );
        self
    }

    /// Content-based responder consulted for unscripted keys.
    pub fn with_responder(
        mut self,
        f: impl Fn(&ChatRequest) -> Option<MockReply> + Send + Sync + 'static,
    ) -> Self {
        self.responder = Some(Box::new(f));
        self
    }

    /// Response text for requests nothing else covers.
    pub fn with_default(mut self, text: impl Into<String>) -> Self {
        self.default_reply = text.into();
        self
    }

    /// Attempts recorded against one request key.
    pub fn attempts(&self, request_key: &str) -> u32 {
        *self.attempts.lock().unwrap().get(request_key).unwrap_or(&0)
    }

    pub fn total_calls(&self) -> usize {
        self.total_calls.load(Ordering::SeqCst)
    }

    fn reply_for(&self, request: &ChatRequest) -> MockReply {
        let mut scripts = self.scripts.lock().unwrap();
        if let Some(script) = scripts.get_mut(&request.request_key) {
            let idx = script.cursor.min(script.replies.len() - 1);
            script.cursor += 1;
            return script.replies[idx].clone();
        }
        drop(scripts);
        if let Some(responder) = &self.responder {
            if let Some(reply) = responder(request) {
                return reply;
            }
        }
        MockReply::Text(self.default_reply.clone())
    }
}

impl Default for MockBackend {
    fn default() -> Self {
        MockBackend::new()
    }
}

impl ChatBackend for MockBackend {
    fn complete_once(&self, request: &ChatRequest) -> Result<ChatResponse, BackendError> {
        self.total_calls.fetch_add(1, Ordering::SeqCst);
        *self
            .attempts
            .lock()
            .unwrap()
            .entry(request.request_key.clone())
            .or_insert(0) += 1;
        match self.reply_for(request) {
            MockReply::Text(text) => Ok(ChatResponse {
                text,
                usage: None,
                backend_id: self.id.clone(),
            }),
            MockReply::TransportFailure => {
                Err(BackendError::Transport("injected transport failure".into()))
            }
            MockReply::AuthFailure => Err(BackendError::Auth("injected auth failure".into())),
        }
    }

    fn id(&self) -> &str {
        &self.id
    }
}

/// Content-keyed responder that gives grammatically valid answers for
/// every shipped template, so full pipeline runs work offline. All
/// outputs are pure functions of the request content.
pub fn demo_responder() -> impl Fn(&ChatRequest) -> Option<MockReply> + Send + Sync + 'static {
    |request: &ChatRequest| {
        let binding = |name: &str| request.bindings.get(name).cloned().unwrap_or_default();
        let text = match request.template_id.as_str() {
            "retriever" => {
                let doc = binding("document");
                let n = max_figure_index(&doc);
                if n >= 2 {
                    format!("[1,{n}]")
                } else {
                    "[0,0]".to_string()
                }
            }
            "instruction" => {
                let salt = attachment_salt(request);
                format!(
                    "[Q:What does the subject shown here turn into (case {salt})?, A:See this image]"
                )
            }
            "qs" => r#"{"QSR":"clear, precise, image-grounded","QS":2}"#.to_string(),
            "as" => r#"{"ASR":"exact fulfilment of the request","AS":2}"#.to_string(),
            "cds" => r#"{"CDSR":"meaningless without the question image","CDS":2}"#.to_string(),
            "rewriter" => {
                let q = binding("question");
                let base = q.trim_end_matches('?');
                let variants: Vec<String> = [
                    format!("{base}?"),
                    format!("Could you show me: {base}?"),
                    format!("Please illustrate what happens next for this. ({base})"),
                    format!("I wonder... {base}?"),
                    format!("Show it. {base}!"),
                ]
                .iter()
                .enumerate()
                .map(|(i, v)| {
                    format!(
                        r#"{{"q":"{}","a":"See this image"}}"#,
                        escape(&format!("{v} [v{}]", i + 1))
                    )
                })
                .collect();
                format!("[{}]", variants.join(","))
            }
            "reasoner" => {
                let q = binding("question");
                format!(
                    "First, I look at the question image and what it depicts. The question, \
                     \"{q}\", asks for the natural continuation of that subject. I recall the \
                     relevant background knowledge, identify which elements stay constant, and \
                     which must change. The answer image should depict the transformed subject \
                     with the same framing, so I describe that end state to guide generation."
                )
            }
            "seed-label" | "refine-label" => {
                let doc = binding("document").to_ascii_lowercase();
                if doc.contains("design") {
                    "design".to_string()
                } else if doc.contains("knowledge") {
                    "knowledge".to_string()
                } else {
                    match fnv1a64(binding("document").as_bytes()) % 3 {
                        0 => "knowledge".to_string(),
                        1 => "design".to_string(),
                        _ => "other".to_string(),
                    }
                }
            }
            "judge" => {
                let salt = fnv1a64(
                    format!("{}|{}", binding("question"), attachment_salt(request)).as_bytes(),
                );
                format!("The candidate is plausible. Score: {}", salt % 3)
            }
            _ => return None,
        };
        Some(MockReply::Text(text))
    }
}

fn max_figure_index(doc: &str) -> u32 {
    let mut max = 0;
    for line in doc.lines() {
        if let Some(rest) = line.strip_prefix("Figure ") {
            let digits: String = rest.chars().take_while(|c| c.is_ascii_digit()).collect();
            if let Ok(idx) = digits.parse::<u32>() {
                max = max.max(idx);
            }
        }
    }
    max
}

fn attachment_salt(request: &ChatRequest) -> String {
    let mut joined = String::new();
    for msg in &request.messages {
        for part in &msg.parts {
            if let super::Part::Image(blob) = part {
                joined.push_str(&blob.content_hash);
            }
        }
    }
    format!("{:08x}", fnv1a64(joined.as_bytes()) as u32)
}

fn escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}
