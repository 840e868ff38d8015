//! Reference HTTP adapter speaking a chat-completion-style JSON
//! exchange: a `messages` array of text/image parts with base64 image
//! payloads. Additional adapters implement [`ChatBackend`] the same way.

use base64::Engine;

use super::{BackendError, ChatBackend, ChatRequest, ChatResponse, Part, Role, TokenUsage};

pub struct HttpBackend {
    id: String,
    base_url: String,
    model: String,
    api_key: Option<String>,
    client: reqwest::blocking::Client,
}

impl HttpBackend {
    pub fn new(base_url: impl Into<String>, model: impl Into<String>) -> HttpBackend {
        let model = model.into();
        HttpBackend {
            id: format!("http:{model}"),
            base_url: base_url.into(),
            model,
            api_key: None,
            client: reqwest::blocking::Client::new(),
        }
    }

    pub fn with_api_key(mut self, key: impl Into<String>) -> Self {
        self.api_key = Some(key.into());
        self
    }

    /// JSON body for one request; kept separate from transport so the
    /// wire format is testable offline.
    pub fn build_body(&self, request: &ChatRequest) -> serde_json::Value {
        let b64 = base64::engine::general_purpose::STANDARD;
        let messages: Vec<serde_json::Value> = request
            .messages
            .iter()
            .map(|msg| {
                let role = match msg.role {
                    Role::System => "system",
                    Role::User => "user",
                };
                let content: Vec<serde_json::Value> = msg
                    .parts
                    .iter()
                    .map(|part| match part {
                        Part::Text(text) => serde_json::json!({"type": "text", "text": text}),
                        Part::Image(blob) => serde_json::json!({
                            "type": "image_url",
                            "image_url": {
                                "url": format!(
                                    "data:{};base64,{}",
                                    blob.media_type,
                                    b64.encode(&blob.bytes)
                                )
                            }
                        }),
                    })
                    .collect();
                serde_json::json!({"role": role, "content": content})
            })
            .collect();
        serde_json::json!({
            "model": self.model,
            "temperature": request.decode.temperature,
            "max_tokens": request.decode.max_output_tokens,
            "messages": messages,
        })
    }

    /// Extract the completion text from a response body.
    pub fn parse_body(body: &serde_json::Value) -> Result<(String, Option<TokenUsage>), BackendError> {
        let text = body["choices"][0]["message"]["content"]
            .as_str()
            .ok_or_else(|| {
                BackendError::BadRequest(format!("response missing choices[0].message.content: {body}"))
            })?
            .to_string();
        let usage = body.get("usage").map(|u| TokenUsage {
            input_tokens: u["prompt_tokens"].as_u64().unwrap_or(0),
            output_tokens: u["completion_tokens"].as_u64().unwrap_or(0),
        });
        Ok((text, usage))
    }
}

impl ChatBackend for HttpBackend {
    fn complete_once(&self, request: &ChatRequest) -> Result<ChatResponse, BackendError> {
        let url = format!("{}/chat/completions", self.base_url.trim_end_matches('/'));
        let mut builder = self.client.post(&url).json(&self.build_body(request));
        if let Some(key) = &self.api_key {
            builder = builder.bearer_auth(key);
        }
        let response = builder
            .send()
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        let status = response.status().as_u16();
        let body_text = response
            .text()
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        match status {
            200 => {
                let body: serde_json::Value = serde_json::from_str(&body_text)
                    .map_err(|e| BackendError::BadRequest(format!("unparseable body: {e}")))?;
                let (text, usage) = Self::parse_body(&body)?;
                if text.is_empty() {
                    return Err(BackendError::Refusal);
                }
                Ok(ChatResponse {
                    text,
                    usage,
                    backend_id: self.id.clone(),
                })
            }
            401 | 403 => Err(BackendError::Auth(body_text)),
            s if s == 408 || s == 429 || s >= 500 => Err(BackendError::Http {
                status: s,
                body: body_text,
            }),
            s => Err(BackendError::BadRequest(format!("HTTP {s}: {body_text}"))),
        }
    }

    fn id(&self) -> &str {
        &self.id
    }
}
