//! HTTP backend for chat-completions style LLM services.

use std::fmt::Write as _;
use std::time::Duration;

use serde_json::{json, Value};

use super::extractor::{ExtractionRequest, Extractor, ExtractorError, ExtractorReply};

pub const ENV_BASE_URL: &str = "LLE_LLM_BASE_URL";
pub const ENV_API_KEY: &str = "LLE_LLM_API_KEY";
pub const ENV_MODEL: &str = "LLE_LLM_MODEL";

const MAX_TOOL_ROUNDS: usize = 4;

const SYSTEM_PROMPT: &str = "You answer one question about a patient record. \
Reply with a JSON object {\"value\": \"yes\"|\"no\"|\"unknown\", \"explanation\": string, \
\"citations\": [{\"doc_id\": string, \"sentence_index\": integer, \"echoed_text\": string}]}. \
Cite only sentences shown to you, copying their text exactly. Answer \"unknown\" when the \
record does not settle the question. Use the provided tools for any date arithmetic.";

#[derive(Debug, Clone)]
pub struct LlmConfig {
    pub base_url: String,
    pub api_key: Option<String>,
    pub model: String,
    pub timeout: Duration,
    pub max_retries: u32,
    pub initial_backoff: Duration,
}

#[derive(Debug, thiserror::Error)]
pub enum LlmConfigError {
    #[error("environment variable {0} is not set")]
    MissingEnv(&'static str),
    #[error("failed to build http client: {0}")]
    Client(String),
}

impl LlmConfig {
    pub fn new(base_url: impl Into<String>) -> Self {
        LlmConfig {
            base_url: base_url.into(),
            api_key: None,
            model: "gpt-4o".into(),
            timeout: Duration::from_secs(30),
            max_retries: 2,
            initial_backoff: Duration::from_millis(500),
        }
    }

    /// Reads the base URL, API key and model from the environment.
    pub fn from_env() -> Result<Self, LlmConfigError> {
        let base_url = std::env::var(ENV_BASE_URL).map_err(|_| LlmConfigError::MissingEnv(ENV_BASE_URL))?;
        let mut config = LlmConfig::new(base_url);
        config.api_key = std::env::var(ENV_API_KEY).ok();
        if let Ok(model) = std::env::var(ENV_MODEL) {
            config.model = model;
        }
        Ok(config)
    }

    fn endpoint(&self) -> String {
        format!("{}/chat/completions", self.base_url.trim_end_matches('/'))
    }
}

pub struct LlmExtractor {
    config: LlmConfig,
    client: reqwest::blocking::Client,
    id: String,
}

impl LlmExtractor {
    pub fn new(config: LlmConfig) -> Result<Self, LlmConfigError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| LlmConfigError::Client(e.to_string()))?;
        let id = format!("llm:{}", config.model);
        Ok(LlmExtractor { config, client, id })
    }

    fn user_message(request: &ExtractionRequest<'_>) -> String {
        let mut msg = String::new();
        let _ = writeln!(msg, "Question ({}): {}", request.factor.name, request.factor.question);
        if let Some(desc) = &request.factor.description {
            let _ = writeln!(msg, "Guidance: {desc}");
        }
        let fields = &request.record.record.structured_fields;
        if !fields.is_empty() {
            let _ = writeln!(msg, "\nStructured fields:");
            for (k, v) in fields {
                let _ = writeln!(msg, "- {k}: {v}");
            }
        }
        for doc in &request.record.record.documents {
            let _ = writeln!(msg, "\nDocument {} ({:?}, {}):", doc.doc_id, doc.doc_type, doc.date);
            for s in &request.record.sentences[&doc.doc_id] {
                let _ = writeln!(msg, "[{}#{}] {}", s.doc_id, s.index, s.text);
            }
        }
        msg
    }

    fn post(&self, body: &Value) -> Result<Value, ExtractorError> {
        let mut attempt = 0;
        loop {
            let mut req = self.client.post(self.config.endpoint()).json(body);
            if let Some(key) = &self.config.api_key {
                req = req.bearer_auth(key);
            }
            let retriable = match req.send() {
                Ok(resp) if resp.status().is_success() => {
                    return resp
                        .json::<Value>()
                        .map_err(|e| ExtractorError::InvalidReply(format!("response body: {e}")));
                }
                Ok(resp) => {
                    let status = resp.status();
                    if status.is_server_error() || status.as_u16() == 429 {
                        format!("HTTP {status}")
                    } else {
                        return Err(ExtractorError::Unavailable(format!("HTTP {status}")));
                    }
                }
                Err(e) => e.to_string(),
            };
            if attempt >= self.config.max_retries {
                return Err(ExtractorError::Unavailable(format!(
                    "{retriable} after {} attempts",
                    attempt + 1
                )));
            }
            std::thread::sleep(self.config.initial_backoff * 2u32.pow(attempt));
            attempt += 1;
        }
    }
}

impl Extractor for LlmExtractor {
    fn id(&self) -> &str {
        &self.id
    }

    fn answer(&self, request: &ExtractionRequest<'_>) -> Result<ExtractorReply, ExtractorError> {
        let tools: Vec<Value> = request
            .tools
            .specs()
            .iter()
            .map(|t| json!({"type": "function", "function": t}))
            .collect();
        let mut messages = vec![
            json!({"role": "system", "content": SYSTEM_PROMPT}),
            json!({"role": "user", "content": Self::user_message(request)}),
        ];

        for _ in 0..=MAX_TOOL_ROUNDS {
            let body = json!({
                "model": self.config.model,
                "temperature": 0,
                "messages": messages,
                "tools": tools,
                "response_format": {"type": "json_object"},
            });
            let response = self.post(&body)?;
            let message = response
                .pointer("/choices/0/message")
                .cloned()
                .ok_or_else(|| ExtractorError::InvalidReply("no choices[0].message".into()))?;

            let calls = message.get("tool_calls").and_then(Value::as_array).cloned().unwrap_or_default();
            if calls.is_empty() {
                let content = message
                    .get("content")
                    .and_then(Value::as_str)
                    .ok_or_else(|| ExtractorError::InvalidReply("message has no content".into()))?;
                return serde_json::from_str(content)
                    .map_err(|e| ExtractorError::InvalidReply(format!("content is not a valid answer: {e}")));
            }

            messages.push(message);
            for call in calls {
                let id = call.get("id").cloned().unwrap_or(Value::Null);
                let name = call.pointer("/function/name").and_then(Value::as_str).unwrap_or_default();
                let args: Value = call
                    .pointer("/function/arguments")
                    .and_then(Value::as_str)
                    .and_then(|a| serde_json::from_str(a).ok())
                    .unwrap_or(Value::Null);
                let result = match request.tools.call(name, &args) {
                    Ok(v) => v,
                    Err(e) => json!({"error": e.to_string()}),
                };
                messages.push(json!({"role": "tool", "tool_call_id": id, "content": result.to_string()}));
            }
        }
        Err(ExtractorError::InvalidReply(format!(
            "no final answer after {MAX_TOOL_ROUNDS} tool rounds"
        )))
    }
}
