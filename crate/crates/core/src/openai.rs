//! OpenAI-compatible chat-completions client with function tools.

use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::descriptor::{DescriptorSet, FunctionDescriptor, ParamType};
use crate::llm::{CompletionRequest, CompletionResponse, LlmClient, LlmError, TokenUsage, ToolCall};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EndpointConfig {
    /// Base URL; `/chat/completions` is appended.
    pub url: String,
    pub model: String,
    /// Name of the environment variable holding the API key.
    pub api_key_env: Option<String>,
    pub timeout_secs: u64,
    pub retries: u32,
    pub backoff_ms: u64,
    /// Minimum spacing between request starts; 0 disables the ceiling.
    pub min_interval_ms: u64,
}

impl Default for EndpointConfig {
    fn default() -> Self {
        Self {
            url: "https://api.openai.com/v1".into(),
            model: "gpt-4o-mini".into(),
            api_key_env: Some("OPENAI_API_KEY".into()),
            timeout_secs: 60,
            retries: 3,
            backoff_ms: 500,
            min_interval_ms: 0,
        }
    }
}

pub struct OpenAiClient {
    config: EndpointConfig,
    api_key: Option<String>,
    http: reqwest::blocking::Client,
    last_request: Mutex<Option<Instant>>,
}

fn param_schema(kind: ParamType, values: Option<&Vec<String>>) -> Value {
    match kind {
        ParamType::String => json!({"type": "string"}),
        ParamType::Integer => json!({"type": "integer"}),
        ParamType::Number => json!({"type": "number"}),
        ParamType::Boolean => json!({"type": "boolean"}),
        ParamType::Enum => json!({"type": "string", "enum": values.cloned().unwrap_or_default()}),
        ParamType::NetworkRef => json!({"type": "string", "enum": ["active"]}),
    }
}

pub fn tool_schema(d: &FunctionDescriptor) -> Value {
    let mut properties = Map::new();
    for p in &d.params {
        properties.insert(p.name.clone(), param_schema(p.kind, p.values.as_ref()));
    }
    let required: Vec<&str> = d.params.iter().filter(|p| p.required).map(|p| p.name.as_str()).collect();
    let mut function = Map::new();
    function.insert("name".into(), json!(d.name));
    if let Some(text) = &d.description {
        function.insert("description".into(), json!(text));
    }
    function.insert(
        "parameters".into(),
        json!({
            "type": "object",
            "properties": properties,
            "required": required,
            "additionalProperties": false
        }),
    );
    json!({"type": "function", "function": function})
}

pub fn tools_schema(set: &DescriptorSet) -> Value {
    Value::Array(set.iter().map(tool_schema).collect())
}

/// JSON body for `POST /chat/completions`.
pub fn request_body(req: &CompletionRequest) -> Value {
    let mut body = Map::new();
    body.insert("model".into(), json!(req.model));
    body.insert("messages".into(), serde_json::to_value(&req.messages).expect("messages serialize"));
    if !req.tools.is_empty() {
        body.insert("tools".into(), tools_schema(&req.tools));
        body.insert("tool_choice".into(), json!("auto"));
    }
    body.insert("temperature".into(), json!(req.temperature));
    body.insert("max_tokens".into(), json!(req.max_tokens));
    Value::Object(body)
}

pub fn parse_response(body: &Value) -> Result<CompletionResponse, LlmError> {
    let message = body
        .pointer("/choices/0/message")
        .ok_or_else(|| LlmError::Protocol("response has no choices[0].message".into()))?;
    let text = message
        .get("content")
        .and_then(Value::as_str)
        .filter(|s| !s.is_empty())
        .map(str::to_string);
    let mut tool_calls = Vec::new();
    for call in message.get("tool_calls").and_then(Value::as_array).into_iter().flatten() {
        let f = call
            .get("function")
            .ok_or_else(|| LlmError::Protocol("tool call without function".into()))?;
        let name = f
            .get("name")
            .and_then(Value::as_str)
            .ok_or_else(|| LlmError::Protocol("tool call without name".into()))?;
        let arguments = match f.get("arguments") {
            Some(Value::String(s)) => s.clone(),
            Some(Value::Null) | None => String::new(),
            Some(other) => other.to_string(),
        };
        tool_calls.push(ToolCall {
            name: name.to_string(),
            arguments,
        });
    }
    let count = |key: &str| body.pointer(&format!("/usage/{key}")).and_then(Value::as_u64).unwrap_or(0);
    Ok(CompletionResponse {
        text,
        tool_calls,
        usage: TokenUsage::new(count("prompt_tokens"), count("completion_tokens")),
    })
}

fn retryable(status: u16) -> bool {
    status == 429 || (500..600).contains(&status)
}

impl OpenAiClient {
    /// Reads the API key from the environment variable named in `config`.
    pub fn from_config(config: EndpointConfig) -> Result<Self, LlmError> {
        let api_key = match &config.api_key_env {
            Some(var) => Some(
                std::env::var(var)
                    .map_err(|_| LlmError::Config(format!("environment variable {var} is not set")))?,
            ),
            None => None,
        };
        let http = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| LlmError::Config(e.to_string()))?;
        Ok(Self {
            config,
            api_key,
            http,
            last_request: Mutex::new(None),
        })
    }

    pub fn config(&self) -> &EndpointConfig {
        &self.config
    }

    fn pace(&self) {
        if self.config.min_interval_ms == 0 {
            return;
        }
        let mut last = self.last_request.lock().unwrap_or_else(|e| e.into_inner());
        let gap = Duration::from_millis(self.config.min_interval_ms);
        if let Some(prev) = *last {
            let elapsed = prev.elapsed();
            if elapsed < gap {
                std::thread::sleep(gap - elapsed);
            }
        }
        *last = Some(Instant::now());
    }

    fn send_once(&self, body: &Value) -> Result<Value, (bool, LlmError)> {
        self.pace();
        let url = format!("{}/chat/completions", self.config.url.trim_end_matches('/'));
        let mut req = self.http.post(url).json(body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| {
            (
                true,
                LlmError::Transport {
                    status: None,
                    body: e.to_string(),
                },
            )
        })?;
        let status = resp.status().as_u16();
        let text = resp.text().unwrap_or_default();
        if !(200..300).contains(&status) {
            return Err((
                retryable(status),
                LlmError::Transport {
                    status: Some(status),
                    body: text,
                },
            ));
        }
        serde_json::from_str(&text).map_err(|e| (false, LlmError::Protocol(format!("invalid JSON body: {e}"))))
    }
}

impl LlmClient for OpenAiClient {
    fn complete(&self, req: &CompletionRequest) -> Result<CompletionResponse, LlmError> {
        if req.messages.is_empty() {
            return Err(LlmError::Protocol("request has no messages".into()));
        }
        let body = request_body(req);
        let mut attempt = 0;
        loop {
            match self.send_once(&body) {
                Ok(value) => return parse_response(&value),
                Err((true, err)) if attempt < self.config.retries => {
                    let _ = err;
                    let delay = self.config.backoff_ms.saturating_mul(1 << attempt.min(16));
                    std::thread::sleep(Duration::from_millis(delay));
                    attempt += 1;
                }
                Err((_, err)) => return Err(err),
            }
        }
    }
}
