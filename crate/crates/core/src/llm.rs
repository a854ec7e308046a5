//! Chat-completion types, the client trait, and a scripted mock.

use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::descriptor::DescriptorSet;
use crate::workflow::Workflow;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
    Tool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn new(role: Role, content: impl Into<String>) -> Self {
        Self {
            role,
            content: content.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolCall {
    pub name: String,
    /// Argument payload exactly as the model produced it.
    pub arguments: String,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenUsage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

impl TokenUsage {
    pub fn new(prompt_tokens: u64, completion_tokens: u64) -> Self {
        Self {
            prompt_tokens,
            completion_tokens,
        }
    }

    pub fn total(&self) -> u64 {
        self.prompt_tokens + self.completion_tokens
    }
}

impl std::ops::AddAssign for TokenUsage {
    fn add_assign(&mut self, rhs: Self) {
        self.prompt_tokens += rhs.prompt_tokens;
        self.completion_tokens += rhs.completion_tokens;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompletionRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub tools: DescriptorSet,
    pub temperature: f64,
    pub max_tokens: u32,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompletionResponse {
    pub text: Option<String>,
    pub tool_calls: Vec<ToolCall>,
    pub usage: TokenUsage,
}

impl CompletionResponse {
    pub fn text(text: impl Into<String>) -> Self {
        Self {
            text: Some(text.into()),
            ..Default::default()
        }
    }

    /// One tool call per workflow step.
    pub fn from_workflow(w: &Workflow) -> Self {
        Self {
            text: None,
            tool_calls: w
                .steps
                .iter()
                .map(|s| ToolCall {
                    name: s.function.clone(),
                    arguments: serde_json::to_string(&s.args).expect("args serialize"),
                })
                .collect(),
            usage: TokenUsage::default(),
        }
    }

    pub fn with_usage(mut self, prompt_tokens: u64, completion_tokens: u64) -> Self {
        self.usage = TokenUsage::new(prompt_tokens, completion_tokens);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LlmError {
    #[error("transport error (status {status:?}): {body}")]
    Transport { status: Option<u16>, body: String },
    #[error("unexpected response: {0}")]
    Protocol(String),
    #[error("client configuration: {0}")]
    Config(String),
    #[error("scripted mock exhausted after {0} turns")]
    ScriptExhausted(usize),
}

pub trait LlmClient: Send + Sync {
    fn complete(&self, req: &CompletionRequest) -> Result<CompletionResponse, LlmError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MockUsage {
    /// Report the usage stored in each scripted turn.
    Scripted,
    /// Report roughly one token per four characters of request and reply.
    Estimated,
}

/// Replays canned responses in order, one per call, ignoring the request.
/// Running past the end of the script is an error.
#[derive(Debug)]
pub struct ScriptedMock {
    turns: Vec<CompletionResponse>,
    usage: MockUsage,
    cursor: Mutex<usize>,
    requests: Mutex<Vec<CompletionRequest>>,
}

impl ScriptedMock {
    pub fn new(turns: Vec<CompletionResponse>) -> Self {
        Self::with_usage(turns, MockUsage::Scripted)
    }

    pub fn with_usage(turns: Vec<CompletionResponse>, usage: MockUsage) -> Self {
        Self {
            turns,
            usage,
            cursor: Mutex::new(0),
            requests: Mutex::new(Vec::new()),
        }
    }

    pub fn consumed(&self) -> usize {
        *self.cursor.lock().unwrap_or_else(|e| e.into_inner())
    }

    pub fn remaining(&self) -> usize {
        self.turns.len() - self.consumed()
    }

    pub fn requests(&self) -> Vec<CompletionRequest> {
        self.requests.lock().unwrap_or_else(|e| e.into_inner()).clone()
    }
}

fn estimate_tokens(chars: usize) -> u64 {
    chars.div_ceil(4) as u64
}

impl LlmClient for ScriptedMock {
    fn complete(&self, req: &CompletionRequest) -> Result<CompletionResponse, LlmError> {
        let mut cursor = self.cursor.lock().unwrap_or_else(|e| e.into_inner());
        let Some(turn) = self.turns.get(*cursor) else {
            return Err(LlmError::ScriptExhausted(self.turns.len()));
        };
        *cursor += 1;
        self.requests.lock().unwrap_or_else(|e| e.into_inner()).push(req.clone());
        let mut out = turn.clone();
        if self.usage == MockUsage::Estimated {
            let prompt: usize = req.messages.iter().map(|m| m.content.chars().count()).sum::<usize>()
                + req.tools.to_json().chars().count();
            let reply: usize = out.text.as_deref().map_or(0, |t| t.chars().count())
                + out
                    .tool_calls
                    .iter()
                    .map(|c| c.name.len() + c.arguments.chars().count())
                    .sum::<usize>();
            out.usage = TokenUsage::new(estimate_tokens(prompt), estimate_tokens(reply));
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::workflow::WorkflowStep;

    fn request() -> CompletionRequest {
        CompletionRequest {
            model: "m".into(),
            messages: vec![ChatMessage::new(Role::User, "hello")],
            tools: DescriptorSet::default(),
            temperature: 0.0,
            max_tokens: 64,
        }
    }

    #[test]
    fn turns_are_consumed_in_order_then_exhausted() {
        let w = Workflow::new(vec![
            WorkflowStep::new("load_network").arg("path", "a.json"),
            WorkflowStep::new("run_powerflow").arg("network", "active"),
        ]);
        let mock = ScriptedMock::new(vec![
            CompletionResponse::from_workflow(&w).with_usage(1200, 80),
            CompletionResponse::text("WORKFLOW_COMPLETE"),
        ]);
        let first = mock.complete(&request()).unwrap();
        assert_eq!(first.tool_calls.len(), 2);
        assert_eq!(first.tool_calls[0].name, "load_network");
        assert_eq!(first.tool_calls[1].name, "run_powerflow");
        assert_eq!(first.usage.total(), 1280);
        assert_eq!(mock.complete(&request()).unwrap().text.as_deref(), Some("WORKFLOW_COMPLETE"));
        assert_eq!(mock.complete(&request()), Err(LlmError::ScriptExhausted(2)));
        assert_eq!(mock.requests().len(), 2);
    }

    #[test]
    fn estimated_usage_tracks_request_size() {
        let mock = ScriptedMock::with_usage(vec![CompletionResponse::text("abcd")], MockUsage::Estimated);
        let out = mock.complete(&request()).unwrap();
        assert_eq!(out.usage.completion_tokens, 1);
        assert_eq!(out.usage.prompt_tokens, estimate_tokens(5 + 2));
    }
}
