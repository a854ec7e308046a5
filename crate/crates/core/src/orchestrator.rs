//! The build-execute-feedback-correct loop.
//!
//! Each iteration renders a prompt from the query, the mode's exemplars and
//! descriptors, and the history so far; asks the model for a workflow;
//! validates and executes it; and records the round in the history. After a
//! clean execution the model is asked once more whether the results answer
//! the query: [`COMPLETION_SENTINEL`] ends the session, tool calls become the
//! next iteration's workflow.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::descriptor::validate_workflow;
use crate::exemplar::{ExemplarSet, ExpertPair};
use crate::executor::{execute_workflow, DataStore, ExecutionContext};
use crate::history::{ConversationHistory, HistoryEntry};
use crate::llm::{ChatMessage, CompletionRequest, CompletionResponse, LlmClient, LlmError, Role, TokenUsage};
use crate::prompt::{Prompt, COMPLETION_SENTINEL};
use crate::registry::Registry;
use crate::selector::{SelectError, Selector};
use crate::workflow::{parse_args, parse_workflow, Workflow, WorkflowStep};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Mode {
    /// Parameter signatures only.
    ZeroCtx,
    /// Signatures with descriptions.
    Mini,
    /// Descriptions plus every exemplar.
    Full,
    /// Descriptions plus the `k` most similar exemplars.
    TopK(usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown mode {0:?}; expected zeroctx, mini, full or topk:<k>")]
pub struct ModeError(pub String);

impl FromStr for Mode {
    type Err = ModeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim().to_ascii_lowercase();
        match t.as_str() {
            "zeroctx" | "zero-ctx" => Ok(Mode::ZeroCtx),
            "mini" => Ok(Mode::Mini),
            "full" => Ok(Mode::Full),
            _ => {
                let k = t
                    .strip_prefix("topk:")
                    .or_else(|| t.strip_prefix("topk"))
                    .or_else(|| t.strip_prefix("top"))
                    .and_then(|k| k.parse::<usize>().ok())
                    .filter(|k| *k >= 1);
                k.map(Mode::TopK).ok_or_else(|| ModeError(s.to_string()))
            }
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Mode::ZeroCtx => f.write_str("zeroctx"),
            Mode::Mini => f.write_str("mini"),
            Mode::Full => f.write_str("full"),
            Mode::TopK(k) => write!(f, "topk:{k}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionConfig {
    pub mode: Mode,
    pub max_iterations: usize,
    pub model: String,
    pub temperature: f64,
    pub max_tokens: u32,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Full,
            max_iterations: 8,
            model: "mock".into(),
            temperature: 0.0,
            max_tokens: 1024,
        }
    }
}

#[derive(Debug, Error)]
pub enum SessionError {
    #[error("query is empty")]
    EmptyQuery,
    #[error("max_iterations must be at least 1")]
    NoIterations,
    #[error("top-k mode needs an exemplar selector")]
    NoSelector,
    #[error(transparent)]
    Select(#[from] SelectError),
}

/// What the model's reply means to the loop.
#[derive(Debug, Clone, PartialEq)]
pub enum Reply {
    Workflow(Workflow),
    Complete,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unusable model reply: {0}")]
pub struct ReplyError(pub String);

fn strip_fence(text: &str) -> &str {
    let t = text.trim();
    let Some(rest) = t.strip_prefix("```") else {
        return t;
    };
    let rest = rest.trim_start_matches(|c: char| c.is_ascii_alphanumeric());
    rest.strip_suffix("```").unwrap_or(rest).trim()
}

/// Tool calls take precedence over text. Text is accepted when it is exactly
/// the completion sentinel or a wire-format workflow.
pub fn parse_llm_response(resp: &CompletionResponse) -> Result<Reply, ReplyError> {
    if !resp.tool_calls.is_empty() {
        let mut steps = Vec::with_capacity(resp.tool_calls.len());
        for (i, call) in resp.tool_calls.iter().enumerate() {
            if call.name.trim().is_empty() {
                return Err(ReplyError(format!("tool call {} has no function name", i + 1)));
            }
            let args = parse_args(&call.arguments)
                .map_err(|e| ReplyError(format!("tool call {} {}: {e}", i + 1, call.name)))?;
            steps.push(WorkflowStep {
                function: call.name.trim().to_string(),
                args,
            });
        }
        return Ok(Reply::Workflow(Workflow::new(steps)));
    }
    let text = resp.text.as_deref().map(str::trim).unwrap_or("");
    if text.is_empty() {
        return Err(ReplyError("empty response".into()));
    }
    if text == COMPLETION_SENTINEL {
        return Ok(Reply::Complete);
    }
    let body = strip_fence(text);
    if body.starts_with('[') {
        return parse_workflow(body).map(Reply::Workflow).map_err(|e| ReplyError(e.to_string()));
    }
    Err(ReplyError(
        "expected tool calls, a JSON workflow, or the completion sentinel".into(),
    ))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "lowercase")]
pub enum SessionOutcome {
    Completed {
        workflow: Workflow,
        exits: Vec<String>,
        digest: String,
        artifacts: Vec<PathBuf>,
    },
    Exhausted {
        last_workflow: Option<Workflow>,
        last_error: Option<String>,
        /// Set when the session stopped on a transport failure.
        transport_error: Option<String>,
    },
}

/// One iteration of the loop as recorded in the transcript.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TranscriptTurn {
    pub iteration: usize,
    pub prompt_digest: String,
    /// The generation reply, or `None` when the workflow came from the
    /// previous judgment reply.
    pub response: Option<CompletionResponse>,
    pub workflow: Option<Workflow>,
    pub exits: Vec<String>,
    pub error: Option<String>,
    pub judgment: Option<CompletionResponse>,
    pub usage: TokenUsage,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SessionResult {
    pub query: String,
    pub mode: Mode,
    pub outcome: SessionOutcome,
    pub iterations: usize,
    pub usage: TokenUsage,
    pub function_calls: usize,
    pub history: ConversationHistory,
    pub transcript: Vec<TranscriptTurn>,
}

impl SessionResult {
    pub fn is_completed(&self) -> bool {
        matches!(self.outcome, SessionOutcome::Completed { .. })
    }

    pub fn final_workflow(&self) -> Option<&Workflow> {
        match &self.outcome {
            SessionOutcome::Completed { workflow, .. } => Some(workflow),
            SessionOutcome::Exhausted { .. } => None,
        }
    }

    pub fn digest(&self) -> Option<&str> {
        match &self.outcome {
            SessionOutcome::Completed { digest, .. } => Some(digest),
            SessionOutcome::Exhausted { .. } => None,
        }
    }

    pub fn transport_failed(&self) -> bool {
        matches!(
            self.outcome,
            SessionOutcome::Exhausted {
                transport_error: Some(_),
                ..
            }
        )
    }

    pub fn transcript_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("session result serializes")
    }
}

/// Shared, read-only pieces of an agent: the frozen registry, the exemplar
/// corpus and its selector, and the data store.
#[derive(Clone)]
pub struct Orchestrator {
    pub registry: Arc<Registry>,
    pub corpus: ExemplarSet,
    pub selector: Option<Arc<Selector>>,
    pub store: DataStore,
    pub out_dir: Option<PathBuf>,
}

impl Orchestrator {
    pub fn new(registry: Arc<Registry>, corpus: ExemplarSet, store: DataStore) -> Self {
        Self {
            registry,
            corpus,
            selector: None,
            store,
            out_dir: None,
        }
    }

    pub fn with_selector(mut self, selector: Arc<Selector>) -> Self {
        self.selector = Some(selector);
        self
    }

    pub fn with_out_dir(mut self, dir: impl Into<PathBuf>) -> Self {
        self.out_dir = Some(dir.into());
        self
    }

    fn exemplars(&self, q: &str, mode: Mode) -> Result<Vec<ExpertPair>, SessionError> {
        match mode {
            Mode::ZeroCtx | Mode::Mini => Ok(Vec::new()),
            Mode::Full => Ok(self.corpus.pairs.clone()),
            Mode::TopK(k) => {
                let selector = self.selector.as_ref().ok_or(SessionError::NoSelector)?;
                Ok(selector.select_top_k(q, k)?)
            }
        }
    }

    pub fn build_prompt(&self, q: &str, cfg: &SessionConfig, history: &ConversationHistory) -> Result<Prompt, SessionError> {
        Ok(Prompt {
            query: q.to_string(),
            exemplars: self.exemplars(q, cfg.mode)?,
            history: history.clone(),
            descriptors: self.registry.export_descriptors(cfg.mode != Mode::ZeroCtx),
        })
    }

    fn request(&self, prompt: &Prompt, cfg: &SessionConfig) -> (CompletionRequest, String) {
        let rendered = prompt.render();
        let digest = rendered.digest();
        let req = CompletionRequest {
            model: cfg.model.clone(),
            messages: vec![
                ChatMessage::new(Role::System, rendered.system),
                ChatMessage::new(Role::User, rendered.user),
            ],
            tools: prompt.descriptors.clone(),
            temperature: cfg.temperature,
            max_tokens: cfg.max_tokens,
        };
        (req, digest)
    }

    /// Runs one session. `run_label` names the artifact directories, one per
    /// iteration (`<label>-<iteration>`).
    pub fn run_session(
        &self,
        q: &str,
        cfg: &SessionConfig,
        llm: &dyn LlmClient,
        run_label: &str,
    ) -> Result<SessionResult, SessionError> {
        if q.trim().is_empty() {
            return Err(SessionError::EmptyQuery);
        }
        if cfg.max_iterations == 0 {
            return Err(SessionError::NoIterations);
        }
        let descriptors = self.registry.export_descriptors(true);
        let mut history = ConversationHistory::default();
        let mut transcript = Vec::new();
        let mut usage = TokenUsage::default();
        let mut calls = 0;
        let mut pending: Option<Workflow> = None;
        let mut last_workflow: Option<Workflow> = None;

        let finish = |outcome, iterations, usage, calls, history, transcript| SessionResult {
            query: q.to_string(),
            mode: cfg.mode,
            outcome,
            iterations,
            usage,
            function_calls: calls,
            history,
            transcript,
        };
        let transport = |e: LlmError, last: Option<Workflow>, history: &ConversationHistory| SessionOutcome::Exhausted {
            last_workflow: last,
            last_error: history.last().and_then(|h| h.error.clone()),
            transport_error: Some(e.to_string()),
        };

        for iteration in 1..=cfg.max_iterations {
            let prompt = self.build_prompt(q, cfg, &history)?;
            let (req, prompt_digest) = self.request(&prompt, cfg);
            let mut turn = TranscriptTurn {
                iteration,
                prompt_digest,
                response: None,
                workflow: None,
                exits: Vec::new(),
                error: None,
                judgment: None,
                usage: TokenUsage::default(),
            };

            let parsed = match pending.take() {
                Some(w) => Ok(Reply::Workflow(w)),
                None => match llm.complete(&req) {
                    Ok(resp) => {
                        turn.usage += resp.usage;
                        usage += resp.usage;
                        let parsed = parse_llm_response(&resp);
                        turn.response = Some(resp);
                        parsed
                    }
                    Err(e) => {
                        transcript.push(turn);
                        let outcome = transport(e, last_workflow, &history);
                        return Ok(finish(outcome, iteration, usage, calls, history, transcript));
                    }
                },
            };

            let workflow = match parsed {
                Ok(Reply::Workflow(w)) => w,
                Ok(Reply::Complete) => {
                    let error = "completion signalled before any workflow ran cleanly".to_string();
                    history.push(HistoryEntry {
                        workflow: Workflow::default(),
                        exits: vec![],
                        error: Some(error.clone()),
                    });
                    turn.error = Some(error);
                    transcript.push(turn);
                    continue;
                }
                Err(e) => {
                    history.push(HistoryEntry {
                        workflow: Workflow::default(),
                        exits: vec![],
                        error: Some(e.to_string()),
                    });
                    turn.error = Some(e.to_string());
                    transcript.push(turn);
                    continue;
                }
            };
            turn.workflow = Some(workflow.clone());
            last_workflow = Some(workflow.clone());

            let report = validate_workflow(&workflow, &descriptors);
            if !report.is_valid() {
                let error = report.violations.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ");
                history.push(HistoryEntry {
                    workflow,
                    exits: vec![],
                    error: Some(error.clone()),
                });
                turn.error = Some(error);
                transcript.push(turn);
                continue;
            }

            let mut ctx = ExecutionContext::new(self.store.clone(), format!("{run_label}-{iteration}"));
            if let Some(dir) = &self.out_dir {
                ctx = ctx.with_out_dir(dir);
            }
            let outcome = execute_workflow(&workflow, &mut ctx, &self.registry);
            calls += outcome.calls();
            turn.exits = outcome.exits.clone();
            turn.error = outcome.error_context();
            history.push(HistoryEntry {
                workflow: workflow.clone(),
                exits: outcome.exits.clone(),
                error: outcome.error_context(),
            });
            if !outcome.is_clean() {
                transcript.push(turn);
                continue;
            }

            let prompt = self.build_prompt(q, cfg, &history)?;
            let (req, _) = self.request(&prompt, cfg);
            match llm.complete(&req) {
                Ok(resp) => {
                    turn.usage += resp.usage;
                    usage += resp.usage;
                    let judged = parse_llm_response(&resp);
                    turn.judgment = Some(resp);
                    transcript.push(turn);
                    match judged {
                        Ok(Reply::Complete) => {
                            let outcome = SessionOutcome::Completed {
                                workflow,
                                exits: outcome.exits,
                                digest: outcome.digest.unwrap_or_default(),
                                artifacts: ctx.written().to_vec(),
                            };
                            return Ok(finish(outcome, iteration, usage, calls, history, transcript));
                        }
                        Ok(Reply::Workflow(next)) => pending = Some(next),
                        Err(_) => {}
                    }
                }
                Err(e) => {
                    transcript.push(turn);
                    let outcome = transport(e, last_workflow, &history);
                    return Ok(finish(outcome, iteration, usage, calls, history, transcript));
                }
            }
        }

        let outcome = SessionOutcome::Exhausted {
            last_workflow,
            last_error: history.last().and_then(|h| h.error.clone()),
            transport_error: None,
        };
        Ok(finish(outcome, cfg.max_iterations, usage, calls, history, transcript))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::ToolCall;

    #[test]
    fn mode_names_round_trip() {
        for m in [Mode::ZeroCtx, Mode::Mini, Mode::Full, Mode::TopK(5)] {
            assert_eq!(m.to_string().parse::<Mode>().unwrap(), m);
        }
        assert_eq!("top3".parse::<Mode>().unwrap(), Mode::TopK(3));
        assert!("topk:0".parse::<Mode>().is_err());
        assert!("best".parse::<Mode>().is_err());
    }

    #[test]
    fn replies() {
        let calls = CompletionResponse {
            text: Some("ignored".into()),
            tool_calls: vec![
                ToolCall {
                    name: "load_network".into(),
                    arguments: "{\"path\":\"a.json\"}".into(),
                },
                ToolCall {
                    name: "run_powerflow".into(),
                    arguments: String::new(),
                },
            ],
            usage: TokenUsage::default(),
        };
        match parse_llm_response(&calls).unwrap() {
            Reply::Workflow(w) => assert_eq!(w.function_names(), ["load_network", "run_powerflow"]),
            other => panic!("{other:?}"),
        }
        assert_eq!(
            parse_llm_response(&CompletionResponse::text(" WORKFLOW_COMPLETE\n")).unwrap(),
            Reply::Complete
        );
        assert!(parse_llm_response(&CompletionResponse::default()).is_err());
        assert!(parse_llm_response(&CompletionResponse::text("sure, here you go")).is_err());
        let fenced = CompletionResponse::text("```json\n[{\"function\":\"total_load\",\"args\":{}}]\n```");
        assert!(matches!(parse_llm_response(&fenced), Ok(Reply::Workflow(w)) if w.len() == 1));
    }
}
