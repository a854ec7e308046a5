//! Orchestration core: workflows and their descriptors, the function pool,
//! exemplar retrieval, LLM clients, workflow execution and the
//! build-execute-feedback-correct loop.

pub mod descriptor;
pub mod embed;
pub mod exemplar;
pub mod executor;
pub mod history;
pub mod llm;
pub mod openai;
pub mod orchestrator;
pub mod prompt;
pub mod registry;
pub mod selector;
pub mod tools;
pub mod workflow;

pub use descriptor::{validate_workflow, DescriptorSet, FunctionDescriptor, ParamSpec, ParamType, ValidationReport};
pub use exemplar::{ExemplarSet, ExpertPair};
pub use executor::{execute_workflow, DataStore, ExecutionContext, ExecutionOutcome, ExecutionStatus};
pub use history::{ConversationHistory, HistoryEntry};
pub use llm::{CompletionRequest, CompletionResponse, LlmClient, LlmError, MockUsage, ScriptedMock, TokenUsage};
pub use orchestrator::{parse_llm_response, Mode, Orchestrator, Reply, SessionConfig, SessionOutcome, SessionResult};
pub use prompt::{Prompt, COMPLETION_SENTINEL};
pub use registry::{Registry, ToolBinding, ToolError};
pub use tools::grid_registry;
pub use workflow::{parse_workflow, workflow_equal, Workflow, WorkflowStep};
