//! Scripted mock replies that replay expert workflows.

use gridflow_core::{CompletionResponse, MockUsage, ScriptedMock, Workflow, COMPLETION_SENTINEL};

/// How a scripted model behaves on a query.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScriptKind {
    /// Emit the expert workflow, then declare completion.
    Expert,
    /// First emit the expert workflow without its `load_network` step, then
    /// repair it after the tool error and declare completion.
    Fault,
}

/// Replies for a clean replay: the plan, then the completion sentinel.
pub fn expert_script(w: &Workflow) -> Vec<CompletionResponse> {
    vec![
        CompletionResponse::from_workflow(w),
        CompletionResponse::text(COMPLETION_SENTINEL),
    ]
}

/// Replies that fail once on a missing network and then recover.
///
/// Workflows without a `load_network` step fall back to [`expert_script`].
pub fn fault_script(w: &Workflow) -> Vec<CompletionResponse> {
    let Some(first) = w.steps.iter().position(|s| s.function == "load_network") else {
        return expert_script(w);
    };
    let mut broken = w.clone();
    broken.steps.remove(first);
    if broken.is_empty() {
        return expert_script(w);
    }
    vec![
        CompletionResponse::from_workflow(&broken),
        CompletionResponse::from_workflow(w),
        CompletionResponse::text(COMPLETION_SENTINEL),
    ]
}

/// A mock client for `kind` whose token counts are estimated from the traffic.
pub fn scripted_client(kind: ScriptKind, w: &Workflow) -> ScriptedMock {
    let turns = match kind {
        ScriptKind::Expert => expert_script(w),
        ScriptKind::Fault => fault_script(w),
    };
    ScriptedMock::with_usage(turns, MockUsage::Estimated)
}
