//! Conversation history accumulated across correction rounds of one session.

use serde::{Deserialize, Serialize};

use crate::workflow::Workflow;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub workflow: Workflow,
    /// Exit strings of the steps that ran, in order.
    pub exits: Vec<String>,
    /// Error context when the round failed, formatted `step <i> <function>: <reason>`.
    pub error: Option<String>,
}

impl HistoryEntry {
    pub fn is_clean(&self) -> bool {
        self.error.is_none()
    }
}

/// Append-only list of rounds.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ConversationHistory {
    entries: Vec<HistoryEntry>,
}

impl ConversationHistory {
    pub fn push(&mut self, entry: HistoryEntry) {
        debug_assert!(entry.exits.len() <= entry.workflow.len());
        self.entries.push(entry);
    }

    pub fn entries(&self) -> &[HistoryEntry] {
        &self.entries
    }

    pub fn last(&self) -> Option<&HistoryEntry> {
        self.entries.last()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}
