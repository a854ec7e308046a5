//! Prompt assembly. Section order is fixed: instructions, functions,
//! examples, history, query. The first three form the system message and
//! the rest the user message.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::descriptor::DescriptorSet;
use crate::exemplar::ExpertPair;
use crate::history::ConversationHistory;

/// Exact reply that accepts the last clean workflow.
pub const COMPLETION_SENTINEL: &str = "WORKFLOW_COMPLETE";

const INSTRUCTIONS: &str = "\
You plan distribution-grid analyses. Answer the user's query by calling the available \
functions as tool calls, in the order they must run. Calls run one after another against \
the same in-memory network; refer to the loaded network as \"active\". Return the whole \
workflow in a single reply.
When the results in the history answer the query, reply with exactly WORKFLOW_COMPLETE \
and nothing else.";

#[derive(Debug, Clone, PartialEq)]
pub struct Prompt {
    pub query: String,
    pub exemplars: Vec<ExpertPair>,
    pub history: ConversationHistory,
    pub descriptors: DescriptorSet,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenderedPrompt {
    pub system: String,
    pub user: String,
}

impl RenderedPrompt {
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.system.as_bytes());
        h.update([0]);
        h.update(self.user.as_bytes());
        hex::encode(h.finalize())
    }
}

impl Prompt {
    pub fn render(&self) -> RenderedPrompt {
        let mut system = format!("## Instructions\n{INSTRUCTIONS}\n\n## Functions\n");
        for d in self.descriptors.iter() {
            system.push_str(&d.signature());
            system.push('\n');
            if let Some(text) = &d.description {
                for line in text.lines() {
                    system.push_str("  ");
                    system.push_str(line);
                    system.push('\n');
                }
            }
        }
        if !self.exemplars.is_empty() {
            system.push_str("\n## Examples\n");
            for (i, pair) in self.exemplars.iter().enumerate() {
                system.push_str(&format!(
                    "### Example {}\nQuery: {}\nWorkflow: {}\n",
                    i + 1,
                    pair.query.trim(),
                    pair.workflow.to_wire()
                ));
            }
        }

        let mut user = String::new();
        if !self.history.is_empty() {
            user.push_str("## History\n");
            for (i, entry) in self.history.entries().iter().enumerate() {
                user.push_str(&format!("### Round {}\nWorkflow: {}\n", i + 1, entry.workflow.to_wire()));
                if !entry.exits.is_empty() {
                    user.push_str("Results:\n");
                    for (j, y) in entry.exits.iter().enumerate() {
                        user.push_str(&format!("{}. {}\n", j + 1, y));
                    }
                }
                if let Some(err) = &entry.error {
                    user.push_str(&format!("Error: {err}\n"));
                }
            }
            let next = match self.history.last() {
                Some(e) if e.is_clean() => format!(
                    "The last workflow ran without errors. If its results answer the query, reply \
                     {COMPLETION_SENTINEL}; otherwise call the functions of a revised workflow."
                ),
                _ => "The last workflow failed. Call the functions of a revised workflow that fixes the error.".into(),
            };
            user.push('\n');
            user.push_str(&next);
            user.push_str("\n\n");
        }
        user.push_str("## Query\n");
        user.push_str(self.query.trim());
        user.push('\n');
        RenderedPrompt { system, user }
    }
}
