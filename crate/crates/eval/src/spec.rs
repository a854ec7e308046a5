//! Benchmark definition: queries, expert workflows, attempts, modes and models.

use std::collections::BTreeSet;
use std::path::Path;

use gridflow_core::{validate_workflow, Mode, Registry, Workflow};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchQuery {
    pub id: String,
    pub text: String,
    pub expected_calls: usize,
    pub expert_workflow: Workflow,
}

fn default_attempts() -> usize {
    5
}

fn default_iterations() -> usize {
    8
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkSpec {
    #[serde(default = "default_attempts")]
    pub attempts: usize,
    #[serde(default = "default_iterations")]
    pub max_iterations: usize,
    pub modes: Vec<String>,
    pub models: Vec<String>,
    pub queries: Vec<BenchQuery>,
}

#[derive(Debug, Error)]
pub enum SpecError {
    #[error("cannot read {path}")]
    Io { path: String, source: std::io::Error },
    #[error("invalid benchmark spec: {0}")]
    Json(#[from] serde_json::Error),
    #[error("attempts must be at least 1")]
    NoAttempts,
    #[error("max_iterations must be at least 1")]
    NoIterations,
    #[error("spec lists no {0}")]
    Empty(&'static str),
    #[error("duplicate {kind} {name:?}")]
    Duplicate { kind: &'static str, name: String },
    #[error("mode {0}")]
    Mode(String),
    #[error("query {id}: {reason}")]
    Query { id: String, reason: String },
}

impl BenchmarkSpec {
    pub fn from_json(text: &str) -> Result<Self, SpecError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self, SpecError> {
        let text = std::fs::read_to_string(path).map_err(|source| SpecError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }

    /// Checks the invariants and returns the parsed modes in spec order.
    pub fn validate(&self, registry: &Registry) -> Result<Vec<Mode>, SpecError> {
        if self.attempts == 0 {
            return Err(SpecError::NoAttempts);
        }
        if self.max_iterations == 0 {
            return Err(SpecError::NoIterations);
        }
        for (kind, list) in [("modes", self.modes.len()), ("models", self.models.len()), ("queries", self.queries.len())] {
            if list == 0 {
                return Err(SpecError::Empty(kind));
            }
        }
        let modes: Vec<Mode> = self
            .modes
            .iter()
            .map(|m| m.parse().map_err(|e: gridflow_core::orchestrator::ModeError| SpecError::Mode(e.0)))
            .collect::<Result<_, _>>()?;
        unique("mode", modes.iter().map(Mode::to_string))?;
        unique("model", self.models.iter().cloned())?;
        unique("query", self.queries.iter().map(|q| q.id.clone()))?;
        let pool = registry.export_descriptors(true);
        for q in &self.queries {
            let fail = |reason: String| SpecError::Query {
                id: q.id.clone(),
                reason,
            };
            if q.text.trim().is_empty() {
                return Err(fail("empty query text".into()));
            }
            let report = validate_workflow(&q.expert_workflow, &pool);
            if let Some(e) = report.violations.first() {
                return Err(fail(format!("expert workflow: {e}")));
            }
            if q.expert_workflow.len() != q.expected_calls {
                return Err(fail(format!(
                    "expert workflow has {} calls, expected {}",
                    q.expert_workflow.len(),
                    q.expected_calls
                )));
            }
        }
        Ok(modes)
    }
}

fn unique(kind: &'static str, names: impl Iterator<Item = String>) -> Result<(), SpecError> {
    let mut seen = BTreeSet::new();
    for name in names {
        if !seen.insert(name.clone()) {
            return Err(SpecError::Duplicate { kind, name });
        }
    }
    Ok(())
}
