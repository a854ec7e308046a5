//! Expert workflow-query pairs used as in-context examples.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::descriptor::{validate_workflow, DescriptorSet};
use crate::workflow::Workflow;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpertPair {
    pub query: String,
    pub workflow: Workflow,
}

#[derive(Debug, Error)]
pub enum ExemplarError {
    #[error("cannot read {path}")]
    Io { path: String, source: std::io::Error },
    #[error("malformed exemplar file: {0}")]
    Json(#[from] serde_json::Error),
    #[error("exemplar {index} has an empty query")]
    EmptyQuery { index: usize },
    #[error("exemplar {index} does not validate: {detail}")]
    Invalid { index: usize, detail: String },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ExemplarSet {
    pub pairs: Vec<ExpertPair>,
}

impl ExemplarSet {
    pub fn from_json(text: &str) -> Result<Self, ExemplarError> {
        let set: ExemplarSet = serde_json::from_str(text)?;
        if let Some(index) = set.pairs.iter().position(|p| p.query.trim().is_empty()) {
            return Err(ExemplarError::EmptyQuery { index });
        }
        Ok(set)
    }

    pub fn load(path: &Path) -> Result<Self, ExemplarError> {
        let text = std::fs::read_to_string(path).map_err(|source| ExemplarError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }

    /// Checks every workflow against the tool pool.
    pub fn validate(&self, descriptors: &DescriptorSet) -> Result<(), ExemplarError> {
        for (index, pair) in self.pairs.iter().enumerate() {
            let report = validate_workflow(&pair.workflow, descriptors);
            if let Some(v) = report.violations.first() {
                return Err(ExemplarError::Invalid {
                    index,
                    detail: v.to_string(),
                });
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Hex SHA-256 of the queries, in corpus order.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        for p in &self.pairs {
            h.update((p.query.len() as u64).to_le_bytes());
            h.update(p.query.as_bytes());
        }
        hex::encode(h.finalize())
    }
}
