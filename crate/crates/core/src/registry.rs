//! The function pool: descriptor names bound to callable implementations.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::descriptor::{DescriptorSet, FunctionDescriptor};
use crate::executor::ExecutionContext;
use crate::workflow::Args;

/// One-line failure reason returned by a tool. The text is fed back to the
/// model verbatim.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{0}")]
pub struct ToolError(pub String);

impl ToolError {
    pub fn new(reason: impl Into<String>) -> Self {
        let reason: String = reason.into();
        Self(reason.lines().collect::<Vec<_>>().join(" "))
    }
}

pub type ToolFn = dyn Fn(&mut ExecutionContext, &Args) -> Result<String, ToolError> + Send + Sync;

#[derive(Clone)]
pub struct ToolBinding {
    pub descriptor: FunctionDescriptor,
    pub callable: Arc<ToolFn>,
}

impl ToolBinding {
    pub fn new<F>(descriptor: FunctionDescriptor, callable: F) -> Self
    where
        F: Fn(&mut ExecutionContext, &Args) -> Result<String, ToolError> + Send + Sync + 'static,
    {
        Self {
            descriptor,
            callable: Arc::new(callable),
        }
    }

    pub fn name(&self) -> &str {
        &self.descriptor.name
    }
}

impl fmt::Debug for ToolBinding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ToolBinding").field("descriptor", &self.descriptor).finish_non_exhaustive()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("function {0} is already registered")]
pub struct DuplicateError(pub String);

#[derive(Debug, Clone, Default)]
pub struct Registry {
    bindings: BTreeMap<String, ToolBinding>,
}

impl Registry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, binding: ToolBinding) -> Result<(), DuplicateError> {
        let name = binding.name().to_string();
        if self.bindings.contains_key(&name) {
            return Err(DuplicateError(name));
        }
        self.bindings.insert(name, binding);
        Ok(())
    }

    pub fn lookup(&self, name: &str) -> Option<&ToolBinding> {
        self.bindings.get(name)
    }

    pub fn len(&self) -> usize {
        self.bindings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bindings.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.bindings.keys().map(String::as_str)
    }

    /// Descriptors in lexicographic name order, optionally without their
    /// textual descriptions.
    pub fn export_descriptors(&self, include_descriptions: bool) -> DescriptorSet {
        let all: Vec<FunctionDescriptor> = self.bindings.values().map(|b| b.descriptor.clone()).collect();
        let set = DescriptorSet::new(all).expect("registry names are unique");
        if include_descriptions {
            set
        } else {
            set.without_descriptions()
        }
    }
}
