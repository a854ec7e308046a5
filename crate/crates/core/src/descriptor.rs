//! Function descriptors: the machine-readable semantics of each tool, and
//! validation of workflows against them.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::workflow::Workflow;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ParamType {
    String,
    Integer,
    Number,
    Boolean,
    Enum,
    NetworkRef,
}

impl ParamType {
    pub fn as_str(self) -> &'static str {
        match self {
            ParamType::String => "string",
            ParamType::Integer => "integer",
            ParamType::Number => "number",
            ParamType::Boolean => "boolean",
            ParamType::Enum => "enum",
            ParamType::NetworkRef => "network-ref",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub name: String,
    #[serde(rename = "type")]
    pub kind: ParamType,
    pub required: bool,
    pub values: Option<Vec<String>>,
}

impl ParamSpec {
    pub fn required(name: &str, kind: ParamType) -> Self {
        Self {
            name: name.into(),
            kind,
            required: true,
            values: None,
        }
    }

    pub fn one_of(name: &str, values: &[&str]) -> Self {
        Self {
            name: name.into(),
            kind: ParamType::Enum,
            required: true,
            values: Some(values.iter().map(|v| v.to_string()).collect()),
        }
    }

    /// Whether `value` is acceptable for this parameter. Typing is lenient
    /// the way tool-calling models are: numbers may arrive as numeric
    /// strings, enum values in any case, and string parameters accept
    /// numbers.
    pub fn accepts(&self, value: &Value) -> bool {
        match self.kind {
            ParamType::String => matches!(value, Value::String(_) | Value::Number(_)),
            ParamType::Integer => as_f64(value).is_some_and(|v| v.fract() == 0.0),
            ParamType::Number => as_f64(value).is_some(),
            ParamType::Boolean => match value {
                Value::Bool(_) => true,
                Value::String(s) => matches!(s.to_ascii_lowercase().as_str(), "true" | "false"),
                _ => false,
            },
            ParamType::Enum => match value {
                Value::String(s) => self
                    .values
                    .iter()
                    .flatten()
                    .any(|v| v.eq_ignore_ascii_case(s.trim())),
                Value::Number(n) => self.values.iter().flatten().any(|v| *v == n.to_string()),
                _ => false,
            },
            ParamType::NetworkRef => match value {
                Value::String(s) => is_active_ref(s),
                _ => false,
            },
        }
    }
}

pub fn is_active_ref(s: &str) -> bool {
    matches!(s.trim().to_ascii_lowercase().as_str(), "active" | "network:active")
}

fn as_f64(value: &Value) -> Option<f64> {
    match value {
        Value::Number(n) => n.as_f64(),
        Value::String(s) => s.trim().parse::<f64>().ok().filter(|v| v.is_finite()),
        _ => None,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionDescriptor {
    pub name: String,
    pub description: Option<String>,
    pub params: Vec<ParamSpec>,
}

impl FunctionDescriptor {
    pub fn param(&self, name: &str) -> Option<&ParamSpec> {
        self.params.iter().find(|p| p.name == name)
    }

    /// `name(p1: type, p2?: type)` signature line.
    pub fn signature(&self) -> String {
        let params: Vec<String> = self
            .params
            .iter()
            .map(|p| {
                let opt = if p.required { "" } else { "?" };
                match &p.values {
                    Some(values) => format!("{}{opt}: {}", p.name, values.join("|")),
                    None => format!("{}{opt}: {}", p.name, p.kind.as_str()),
                }
            })
            .collect();
        format!("{}({})", self.name, params.join(", "))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DescriptorError {
    #[error("descriptor name must be nonempty")]
    EmptyName,
    #[error("duplicate function name {0}")]
    DuplicateFunction(String),
    #[error("{function}: duplicate parameter {param}")]
    DuplicateParam { function: String, param: String },
    #[error("{function}: enum parameter {param} needs at least one value")]
    EmptyEnum { function: String, param: String },
}

/// An ordered set of descriptors with unique names.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DescriptorSet {
    descriptors: Vec<FunctionDescriptor>,
}

impl DescriptorSet {
    pub fn new(descriptors: Vec<FunctionDescriptor>) -> Result<Self, DescriptorError> {
        let mut names = BTreeSet::new();
        for d in &descriptors {
            if d.name.trim().is_empty() {
                return Err(DescriptorError::EmptyName);
            }
            if !names.insert(d.name.as_str()) {
                return Err(DescriptorError::DuplicateFunction(d.name.clone()));
            }
            let mut params = BTreeSet::new();
            for p in &d.params {
                if !params.insert(p.name.as_str()) {
                    return Err(DescriptorError::DuplicateParam {
                        function: d.name.clone(),
                        param: p.name.clone(),
                    });
                }
                if p.kind == ParamType::Enum && p.values.as_ref().is_none_or(|v| v.is_empty()) {
                    return Err(DescriptorError::EmptyEnum {
                        function: d.name.clone(),
                        param: p.name.clone(),
                    });
                }
            }
        }
        Ok(Self { descriptors })
    }

    pub fn iter(&self) -> std::slice::Iter<'_, FunctionDescriptor> {
        self.descriptors.iter()
    }

    pub fn len(&self) -> usize {
        self.descriptors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.descriptors.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<&FunctionDescriptor> {
        self.descriptors.iter().find(|d| d.name == name)
    }

    pub fn without_descriptions(&self) -> Self {
        Self {
            descriptors: self
                .descriptors
                .iter()
                .map(|d| FunctionDescriptor {
                    description: None,
                    ..d.clone()
                })
                .collect(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("descriptor serialization cannot fail")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ViolationKind {
    UnknownFunction,
    UnknownParam,
    MissingParam,
    TypeMismatch,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub step: usize,
    pub function: String,
    pub kind: ViolationKind,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "step {} {}: {}", self.step + 1, self.function, self.detail)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

pub fn validate_workflow(w: &Workflow, set: &DescriptorSet) -> ValidationReport {
    let mut violations = Vec::new();
    for (step, s) in w.steps.iter().enumerate() {
        let mut push = |kind, detail: String| {
            violations.push(Violation {
                step,
                function: s.function.clone(),
                kind,
                detail,
            })
        };
        let Some(d) = set.get(&s.function) else {
            push(ViolationKind::UnknownFunction, "unknown function".into());
            continue;
        };
        for (name, value) in &s.args {
            match d.param(name) {
                None => push(ViolationKind::UnknownParam, format!("unknown parameter {name}")),
                Some(p) if !p.accepts(value) => push(
                    ViolationKind::TypeMismatch,
                    match &p.values {
                        Some(values) => format!("{name} must be one of {}, got {value}", values.join("|")),
                        None => format!("{name} must be {}, got {value}", p.kind.as_str()),
                    },
                ),
                Some(_) => {}
            }
        }
        for p in d.params.iter().filter(|p| p.required) {
            if !s.args.contains_key(&p.name) {
                push(ViolationKind::MissingParam, format!("missing required parameter {}", p.name));
            }
        }
    }
    ValidationReport { violations }
}
