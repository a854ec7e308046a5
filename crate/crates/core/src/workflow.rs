//! Workflows: ordered `(function, arguments)` pairs and their JSON wire format.
//!
//! The wire format is a JSON array of `{"function": <name>, "args": {...}}`
//! objects. Argument maps are key-sorted, so serialization is canonical and
//! `parse_workflow(&w.to_wire()) == w` for every workflow.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Number, Value};
use thiserror::Error;

pub type Args = BTreeMap<String, Value>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkflowStep {
    pub function: String,
    #[serde(default)]
    pub args: Args,
}

impl WorkflowStep {
    pub fn new(function: impl Into<String>) -> Self {
        Self {
            function: function.into(),
            args: Args::new(),
        }
    }

    pub fn arg(mut self, name: impl Into<String>, value: impl Into<Value>) -> Self {
        self.args.insert(name.into(), value.into());
        self
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Workflow {
    pub steps: Vec<WorkflowStep>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("malformed JSON at line {line}, column {column}: {reason}")]
    Json { line: usize, column: usize, reason: String },
    #[error("workflow must be a JSON array of steps")]
    NotArray,
    #[error("step {index}: {reason}")]
    Step { index: usize, reason: String },
}

impl Workflow {
    pub fn new(steps: Vec<WorkflowStep>) -> Self {
        Self { steps }
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn function_names(&self) -> Vec<&str> {
        self.steps.iter().map(|s| s.function.as_str()).collect()
    }

    /// Compact canonical wire text.
    pub fn to_wire(&self) -> String {
        serde_json::to_string(self).expect("workflow serialization cannot fail")
    }
}

impl fmt::Display for Workflow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_wire())
    }
}

pub fn parse_workflow(text: &str) -> Result<Workflow, ParseError> {
    let value: Value = serde_json::from_str(text).map_err(|e| ParseError::Json {
        line: e.line(),
        column: e.column(),
        reason: e.to_string(),
    })?;
    workflow_from_value(&value)
}

pub fn workflow_from_value(value: &Value) -> Result<Workflow, ParseError> {
    let Value::Array(items) = value else {
        return Err(ParseError::NotArray);
    };
    let mut steps = Vec::with_capacity(items.len());
    for (index, item) in items.iter().enumerate() {
        let fail = |reason: &str| ParseError::Step {
            index,
            reason: reason.to_string(),
        };
        let Value::Object(obj) = item else {
            return Err(fail("step must be an object"));
        };
        let function = match obj.get("function") {
            Some(Value::String(name)) if !name.trim().is_empty() => name.clone(),
            Some(Value::String(_)) => return Err(fail("empty function name")),
            Some(_) => return Err(fail("function name must be a string")),
            None => return Err(fail("missing function name")),
        };
        let args = match obj.get("args") {
            None | Some(Value::Null) => Args::new(),
            Some(Value::Object(map)) => map.iter().map(|(k, v)| (k.clone(), v.clone())).collect(),
            Some(_) => return Err(fail("args must be an object")),
        };
        if let Some(extra) = obj.keys().find(|k| *k != "function" && *k != "args") {
            return Err(fail(&format!("unexpected key \"{extra}\"")));
        }
        steps.push(WorkflowStep { function, args });
    }
    Ok(Workflow { steps })
}

/// Parses a tool-call argument payload (a JSON object, or empty text).
pub fn parse_args(text: &str) -> Result<Args, String> {
    if text.trim().is_empty() {
        return Ok(Args::new());
    }
    match serde_json::from_str::<Value>(text) {
        Ok(Value::Object(map)) => Ok(map.into_iter().collect()),
        Ok(Value::Null) => Ok(Args::new()),
        Ok(_) => Err("arguments must be a JSON object".into()),
        Err(e) => Err(format!("malformed arguments: {e}")),
    }
}

/// Canonical form of an argument value used for workflow equality:
///
/// | input                              | canonical            |
/// |------------------------------------|----------------------|
/// | numeric string (`"7"`, `" 0.5 "`)  | number (`7`, `0.5`)  |
/// | integral float (`7.0`, `-0.0`)     | integer (`7`, `0`)   |
/// | other string                       | trimmed, lowercased  |
/// | `"network:active"`                 | `"active"`           |
/// | arrays, objects                    | element-wise         |
///
/// `"all"` is a string and therefore never equal to any number.
pub fn canonical_value(value: &Value) -> Value {
    match value {
        Value::String(s) => {
            let t = s.trim();
            if let Some(n) = parse_number(t) {
                return n;
            }
            let lower = t.to_lowercase();
            match lower.strip_prefix("network:") {
                Some(rest) => Value::String(rest.to_string()),
                None => Value::String(lower),
            }
        }
        Value::Number(n) => canonical_number(n.as_f64().unwrap_or(f64::NAN)).unwrap_or_else(|| value.clone()),
        Value::Array(items) => Value::Array(items.iter().map(canonical_value).collect()),
        Value::Object(map) => Value::Object(
            map.iter()
                .map(|(k, v)| (k.clone(), canonical_value(v)))
                .collect::<Map<String, Value>>(),
        ),
        Value::Bool(_) | Value::Null => value.clone(),
    }
}

fn parse_number(s: &str) -> Option<Value> {
    if s.is_empty() || !s.bytes().all(|b| b.is_ascii_digit() || b"+-.eE".contains(&b)) {
        return None;
    }
    s.parse::<f64>().ok().and_then(canonical_number)
}

fn canonical_number(v: f64) -> Option<Value> {
    if !v.is_finite() {
        return None;
    }
    if v.fract() == 0.0 && v.abs() < 9.0e15 {
        return Some(Value::from(v as i64));
    }
    Number::from_f64(v).map(Value::Number)
}

pub fn canonical_args(args: &Args) -> Args {
    args.iter().map(|(k, v)| (k.clone(), canonical_value(v))).collect()
}

/// Exact workflow match: same functions in the same order with arguments
/// equal after canonicalization.
pub fn workflow_equal(a: &Workflow, b: &Workflow) -> bool {
    a.steps.len() == b.steps.len()
        && a.steps
            .iter()
            .zip(&b.steps)
            .all(|(x, y)| x.function == y.function && canonical_args(&x.args) == canonical_args(&y.args))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn empty_array_is_an_empty_workflow() {
        assert_eq!(parse_workflow("[]").unwrap(), Workflow::default());
    }

    #[test]
    fn missing_function_is_reported_with_position() {
        let err = parse_workflow(r#"[{"args":{}}]"#).unwrap_err();
        assert_eq!(
            err,
            ParseError::Step {
                index: 0,
                reason: "missing function name".into()
            }
        );
    }

    #[test]
    fn rejects_non_object_args_and_non_arrays() {
        assert!(matches!(
            parse_workflow(r#"[{"function":"f","args":[1]}]"#),
            Err(ParseError::Step { index: 0, .. })
        ));
        assert_eq!(parse_workflow(r#"{"function":"f"}"#), Err(ParseError::NotArray));
        assert!(matches!(parse_workflow("[{"), Err(ParseError::Json { line: 1, .. })));
    }

    #[test]
    fn canonicalization_table() {
        assert_eq!(canonical_value(&json!("7")), json!(7));
        assert_eq!(canonical_value(&json!(7.0)), json!(7));
        assert_eq!(canonical_value(&json!(-0.0)), json!(0));
        assert_eq!(canonical_value(&json!(" 0.5 ")), json!(0.5));
        assert_eq!(canonical_value(&json!("Capacitor")), json!("capacitor"));
        assert_eq!(canonical_value(&json!("network:active")), json!("active"));
        assert_eq!(canonical_value(&json!("all")), json!("all"));
        assert_ne!(canonical_value(&json!("all")), canonical_value(&json!(0)));
        assert_eq!(canonical_value(&json!("south_hero.json")), json!("south_hero.json"));
        assert_eq!(canonical_value(&json!("1e3")), json!(1000));
        assert_eq!(canonical_value(&json!("e")), json!("e"));
    }

    #[test]
    fn numeric_string_matches_number() {
        let a = Workflow::new(vec![WorkflowStep::new("top_curtailed_buses").arg("n", "7")]);
        let b = Workflow::new(vec![WorkflowStep::new("top_curtailed_buses").arg("n", 7)]);
        assert!(workflow_equal(&a, &b));
    }

    #[test]
    fn order_matters() {
        let a = Workflow::new(vec![WorkflowStep::new("a"), WorkflowStep::new("b")]);
        let b = Workflow::new(vec![WorkflowStep::new("b"), WorkflowStep::new("a")]);
        assert!(!workflow_equal(&a, &b));
        assert!(workflow_equal(&a, &a));
    }

    #[test]
    fn tool_argument_text() {
        assert_eq!(parse_args("").unwrap(), Args::new());
        assert_eq!(parse_args(r#"{"n": 5}"#).unwrap()["n"], json!(5));
        assert!(parse_args("[1]").is_err());
    }
}
