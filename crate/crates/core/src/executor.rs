//! Step-by-step workflow execution against an in-memory context.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Component, Path, PathBuf};

use gridflow_grid::{CurtailmentResult, FeederNetwork, GridError, InfeasibilityResult, PowerFlowSolution};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::registry::{Registry, ToolError};
use crate::workflow::Workflow;

/// Read-only data root: feeder files under `networks/`, time series under
/// `datasets/`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DataStore {
    root: PathBuf,
}

impl DataStore {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Resolves a store-relative network name. Absolute paths and `..`
    /// components are rejected.
    pub fn network_path(&self, name: &str) -> Result<PathBuf, ToolError> {
        let rel = Path::new(name.trim());
        if rel.as_os_str().is_empty() || !rel.components().all(|c| matches!(c, Component::Normal(_))) {
            return Err(ToolError::new(format!("invalid network path {name:?}")));
        }
        let rel = rel.strip_prefix("networks").unwrap_or(rel);
        Ok(self.root.join("networks").join(rel))
    }

    pub fn load_network(&self, name: &str) -> Result<FeederNetwork, GridError> {
        let path = self.network_path(name).map_err(|e| GridError::NotFound(e.0))?;
        if !path.is_file() {
            return Err(GridError::NotFound(name.trim().to_string()));
        }
        FeederNetwork::load(&path)
    }

    fn list(&self, sub: &str) -> Vec<String> {
        let mut out: Vec<String> = std::fs::read_dir(self.root.join(sub))
            .into_iter()
            .flatten()
            .flatten()
            .filter(|e| e.path().is_file())
            .filter_map(|e| e.file_name().into_string().ok())
            .collect();
        out.sort();
        out
    }

    pub fn networks(&self) -> Vec<String> {
        self.list("networks")
    }

    pub fn datasets(&self) -> Vec<String> {
        self.list("datasets")
    }
}

/// A file produced by a step, held in memory until the workflow finishes
/// cleanly.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Artifact {
    /// Stable kind such as `voltages.csv`; digests use this, never the path.
    pub kind: String,
    /// `<run-id>/<step>_<quantity>.<ext>`
    pub relative: PathBuf,
    pub contents: String,
}

/// Mutable state threaded through one workflow execution.
#[derive(Debug, Clone)]
pub struct ExecutionContext {
    pub store: DataStore,
    pub run_id: String,
    pub out_dir: Option<PathBuf>,
    /// Index of the step currently running.
    pub step: usize,
    pub network: Option<FeederNetwork>,
    pub powerflow: Option<PowerFlowSolution>,
    pub curtailment: Option<CurtailmentResult>,
    pub curtailment_applied: bool,
    pub infeasibility: Option<InfeasibilityResult>,
    pub infeasibility_applied: bool,
    staged: Vec<Artifact>,
    written: Vec<PathBuf>,
}

impl ExecutionContext {
    pub fn new(store: DataStore, run_id: impl Into<String>) -> Self {
        Self {
            store,
            run_id: run_id.into(),
            out_dir: None,
            step: 0,
            network: None,
            powerflow: None,
            curtailment: None,
            curtailment_applied: false,
            infeasibility: None,
            infeasibility_applied: false,
            staged: Vec::new(),
            written: Vec::new(),
        }
    }

    pub fn with_out_dir(mut self, dir: impl Into<PathBuf>) -> Self {
        self.out_dir = Some(dir.into());
        self
    }

    /// Replaces the active network and drops every result derived from the
    /// previous one.
    pub fn set_network(&mut self, net: FeederNetwork) {
        self.network = Some(net);
        self.powerflow = None;
        self.curtailment = None;
        self.curtailment_applied = false;
        self.infeasibility = None;
        self.infeasibility_applied = false;
    }

    /// Stages an artifact for the current step and returns the path it will
    /// have once written.
    pub fn stage(&mut self, quantity: &str, ext: &str, contents: String) -> PathBuf {
        let relative = PathBuf::from(&self.run_id).join(format!("{}_{quantity}.{ext}", self.step));
        let shown = match &self.out_dir {
            Some(dir) => dir.join(&relative),
            None => relative.clone(),
        };
        self.staged.push(Artifact {
            kind: format!("{quantity}.{ext}"),
            relative,
            contents,
        });
        shown
    }

    pub fn artifacts(&self) -> &[Artifact] {
        &self.staged
    }

    /// Paths written by the last clean execution.
    pub fn written(&self) -> &[PathBuf] {
        &self.written
    }

    /// Numeric results keyed `quantity/bus`, rounded to six decimals.
    pub fn numeric_results(&self) -> BTreeMap<String, String> {
        let mut out = BTreeMap::new();
        let mut put = |key: String, v: f64| {
            out.insert(key, gridflow_grid::plot::fixed6(v));
        };
        if let Some(pf) = &self.powerflow {
            for (bus, v) in &pf.voltages {
                put(format!("voltage/{bus:06}"), *v);
            }
        }
        if let Some(c) = &self.curtailment {
            put(format!("curtailment-{}/objective", c.norm.as_str()), c.objective);
            for (bus, v) in &c.curtailment {
                put(format!("curtailment-{}/{bus:06}", c.norm.as_str()), *v);
            }
        }
        if let Some(s) = &self.infeasibility {
            put(format!("slack-{}/objective", s.norm.as_str()), s.objective);
            for (bus, v) in &s.slacks {
                put(format!("slack-{}/{bus:06}", s.norm.as_str()), *v);
            }
        }
        out
    }

    fn commit(&mut self) -> std::io::Result<()> {
        let Some(dir) = self.out_dir.clone() else {
            return Ok(());
        };
        for a in &self.staged {
            let path = dir.join(&a.relative);
            if let Some(parent) = path.parent() {
                std::fs::create_dir_all(parent)?;
            }
            let tmp = path.with_extension("tmp");
            std::fs::write(&tmp, &a.contents)?;
            std::fs::rename(&tmp, &path)?;
            self.written.push(path);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum ExecutionStatus {
    Clean,
    Failed { step: usize, function: String, error: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecutionOutcome {
    pub exits: Vec<String>,
    pub status: ExecutionStatus,
    /// Result digest; present only for clean executions.
    pub digest: Option<String>,
}

impl ExecutionOutcome {
    pub fn is_clean(&self) -> bool {
        self.status == ExecutionStatus::Clean
    }

    /// Number of tool invocations made, the failing one included.
    pub fn calls(&self) -> usize {
        match self.status {
            ExecutionStatus::Clean => self.exits.len(),
            ExecutionStatus::Failed { .. } => self.exits.len() + 1,
        }
    }

    /// `step <i> <function>: <reason>` with a 1-based step number.
    pub fn error_context(&self) -> Option<String> {
        match &self.status {
            ExecutionStatus::Clean => None,
            ExecutionStatus::Failed { step, function, error } => Some(format!("step {} {function}: {error}", step + 1)),
        }
    }
}

impl fmt::Display for ExecutionOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for y in &self.exits {
            writeln!(f, "{y}")?;
        }
        if let Some(err) = self.error_context() {
            writeln!(f, "error: {err}")?;
        }
        Ok(())
    }
}

/// Runs the steps in order, stopping at the first tool error. Artifacts are
/// written only if every step succeeds.
pub fn execute_workflow(w: &Workflow, ctx: &mut ExecutionContext, registry: &Registry) -> ExecutionOutcome {
    let mut exits = Vec::with_capacity(w.len());
    for (i, step) in w.steps.iter().enumerate() {
        ctx.step = i;
        let result = match registry.lookup(&step.function) {
            Some(binding) => (binding.callable)(ctx, &step.args),
            None => Err(ToolError::new("unknown function")),
        };
        match result {
            Ok(y) => exits.push(y.lines().collect::<Vec<_>>().join(" ")),
            Err(e) => {
                return ExecutionOutcome {
                    exits,
                    status: ExecutionStatus::Failed {
                        step: i,
                        function: step.function.clone(),
                        error: e.0,
                    },
                    digest: None,
                }
            }
        }
    }
    if let Err(e) = ctx.commit() {
        let step = w.len().saturating_sub(1);
        return ExecutionOutcome {
            exits: exits[..step].to_vec(),
            status: ExecutionStatus::Failed {
                step,
                function: w.steps.get(step).map(|s| s.function.clone()).unwrap_or_default(),
                error: format!("cannot write artifacts: {e}"),
            },
            digest: None,
        };
    }
    let last = exits.last().cloned().unwrap_or_default();
    let digest = result_digest(ctx, &last);
    ExecutionOutcome {
        exits,
        status: ExecutionStatus::Clean,
        digest: Some(digest),
    }
}

/// Canonical digest of a clean execution: the final exit string with
/// artifact paths replaced by their kinds, the rounded numeric results in key
/// order, and the sorted artifact kinds.
pub fn result_digest(ctx: &ExecutionContext, final_exit: &str) -> String {
    let mut exit = final_exit.to_string();
    for a in ctx.artifacts() {
        let shown = match &ctx.out_dir {
            Some(dir) => dir.join(&a.relative),
            None => a.relative.clone(),
        };
        exit = exit.replace(&shown.display().to_string(), &format!("<{}>", a.kind));
    }
    let mut h = Sha256::new();
    h.update(b"exit\n");
    h.update(exit.as_bytes());
    h.update(b"\nresults\n");
    for (k, v) in ctx.numeric_results() {
        h.update(format!("{k}={v}\n").as_bytes());
    }
    h.update(b"artifacts\n");
    let mut kinds: Vec<&str> = ctx.artifacts().iter().map(|a| a.kind.as_str()).collect();
    kinds.sort_unstable();
    for k in kinds {
        h.update(k.as_bytes());
        h.update(b"\n");
    }
    hex::encode(h.finalize())
}
