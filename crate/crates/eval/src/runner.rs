//! Benchmark runner: every (model, mode, query) cell, `attempts` fresh sessions each.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use gridflow_core::orchestrator::SessionError;
use gridflow_core::{
    execute_workflow, workflow_equal, ExecutionContext, LlmClient, LlmError, Mode, Orchestrator, SessionConfig,
};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::records::{canonical, write_atomic, RecordError, RecordKey, RecordLog, RunRecord};
use crate::spec::{BenchQuery, BenchmarkSpec, SpecError};

/// The attempt a client is being built for.
#[derive(Debug, Clone, Copy)]
pub struct AttemptRef<'a> {
    pub model: &'a str,
    pub mode: Mode,
    pub query: &'a BenchQuery,
    pub attempt: usize,
}

impl AttemptRef<'_> {
    /// Run label, also used as the transcript file stem and artifact directory.
    pub fn label(&self) -> String {
        let raw = format!("{}-{}-{}-{}", self.model, self.mode, self.query.id, self.attempt);
        raw.chars()
            .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '.' { c } else { '_' })
            .collect()
    }
}

/// Builds the model client for one attempt.
pub type ClientFactory<'a> = dyn Fn(&AttemptRef<'_>) -> Result<Arc<dyn LlmClient>, LlmError> + Send + Sync + 'a;

#[derive(Debug, Clone)]
pub struct RunOptions {
    /// Worker threads; cells are the unit of parallelism.
    pub jobs: usize,
    /// JSON-lines file for records; enables resume.
    pub records: Option<PathBuf>,
    /// Directory for per-attempt transcripts.
    pub transcripts: Option<PathBuf>,
    pub temperature: f64,
    pub max_tokens: u32,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            jobs: 1,
            records: None,
            transcripts: None,
            temperature: 0.0,
            max_tokens: 1024,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IncompleteCell {
    pub model: String,
    pub mode: String,
    pub query: String,
    pub attempt: usize,
    pub error: String,
}

#[derive(Debug, Clone, Default)]
pub struct BenchReport {
    /// All records in canonical order, resumed ones included.
    pub records: Vec<RunRecord>,
    pub incomplete: Vec<IncompleteCell>,
    /// Result digest of each expert workflow, by query id.
    pub expert_digests: BTreeMap<String, String>,
}

impl BenchReport {
    pub fn is_complete(&self) -> bool {
        self.incomplete.is_empty()
    }
}

#[derive(Debug, Error)]
pub enum BenchError {
    #[error(transparent)]
    Spec(#[from] SpecError),
    #[error("expert workflow for {id} does not run cleanly: {error}")]
    Expert { id: String, error: String },
    #[error(transparent)]
    Records(#[from] RecordError),
    #[error("cannot write {path}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("session {label}")]
    Session { label: String, source: SessionError },
}

/// Executes every expert workflow once on a fresh context and returns the digests.
pub fn expert_digests(spec: &BenchmarkSpec, agent: &Orchestrator) -> Result<BTreeMap<String, String>, BenchError> {
    let mut out = BTreeMap::new();
    for q in &spec.queries {
        let mut ctx = ExecutionContext::new(agent.store.clone(), format!("expert-{}", q.id));
        let outcome = execute_workflow(&q.expert_workflow, &mut ctx, &agent.registry);
        match outcome.digest {
            Some(d) => out.insert(q.id.clone(), d),
            None => {
                return Err(BenchError::Expert {
                    id: q.id.clone(),
                    error: outcome.error_context().unwrap_or_default(),
                })
            }
        };
    }
    Ok(out)
}

struct Shared<'a> {
    spec: &'a BenchmarkSpec,
    agent: &'a Orchestrator,
    clients: &'a ClientFactory<'a>,
    opts: &'a RunOptions,
    digests: &'a BTreeMap<String, String>,
    done: &'a BTreeSet<RecordKey>,
    log: Option<&'a RecordLog>,
    records: Mutex<Vec<RunRecord>>,
    incomplete: Mutex<Vec<IncompleteCell>>,
    failure: Mutex<Option<BenchError>>,
}

impl Shared<'_> {
    fn run_cell(&self, model: &str, mode: Mode, query: &BenchQuery) -> Result<(), BenchError> {
        let cfg = SessionConfig {
            mode,
            max_iterations: self.spec.max_iterations,
            model: model.to_string(),
            temperature: self.opts.temperature,
            max_tokens: self.opts.max_tokens,
        };
        for attempt in 0..self.spec.attempts {
            let at = AttemptRef {
                model,
                mode,
                query,
                attempt,
            };
            let key = (model.to_string(), mode.to_string(), query.id.clone(), attempt);
            if self.done.contains(&key) {
                continue;
            }
            let label = at.label();
            let incomplete = |error: String| IncompleteCell {
                model: key.0.clone(),
                mode: key.1.clone(),
                query: key.2.clone(),
                attempt,
                error,
            };
            let client = match (self.clients)(&at) {
                Ok(c) => c,
                Err(e) => {
                    self.incomplete.lock().unwrap_or_else(|e| e.into_inner()).push(incomplete(e.to_string()));
                    return Ok(());
                }
            };
            let result = self
                .agent
                .run_session(&query.text, &cfg, client.as_ref(), &label)
                .map_err(|source| BenchError::Session {
                    label: label.clone(),
                    source,
                })?;
            if let gridflow_core::SessionOutcome::Exhausted {
                transport_error: Some(e),
                ..
            } = &result.outcome
            {
                self.incomplete.lock().unwrap_or_else(|e| e.into_inner()).push(incomplete(e.clone()));
                return Ok(());
            }
            let transcript = match &self.opts.transcripts {
                Some(dir) => {
                    let file = dir.join(format!("{label}.json"));
                    write_atomic(&file, &result.transcript_json()).map_err(|source| BenchError::Io {
                        path: file.clone(),
                        source,
                    })?;
                    Some(display_relative(&file, self.opts.records.as_deref()))
                }
                None => None,
            };
            let success = result.is_completed() && result.digest() == self.digests.get(&query.id).map(String::as_str);
            let precision = result.is_completed()
                && result
                    .final_workflow()
                    .is_some_and(|w| workflow_equal(w, &query.expert_workflow));
            let record = RunRecord {
                model: key.0,
                mode: key.1,
                query: key.2,
                attempt,
                success,
                precision,
                tokens: result.usage.total(),
                function_calls: result.function_calls as u64,
                iterations: result.iterations,
                transcript,
            };
            if let Some(log) = self.log {
                log.append(&record)?;
            }
            self.records.lock().unwrap_or_else(|e| e.into_inner()).push(record);
        }
        Ok(())
    }
}

fn display_relative(file: &Path, records: Option<&Path>) -> String {
    let base = records.and_then(Path::parent);
    let rel = base.and_then(|b| file.strip_prefix(b).ok()).unwrap_or(file);
    rel.to_string_lossy().replace('\\', "/")
}

/// Runs the benchmark. Attempts already present in the records file are skipped.
///
/// A transport failure stops the remaining attempts of that cell and marks it
/// incomplete; other cells continue.
pub fn run_benchmark(
    spec: &BenchmarkSpec,
    agent: &Orchestrator,
    clients: &ClientFactory<'_>,
    opts: &RunOptions,
) -> Result<BenchReport, BenchError> {
    let modes = spec.validate(&agent.registry)?;
    let digests = expert_digests(spec, agent)?;
    let (log, existing) = match &opts.records {
        Some(path) => {
            let (log, existing) = RecordLog::open(path)?;
            (Some(log), existing)
        }
        None => (None, Vec::new()),
    };
    let done: BTreeSet<RecordKey> = existing.iter().map(RunRecord::key).collect();
    let mut cells = Vec::new();
    for model in &spec.models {
        for mode in &modes {
            for query in &spec.queries {
                cells.push((model.as_str(), *mode, query));
            }
        }
    }
    let shared = Shared {
        spec,
        agent,
        clients,
        opts,
        digests: &digests,
        done: &done,
        log: log.as_ref(),
        records: Mutex::new(existing),
        incomplete: Mutex::new(Vec::new()),
        failure: Mutex::new(None),
    };
    let next = AtomicUsize::new(0);
    let worker = || loop {
        if shared.failure.lock().unwrap_or_else(|e| e.into_inner()).is_some() {
            return;
        }
        let i = next.fetch_add(1, Ordering::SeqCst);
        let Some((model, mode, query)) = cells.get(i) else {
            return;
        };
        if let Err(e) = shared.run_cell(model, *mode, query) {
            shared.failure.lock().unwrap_or_else(|e| e.into_inner()).get_or_insert(e);
            return;
        }
    };
    std::thread::scope(|s| {
        for _ in 0..opts.jobs.clamp(1, cells.len().max(1)) {
            s.spawn(worker);
        }
    });
    let Shared {
        records,
        incomplete,
        failure,
        ..
    } = shared;
    if let Some(e) = failure.into_inner().unwrap_or_else(|e| e.into_inner()) {
        return Err(e);
    }
    let records = canonical(records.into_inner().unwrap_or_else(|e| e.into_inner()));
    if let Some(log) = log {
        log.finish(&records)?;
    }
    let mut incomplete = incomplete.into_inner().unwrap_or_else(|e| e.into_inner());
    incomplete.sort_by(|a, b| (&a.model, &a.mode, &a.query).cmp(&(&b.model, &b.mode, &b.query)));
    Ok(BenchReport {
        records,
        incomplete,
        expert_digests: digests,
    })
}
