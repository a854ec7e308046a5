#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::Arc;

use gridflow_core::embed::HashedBagOfWords;
use gridflow_core::selector::Selector;
use gridflow_core::{grid_registry, DataStore, ExemplarSet, LlmClient, LlmError, Orchestrator};
use gridflow_eval::{scripted_client, AttemptRef, BenchmarkSpec, ScriptKind};

pub fn data_root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

pub fn spec() -> BenchmarkSpec {
    BenchmarkSpec::load(&data_root().join("benchmark.json")).unwrap()
}

pub fn agent() -> Orchestrator {
    let corpus = ExemplarSet::load(&data_root().join("exemplars.json")).unwrap();
    let selector = Selector::new(corpus.clone(), Arc::new(HashedBagOfWords), None).unwrap();
    Orchestrator::new(Arc::new(grid_registry()), corpus, DataStore::new(data_root())).with_selector(Arc::new(selector))
}

pub fn replay(kind: ScriptKind) -> impl Fn(&AttemptRef<'_>) -> Result<Arc<dyn LlmClient>, LlmError> + Send + Sync {
    move |at| Ok(Arc::new(scripted_client(kind, &at.query.expert_workflow)) as Arc<dyn LlmClient>)
}
