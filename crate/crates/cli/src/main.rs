//! `gridflow`: plan and run distribution-grid analyses from plain-language queries.

mod config;

use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use config::{CliConfig, FileConfig, Overrides, Profile};
use gridflow_core::embed::HashedBagOfWords;
use gridflow_core::openai::{tools_schema, OpenAiClient};
use gridflow_core::selector::{EmbeddingCache, Selector};
use gridflow_core::workflow::workflow_from_value;
use gridflow_core::{
    grid_registry, parse_workflow, validate_workflow, CompletionResponse, DataStore, ExemplarSet, LlmClient,
    MockUsage, Orchestrator, ScriptedMock, SessionConfig, SessionOutcome, SessionResult,
};
use gridflow_eval::table::{emit_per_query, emit_table, table_rows, Format};
use gridflow_eval::{run_benchmark, scripted_client, AttemptRef, BenchmarkSpec, RunOptions, ScriptKind};
use serde_json::json;

#[derive(Parser)]
#[command(name = "gridflow", version, about = "Plan and run distribution-grid analyses from plain-language queries")]
struct Cli {
    /// TOML config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Prompt mode: zeroctx, mini, full, topk or topk:<k>.
    #[arg(long, global = true)]
    mode: Option<String>,
    /// Number of retrieved examples in topk mode.
    #[arg(long, global = true)]
    k: Option<usize>,
    /// Model name sent to the endpoint.
    #[arg(long, global = true)]
    model: Option<String>,
    /// Source of model replies.
    #[arg(long, global = true, value_enum)]
    profile: Option<Profile>,
    /// Reply file for the script profile.
    #[arg(long, global = true)]
    script: Option<PathBuf>,
    /// Data store root holding networks/, exemplars.json and benchmark.json.
    #[arg(long, global = true)]
    store: Option<PathBuf>,
    /// Output directory for artifacts and benchmark results.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Iteration budget per session.
    #[arg(long, global = true)]
    max_iterations: Option<usize>,
    /// Print the session transcript to stderr.
    #[arg(long, global = true)]
    trace: bool,
    /// Machine-readable output on stdout.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Answer one query.
    Query {
        /// Query text, or a benchmark query id such as q1.
        #[arg(required = true)]
        text: Vec<String>,
    },
    /// Answer queries read line by line from stdin.
    Repl,
    /// Run a benchmark and write records and tables.
    Bench {
        /// Benchmark spec; defaults to benchmark.json in the store.
        spec: Option<PathBuf>,
        /// Cells run in parallel.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        /// With the mock profile, make each first plan fail once.
        #[arg(long)]
        inject_faults: bool,
    },
    /// Check a workflow file against the tool descriptors.
    Validate { file: PathBuf },
    /// List the available tools.
    Tools,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> Result<u8> {
    let file = match &cli.config {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::default(),
    };
    let flags = Overrides {
        store: cli.store,
        mode: cli.mode,
        k: cli.k,
        model: cli.model,
        profile: cli.profile,
        out: cli.out,
        max_iterations: cli.max_iterations,
        script: cli.script,
    };
    let cfg = CliConfig::resolve(file, flags, cli.trace, cli.json)?;
    match cli.command {
        Command::Query { text } => cmd_query(&text.join(" "), &cfg),
        Command::Repl => cmd_repl(&cfg),
        Command::Bench {
            spec,
            jobs,
            inject_faults,
        } => cmd_bench(spec.as_deref().unwrap_or(&cfg.benchmark), jobs, inject_faults, &cfg),
        Command::Validate { file } => cmd_validate(&file, &cfg),
        Command::Tools => cmd_tools(&cfg),
    }
}

fn build_agent(cfg: &CliConfig) -> Result<Orchestrator> {
    let corpus_path = cfg.store.join("exemplars.json");
    let corpus = ExemplarSet::load(&corpus_path).with_context(|| format!("loading {}", corpus_path.display()))?;
    let registry = grid_registry();
    corpus
        .validate(&registry.export_descriptors(true))
        .with_context(|| format!("checking {}", corpus_path.display()))?;
    let cache = cfg.cache.as_ref().map(EmbeddingCache::new);
    let selector = Selector::new(corpus.clone(), Arc::new(HashedBagOfWords), cache.as_ref())?;
    let mut agent = Orchestrator::new(Arc::new(registry), corpus, DataStore::new(&cfg.store)).with_selector(Arc::new(selector));
    if let Some(out) = &cfg.out {
        agent = agent.with_out_dir(out);
    }
    Ok(agent)
}

fn session_config(cfg: &CliConfig) -> SessionConfig {
    SessionConfig {
        mode: cfg.mode,
        max_iterations: cfg.max_iterations,
        model: cfg.model.clone(),
        ..SessionConfig::default()
    }
}

fn normalize(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

/// Builds the reply source for one interactive query. Returns the query text
/// to send, which differs from the input when a benchmark id was given.
fn client_for(cfg: &CliConfig, input: &str) -> Result<(String, Box<dyn LlmClient>)> {
    match cfg.profile {
        Profile::Mock => {
            let spec = BenchmarkSpec::load(&cfg.benchmark)?;
            let wanted = normalize(input);
            let hit = spec
                .queries
                .iter()
                .find(|q| q.id.eq_ignore_ascii_case(input.trim()) || normalize(&q.text) == wanted);
            Ok(match hit {
                Some(q) => (q.text.clone(), Box::new(scripted_client(ScriptKind::Expert, &q.expert_workflow))),
                None => {
                    let turns = vec![CompletionResponse::text("No scripted plan for this query."); cfg.max_iterations];
                    (input.to_string(), Box::new(ScriptedMock::with_usage(turns, MockUsage::Estimated)))
                }
            })
        }
        Profile::Script => {
            let path = cfg.script.as_ref().context("the script profile needs --script <file>")?;
            Ok((input.to_string(), Box::new(load_script(path)?)))
        }
        Profile::Openai => Ok((input.to_string(), Box::new(OpenAiClient::from_config(cfg.endpoint.clone())?))),
    }
}

/// A script is a JSON array whose items are either reply text or a workflow.
fn load_script(path: &Path) -> Result<ScriptedMock> {
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read script {}", path.display()))?;
    let items: Vec<serde_json::Value> =
        serde_json::from_str(&text).with_context(|| format!("script {} must be a JSON array", path.display()))?;
    let turns = items
        .iter()
        .enumerate()
        .map(|(i, item)| match item {
            serde_json::Value::String(s) => Ok(CompletionResponse::text(s.clone())),
            other => workflow_from_value(other)
                .map(|w| CompletionResponse::from_workflow(&w))
                .with_context(|| format!("script item {i}")),
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ScriptedMock::with_usage(turns, MockUsage::Estimated))
}

fn report(result: &SessionResult, cfg: &CliConfig) -> Result<u8> {
    if cfg.trace {
        eprintln!("{}", result.transcript_json());
    }
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    if cfg.json {
        let summary = json!({
            "query": result.query,
            "mode": result.mode.to_string(),
            "outcome": result.outcome,
            "iterations": result.iterations,
            "function_calls": result.function_calls,
            "tokens": result.usage.total(),
        });
        writeln!(out, "{summary}")?;
    } else {
        match &result.outcome {
            SessionOutcome::Completed { exits, artifacts, .. } => {
                for y in exits {
                    writeln!(out, "{y}")?;
                }
                for a in artifacts {
                    writeln!(out, "artifact: {}", a.display())?;
                }
            }
            SessionOutcome::Exhausted {
                last_error,
                transport_error,
                ..
            } => {
                let reason = transport_error.as_ref().or(last_error.as_ref());
                eprintln!(
                    "no finished workflow after {} iteration(s){}",
                    result.iterations,
                    reason.map(|r| format!(": {r}")).unwrap_or_default()
                );
            }
        }
        eprintln!(
            "{} iteration(s), {} function call(s), {} tokens",
            result.iterations,
            result.function_calls,
            result.usage.total()
        );
    }
    out.flush()?;
    Ok(if result.is_completed() { 0 } else { 2 })
}

fn cmd_query(text: &str, cfg: &CliConfig) -> Result<u8> {
    let agent = build_agent(cfg)?;
    let (query, client) = client_for(cfg, text)?;
    let result = agent.run_session(&query, &session_config(cfg), client.as_ref(), "query")?;
    report(&result, cfg)
}

fn cmd_repl(cfg: &CliConfig) -> Result<u8> {
    let agent = build_agent(cfg)?;
    let stdin = std::io::stdin();
    let mut n = 0;
    eprint!("> ");
    for line in stdin.lock().lines() {
        let line = line?;
        let text = line.trim();
        if matches!(text, "exit" | "quit" | ":q") {
            break;
        }
        if !text.is_empty() {
            n += 1;
            match client_for(cfg, text)
                .and_then(|(q, c)| Ok(agent.run_session(&q, &session_config(cfg), c.as_ref(), &format!("repl-{n}"))?))
            {
                Ok(result) => {
                    report(&result, cfg)?;
                }
                Err(e) => eprintln!("error: {e:#}"),
            }
        }
        eprint!("> ");
    }
    eprintln!();
    Ok(0)
}

fn cmd_bench(spec_path: &Path, jobs: usize, inject_faults: bool, cfg: &CliConfig) -> Result<u8> {
    let spec = BenchmarkSpec::load(spec_path)?;
    let agent = build_agent(cfg)?;
    spec.validate(&agent.registry)?;
    let out = cfg.out.clone().unwrap_or_else(|| PathBuf::from("results"));
    let bench_agent = Orchestrator {
        out_dir: None,
        ..agent
    };
    let factory: Box<gridflow_eval::ClientFactory<'_>> = match cfg.profile {
        Profile::Mock => {
            let kind = if inject_faults { ScriptKind::Fault } else { ScriptKind::Expert };
            Box::new(move |at: &AttemptRef<'_>| Ok(Arc::new(scripted_client(kind, &at.query.expert_workflow)) as Arc<dyn LlmClient>))
        }
        Profile::Openai => {
            let mut clients = std::collections::BTreeMap::new();
            for model in &spec.models {
                let mut endpoint = cfg.endpoint.clone();
                endpoint.model = model.clone();
                clients.insert(model.clone(), Arc::new(OpenAiClient::from_config(endpoint)?) as Arc<dyn LlmClient>);
            }
            Box::new(move |at: &AttemptRef<'_>| Ok(clients[at.model].clone()))
        }
        Profile::Script => bail!("bench runs with the mock or openai profile"),
    };
    let opts = RunOptions {
        jobs,
        records: Some(out.join("records.jsonl")),
        transcripts: Some(out.join("transcripts")),
        ..RunOptions::default()
    };
    let result = run_benchmark(&spec, &bench_agent, factory.as_ref(), &opts)?;
    let rows = table_rows(&result.records, &spec.models, &spec.modes);
    for (name, format) in [("table.md", Format::Markdown), ("table.csv", Format::Csv)] {
        let path = out.join(name);
        std::fs::write(&path, emit_table(&rows, &spec.modes, format)?).with_context(|| format!("writing {}", path.display()))?;
    }
    for (name, format) in [("per_query.md", Format::Markdown), ("per_query.csv", Format::Csv)] {
        let path = out.join(name);
        std::fs::write(&path, emit_per_query(&result.records, &spec.modes, format)?)
            .with_context(|| format!("writing {}", path.display()))?;
    }
    if cfg.json {
        let summary = json!({
            "records": result.records.len(),
            "incomplete": result.incomplete,
            "out": out,
        });
        println!("{summary}");
    } else {
        print!("{}", emit_table(&rows, &spec.modes, Format::Markdown)?);
        for cell in &result.incomplete {
            eprintln!(
                "incomplete: {} {} {} attempt {}: {}",
                cell.model, cell.mode, cell.query, cell.attempt, cell.error
            );
        }
        eprintln!("{} records in {}", result.records.len(), out.join("records.jsonl").display());
    }
    Ok(if result.is_complete() { 0 } else { 2 })
}

fn cmd_validate(path: &Path, cfg: &CliConfig) -> Result<u8> {
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    let workflow = parse_workflow(&text).with_context(|| format!("parsing {}", path.display()))?;
    let report = validate_workflow(&workflow, &grid_registry().export_descriptors(true));
    if cfg.json {
        println!("{}", serde_json::to_string(&report)?);
    } else if report.is_valid() {
        println!("valid: {} step(s)", workflow.len());
    } else {
        for v in &report.violations {
            println!("{v}");
        }
    }
    Ok(if report.is_valid() { 0 } else { 1 })
}

fn cmd_tools(cfg: &CliConfig) -> Result<u8> {
    let descriptors = grid_registry().export_descriptors(true);
    if cfg.json {
        println!("{}", serde_json::to_string_pretty(&tools_schema(&descriptors))?);
    } else {
        for d in descriptors.iter() {
            println!("{}", d.signature());
            if let Some(text) = &d.description {
                println!("    {text}");
            }
        }
    }
    Ok(0)
}
