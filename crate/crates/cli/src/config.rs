//! Settings from the TOML config file merged with command-line flags.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::ValueEnum;
use gridflow_core::openai::EndpointConfig;
use gridflow_core::Mode;
use serde::Deserialize;

/// Where model replies come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    /// Replay the expert workflow of a matching benchmark query.
    Mock,
    /// Replay a JSON file of replies.
    Script,
    /// Call an OpenAI-compatible chat completions endpoint.
    Openai,
}

/// Contents of a config file. Relative paths are taken relative to the file.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub store: Option<PathBuf>,
    pub mode: Option<String>,
    pub k: Option<usize>,
    pub model: Option<String>,
    pub profile: Option<Profile>,
    pub out: Option<PathBuf>,
    pub max_iterations: Option<usize>,
    pub benchmark: Option<PathBuf>,
    pub script: Option<PathBuf>,
    pub cache: Option<PathBuf>,
    pub endpoint: Option<EndpointConfig>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
        let mut cfg: Self = toml::from_str(&text).with_context(|| format!("invalid config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut cfg.store, &mut cfg.out, &mut cfg.benchmark, &mut cfg.script, &mut cfg.cache]
            .into_iter()
            .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }
}

/// Command-line overrides; `None` defers to the config file.
#[derive(Debug, Default, Clone)]
pub struct Overrides {
    pub store: Option<PathBuf>,
    pub mode: Option<String>,
    pub k: Option<usize>,
    pub model: Option<String>,
    pub profile: Option<Profile>,
    pub out: Option<PathBuf>,
    pub max_iterations: Option<usize>,
    pub script: Option<PathBuf>,
}

/// Fully resolved settings.
#[derive(Debug, Clone)]
pub struct CliConfig {
    pub store: PathBuf,
    pub mode: Mode,
    pub model: String,
    pub profile: Profile,
    pub out: Option<PathBuf>,
    pub max_iterations: usize,
    pub benchmark: PathBuf,
    pub script: Option<PathBuf>,
    pub cache: Option<PathBuf>,
    pub endpoint: EndpointConfig,
    pub trace: bool,
    pub json: bool,
}

pub const DEFAULT_K: usize = 5;

/// Combines a mode name and an optional `k`, rejecting contradictions.
pub fn resolve_mode(mode: Option<&str>, k: Option<usize>) -> Result<Mode> {
    if k == Some(0) {
        bail!("k must be at least 1");
    }
    let Some(name) = mode else {
        return Ok(Mode::TopK(k.unwrap_or(DEFAULT_K)));
    };
    if name.trim().eq_ignore_ascii_case("topk") {
        return Ok(Mode::TopK(k.unwrap_or(DEFAULT_K)));
    }
    let parsed: Mode = name.parse().map_err(|e: gridflow_core::orchestrator::ModeError| anyhow::anyhow!(e.0))?;
    match (parsed, k) {
        (Mode::TopK(n), Some(k)) if n != k => bail!("mode {parsed} conflicts with k = {k}"),
        (Mode::TopK(_), _) | (_, None) => Ok(parsed),
        (_, Some(_)) => bail!("k only applies to topk mode, not {parsed}"),
    }
}

impl CliConfig {
    pub fn resolve(file: FileConfig, flags: Overrides, trace: bool, json: bool) -> Result<Self> {
        let store = flags.store.or(file.store).unwrap_or_else(|| PathBuf::from("data"));
        let mode = resolve_mode(
            flags.mode.as_deref().or(file.mode.as_deref()),
            flags.k.or(if flags.mode.is_some() { None } else { file.k }),
        )?;
        let profile = flags.profile.or(file.profile).unwrap_or(Profile::Mock);
        let mut endpoint = file.endpoint.unwrap_or_default();
        let model = match flags.model.or(file.model) {
            Some(m) => m,
            None if profile == Profile::Openai => endpoint.model.clone(),
            None => "mock".into(),
        };
        if profile == Profile::Openai {
            endpoint.model = model.clone();
        }
        let max_iterations = flags.max_iterations.or(file.max_iterations).unwrap_or(8);
        if max_iterations == 0 {
            bail!("max_iterations must be at least 1");
        }
        let script = flags.script.or(file.script);
        if profile == Profile::Script && script.is_none() {
            bail!("the script profile needs --script <file>");
        }
        Ok(Self {
            benchmark: file.benchmark.unwrap_or_else(|| store.join("benchmark.json")),
            store,
            mode,
            model,
            profile,
            out: flags.out.or(file.out),
            max_iterations,
            script,
            cache: file.cache,
            endpoint,
            trace,
            json,
        })
    }
}
