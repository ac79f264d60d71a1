//! Command-line flags shared by `analyze` and `eval`, and the effective
//! run configuration they produce.

use crate::CliError;
use clap::{Args, ValueEnum};
use flashtrace_core::config::{AnalysisConfig, TransferSig};
use flashtrace_core::pipeline::InputFormat;
use flashtrace_core::reasoning::{Engine, EngineConfig, EngineMode, OfflineRules};
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EngineArg {
    Offline,
    Remote,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    Solidity,
    IrJson,
}

impl From<FormatArg> for InputFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Solidity => InputFormat::Solidity,
            FormatArg::IrJson => InputFormat::IrJson,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct EngineFlags {
    /// Reasoning engine.
    #[arg(long, value_enum, default_value = "offline")]
    pub engine: EngineArg,
    /// Chat-completion endpoint URL (remote engine).
    #[arg(long)]
    pub endpoint: Option<String>,
    #[arg(long)]
    pub model: Option<String>,
    /// Name of the environment variable holding the API key.
    #[arg(long, value_name = "NAME")]
    pub api_key_env: Option<String>,
    #[arg(long, default_value_t = 60)]
    pub timeout_secs: u64,
    #[arg(long, default_value_t = 2)]
    pub max_retries: u32,
    /// Groups per filter request, at most 8.
    #[arg(long, default_value_t = 8)]
    pub batch_size: usize,
    /// In-flight requests, and contracts analyzed in parallel by `eval`.
    #[arg(long, default_value_t = 4)]
    pub concurrency: usize,
}

/// Each list flag replaces the built-in list; it never appends to it.
#[derive(Debug, Clone, Args)]
pub struct AnalysisFlags {
    /// Input format; guessed from the extension when omitted (.json is IR).
    #[arg(long, value_enum)]
    pub format: Option<FormatArg>,
    /// DEX/oracle read functions, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub dex_functions: Option<Vec<String>>,
    /// Transfer signatures as name:arity:recipient:amount, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub transfer_functions: Option<Vec<String>>,
    #[arg(long, value_delimiter = ',')]
    pub privileged_modifiers: Option<Vec<String>>,
    #[arg(long, value_delimiter = ',')]
    pub balance_mappings: Option<Vec<String>>,
    #[arg(long, value_delimiter = ',')]
    pub router_interfaces: Option<Vec<String>>,
    #[arg(long, value_delimiter = ',')]
    pub router_methods: Option<Vec<String>>,
    #[arg(long)]
    pub max_iterations: Option<usize>,
    #[arg(long)]
    pub max_paths_per_pair: Option<usize>,
    #[arg(long)]
    pub path_budget: Option<usize>,
    /// Write prompts, verdicts and transcripts under `stages/`.
    #[arg(long)]
    pub stage_dump: bool,
}

fn parse_sig(s: &str) -> Result<TransferSig, CliError> {
    let bad = || CliError::new("bad-config", format!("transfer signature {s:?} is not name:arity:recipient:amount"));
    let parts: Vec<&str> = s.split(':').collect();
    let [name, arity, recipient, amount] = parts.as_slice() else { return Err(bad()) };
    let n = |x: &str| x.parse::<usize>().map_err(|_| bad());
    let (arity, recipient, amount) = (n(arity)?, n(recipient)?, n(amount)?);
    if name.is_empty() || recipient >= arity || amount >= arity {
        return Err(bad());
    }
    Ok(TransferSig::new(name, arity, recipient, amount))
}

impl AnalysisFlags {
    pub fn analysis_config(&self) -> Result<AnalysisConfig, CliError> {
        let mut c = AnalysisConfig::default();
        if let Some(v) = &self.dex_functions {
            c.dex_functions = v.clone();
        }
        if let Some(v) = &self.transfer_functions {
            c.transfer_functions = v.iter().map(|s| parse_sig(s)).collect::<Result<_, _>>()?;
        }
        if let Some(v) = &self.privileged_modifiers {
            c.privileged_modifiers = v.clone();
        }
        if let Some(v) = &self.balance_mappings {
            c.balance_mappings = v.clone();
        }
        if let Some(v) = &self.router_interfaces {
            c.router_interfaces = v.clone();
        }
        if let Some(v) = &self.router_methods {
            c.router_methods = v.clone();
        }
        if let Some(n) = self.max_iterations {
            c.max_iterations = n;
        }
        if let Some(n) = self.max_paths_per_pair {
            c.max_paths_per_pair = n;
        }
        if let Some(n) = self.path_budget {
            c.path_expansion_budget = n;
        }
        Ok(c)
    }
}

impl EngineFlags {
    pub fn engine_config(&self) -> EngineConfig {
        EngineConfig {
            mode: match self.engine {
                EngineArg::Offline => EngineMode::Offline,
                EngineArg::Remote => EngineMode::Remote,
            },
            endpoint: self.endpoint.clone(),
            model: self.model.clone(),
            api_key_env: self.api_key_env.clone(),
            timeout_secs: self.timeout_secs,
            max_retries: self.max_retries,
            batch_size: self.batch_size,
            concurrency: self.concurrency,
            ..EngineConfig::default()
        }
    }
}

/// Everything that determines a run's output. Embedded in every report.
#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct RunConfig {
    pub command: &'static str,
    pub inputs: Vec<String>,
    pub format: Option<InputFormat>,
    pub engine: EngineConfig,
    pub analysis: AnalysisConfig,
    pub stage_dump: bool,
    pub concurrency: usize,
}

impl RunConfig {
    pub fn new(command: &'static str, inputs: Vec<String>, e: &EngineFlags, a: &AnalysisFlags) -> Result<Self, CliError> {
        let engine = e.engine_config();
        engine.validate().map_err(|x| CliError::coded(x.code(), x.to_string()))?;
        Ok(RunConfig {
            command,
            inputs,
            format: a.format.map(Into::into),
            engine,
            analysis: a.analysis_config()?,
            stage_dump: a.stage_dump,
            concurrency: e.concurrency,
        })
    }

    pub fn format_for(&self, path: &str) -> InputFormat {
        self.format.unwrap_or_else(|| InputFormat::guess(path))
    }

    pub fn engine(&self) -> Result<Engine, CliError> {
        let rules = OfflineRules::from_config(&self.analysis);
        match self.engine.mode {
            EngineMode::Offline => {
                let mut e = Engine::offline(rules);
                e.config = self.engine.clone();
                Ok(e)
            }
            EngineMode::Remote => Engine::remote(self.engine.clone(), rules).map_err(|x| CliError::coded(x.code(), x.to_string())),
        }
    }

    /// Values that must be scrubbed from every artifact.
    pub fn secrets(&self) -> Vec<String> {
        self.engine.api_key_env.as_deref().and_then(|n| std::env::var(n).ok()).filter(|v| !v.is_empty()).into_iter().collect()
    }

    /// The echo embedded in artifacts. Concurrency is left out: it cannot
    /// change any result, and runs that differ only in it must produce the
    /// same bytes.
    pub fn echo(&self) -> serde_json::Value {
        let mut v = serde_json::to_value(self).expect("config serializes");
        v.as_object_mut().expect("object").remove("concurrency");
        v["engine"].as_object_mut().expect("object").remove("concurrency");
        v
    }
}
