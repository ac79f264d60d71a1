//! Two-stage reasoning over group summaries: a path-filtering stage that
//! discards groups incompatible with the attack model, then an attack
//! simulation stage for the survivors. Prompts are rendered from templates
//! and answered either by a remote chat-completion endpoint or by a
//! deterministic offline rule engine.

mod client;
mod offline;
mod parse;
mod templates;

pub use client::{CompletionClient, HttpClient, ScriptedClient};
pub use offline::OfflineRules;
pub use parse::{extract_documents, parse_filter_batch, parse_verdict};
pub use templates::{
    estimate_tokens, render_filter_batch, render_filter_prompt, render_simulation_prompt, unexpanded_placeholders, PLACEHOLDERS,
};

use crate::grouping::GroupSummary;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

/// Filter batches never exceed this many groups.
pub const MAX_BATCH: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Stage {
    PathFiltering,
    AttackSimulation,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ReasoningError {
    #[error("summary-incomplete: {0}")]
    SummaryIncomplete(String),
    #[error("not-filtered: group {0} was discarded by the filter stage")]
    NotFiltered(String),
    #[error("engine-unreachable: {0}")]
    EngineUnreachable(String),
    #[error("unparseable-response: {0}")]
    UnparseableResponse(String),
    #[error("bad-config: {0}")]
    BadConfig(String),
}

impl ReasoningError {
    pub fn code(&self) -> &'static str {
        match self {
            ReasoningError::SummaryIncomplete(_) => "summary-incomplete",
            ReasoningError::NotFiltered(_) => "not-filtered",
            ReasoningError::EngineUnreachable(_) => "engine-unreachable",
            ReasoningError::UnparseableResponse(_) => "unparseable-response",
            ReasoningError::BadConfig(_) => "bad-config",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct PromptInstance {
    pub stage: Stage,
    pub group_id: String,
    pub group_key: String,
    pub rendered_text: String,
    pub placeholder_bindings: BTreeMap<String, String>,
    /// What the prompt was rendered from; the offline engine reads this.
    #[serde(skip)]
    pub summary: GroupSummary,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct FilterAnswers {
    pub access_control: String,
    pub economic_intent: String,
    pub mitigation: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct FilterVerdict {
    pub group_id: String,
    pub keep: bool,
    pub answers: FilterAnswers,
    pub raw_response: String,
    /// No usable answer after retries; `keep` is the default.
    #[serde(default)]
    pub undetermined: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SimulationSteps {
    pub price_source: String,
    pub attack_scenario: String,
    pub cash_out: String,
    pub defense_check: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SimulationVerdict {
    pub group_id: String,
    pub vulnerable: bool,
    pub vulnerable_functions: Vec<String>,
    pub vulnerable_paths: Vec<String>,
    pub attack_explanation: String,
    pub steps: SimulationSteps,
    pub raw_response: String,
    #[serde(default)]
    pub undetermined: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Verdict {
    Filter(FilterVerdict),
    Simulation(SimulationVerdict),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EngineMode {
    Remote,
    Offline,
}

/// Verdicts and transcripts of one filter request.
type BatchOutput = (Vec<FilterVerdict>, Vec<Transcript>);

/// How the reasoning stages are answered. Holds the *name* of the
/// environment variable with the credential, never the credential.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct EngineConfig {
    pub mode: EngineMode,
    pub endpoint: Option<String>,
    pub model: Option<String>,
    pub api_key_env: Option<String>,
    pub timeout_secs: u64,
    pub max_retries: u32,
    pub batch_size: usize,
    pub concurrency: usize,
    /// Ask the provider for its most deterministic sampling.
    pub deterministic: bool,
    /// Rough per-prompt token budget.
    pub token_budget: usize,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            mode: EngineMode::Offline,
            endpoint: None,
            model: None,
            api_key_env: None,
            timeout_secs: 60,
            max_retries: 2,
            batch_size: MAX_BATCH,
            concurrency: 4,
            deterministic: true,
            token_budget: 16_000,
        }
    }
}

impl EngineConfig {
    pub fn validate(&self) -> Result<(), ReasoningError> {
        if !(1..=MAX_BATCH).contains(&self.batch_size) {
            return Err(ReasoningError::BadConfig(format!("batch size must be between 1 and {MAX_BATCH}")));
        }
        if self.concurrency == 0 {
            return Err(ReasoningError::BadConfig("concurrency must be at least 1".into()));
        }
        if self.mode == EngineMode::Remote {
            if self.endpoint.as_deref().unwrap_or("").is_empty() {
                return Err(ReasoningError::BadConfig("remote mode needs an endpoint".into()));
            }
            if self.api_key_env.as_deref().unwrap_or("").is_empty() {
                return Err(ReasoningError::BadConfig("remote mode needs --api-key-env".into()));
            }
        }
        Ok(())
    }
}

/// One request/response exchange, kept for stage dumps.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct Transcript {
    pub stage: Stage,
    pub group_ids: Vec<String>,
    pub attempt: u32,
    pub request: String,
    pub response: Option<String>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StageOutput<V> {
    pub verdicts: Vec<V>,
    pub transcripts: Vec<Transcript>,
}

pub struct Engine {
    pub config: EngineConfig,
    pub rules: OfflineRules,
    client: Option<Box<dyn CompletionClient>>,
}

impl Engine {
    pub fn offline(rules: OfflineRules) -> Self {
        Engine { config: EngineConfig::default(), rules, client: None }
    }

    /// Remote engine over HTTP; reads the credential from the configured
    /// environment variable.
    pub fn remote(config: EngineConfig, rules: OfflineRules) -> Result<Self, ReasoningError> {
        config.validate()?;
        let client = HttpClient::from_config(&config)?;
        Ok(Engine { config, rules, client: Some(Box::new(client)) })
    }

    /// Remote-mode engine over any client (tests use a scripted one).
    pub fn with_client(config: EngineConfig, rules: OfflineRules, client: Box<dyn CompletionClient>) -> Self {
        Engine { config: EngineConfig { mode: EngineMode::Remote, ..config }, rules, client: Some(client) }
    }

    fn pool(&self) -> rayon::ThreadPool {
        rayon::ThreadPoolBuilder::new().num_threads(self.config.concurrency.max(1)).build().expect("thread pool")
    }

    pub fn run_filter_stage(&self, prompts: &[PromptInstance]) -> Result<StageOutput<FilterVerdict>, ReasoningError> {
        check_stage(prompts, Stage::PathFiltering)?;
        let Some(client) = self.client.as_deref().filter(|_| self.config.mode == EngineMode::Remote) else {
            let verdicts = prompts.iter().map(|p| self.rules.filter(&p.summary)).collect();
            return Ok(StageOutput { verdicts, transcripts: vec![] });
        };
        let batch = self.config.batch_size.clamp(1, MAX_BATCH);
        let chunks: Vec<&[PromptInstance]> = prompts.chunks(batch).collect();
        let results: Vec<Result<BatchOutput, ReasoningError>> =
            self.pool().install(|| chunks.par_iter().map(|c| self.filter_batch(client, c)).collect());
        let mut out = StageOutput { verdicts: vec![], transcripts: vec![] };
        for r in results {
            let (v, t) = r?;
            out.verdicts.extend(v);
            out.transcripts.extend(t);
        }
        Ok(out)
    }

    fn filter_batch(&self, client: &dyn CompletionClient, batch: &[PromptInstance]) -> Result<BatchOutput, ReasoningError> {
        let mut got: Vec<Option<FilterVerdict>> = vec![None; batch.len()];
        let mut transcripts = Vec::new();
        let mut last_raw: Option<String> = None;
        let mut last_err = String::new();
        for attempt in 0..=self.config.max_retries {
            let pending: Vec<&PromptInstance> = batch.iter().zip(&got).filter(|(_, g)| g.is_none()).map(|(p, _)| p).collect();
            if pending.is_empty() {
                break;
            }
            let request = render_filter_batch(&pending);
            let ids: Vec<String> = pending.iter().map(|p| p.group_id.clone()).collect();
            match client.complete(&request) {
                Ok(raw) => {
                    let parsed = parse_filter_batch(&raw, &ids);
                    for (id, v) in ids.iter().zip(parsed) {
                        let slot = batch.iter().position(|p| &p.group_id == id).expect("pending id in batch");
                        got[slot] = v;
                    }
                    transcripts.push(Transcript {
                        stage: Stage::PathFiltering,
                        group_ids: ids,
                        attempt,
                        request,
                        response: Some(raw.clone()),
                        error: None,
                    });
                    last_raw = Some(raw);
                }
                Err(e) => {
                    transcripts.push(Transcript {
                        stage: Stage::PathFiltering,
                        group_ids: ids,
                        attempt,
                        request,
                        response: None,
                        error: Some(e.clone()),
                    });
                    last_err = e;
                }
            }
        }
        let Some(raw) = last_raw else {
            return Err(ReasoningError::EngineUnreachable(last_err));
        };
        let verdicts = batch.iter().zip(got).map(|(p, v)| v.unwrap_or_else(|| undetermined_filter(&p.group_id, &raw))).collect();
        Ok((verdicts, transcripts))
    }

    pub fn run_simulation_stage(&self, prompts: &[PromptInstance]) -> Result<StageOutput<SimulationVerdict>, ReasoningError> {
        check_stage(prompts, Stage::AttackSimulation)?;
        let Some(client) = self.client.as_deref().filter(|_| self.config.mode == EngineMode::Remote) else {
            let verdicts = prompts.iter().map(|p| self.rules.simulate(&p.summary)).collect();
            return Ok(StageOutput { verdicts, transcripts: vec![] });
        };
        let results: Vec<Result<(SimulationVerdict, Vec<Transcript>), ReasoningError>> =
            self.pool().install(|| prompts.par_iter().map(|p| self.simulate_one(client, p)).collect());
        let mut out = StageOutput { verdicts: vec![], transcripts: vec![] };
        for r in results {
            let (v, t) = r?;
            out.verdicts.push(v);
            out.transcripts.extend(t);
        }
        Ok(out)
    }

    fn simulate_one(
        &self,
        client: &dyn CompletionClient,
        p: &PromptInstance,
    ) -> Result<(SimulationVerdict, Vec<Transcript>), ReasoningError> {
        let mut transcripts = Vec::new();
        let mut last_raw = None;
        let mut last_err = String::new();
        for attempt in 0..=self.config.max_retries {
            let ids = vec![p.group_id.clone()];
            match client.complete(&p.rendered_text) {
                Ok(raw) => {
                    transcripts.push(Transcript {
                        stage: Stage::AttackSimulation,
                        group_ids: ids,
                        attempt,
                        request: p.rendered_text.clone(),
                        response: Some(raw.clone()),
                        error: None,
                    });
                    if let Ok(Verdict::Simulation(mut v)) = parse_verdict(&raw, Stage::AttackSimulation) {
                        v.group_id = p.group_id.clone();
                        return Ok((v, transcripts));
                    }
                    last_raw = Some(raw);
                }
                Err(e) => {
                    transcripts.push(Transcript {
                        stage: Stage::AttackSimulation,
                        group_ids: ids,
                        attempt,
                        request: p.rendered_text.clone(),
                        response: None,
                        error: Some(e.clone()),
                    });
                    last_err = e;
                }
            }
        }
        match last_raw {
            Some(raw) => Ok((undetermined_simulation(&p.group_id, &raw), transcripts)),
            None => Err(ReasoningError::EngineUnreachable(last_err)),
        }
    }

    /// Runs whichever stage the prompts belong to.
    pub fn run_stage(&self, prompts: &[PromptInstance]) -> Result<Vec<Verdict>, ReasoningError> {
        match prompts.first().map(|p| p.stage) {
            None => Ok(vec![]),
            Some(Stage::PathFiltering) => Ok(self.run_filter_stage(prompts)?.verdicts.into_iter().map(Verdict::Filter).collect()),
            Some(Stage::AttackSimulation) => {
                Ok(self.run_simulation_stage(prompts)?.verdicts.into_iter().map(Verdict::Simulation).collect())
            }
        }
    }
}

fn check_stage(prompts: &[PromptInstance], stage: Stage) -> Result<(), ReasoningError> {
    match prompts.iter().find(|p| p.stage != stage) {
        Some(p) => Err(ReasoningError::BadConfig(format!("prompt for group {} belongs to another stage", p.group_id))),
        None => Ok(()),
    }
}

/// Filter default when no answer could be parsed: keep, flagged.
pub fn undetermined_filter(group_id: &str, raw: &str) -> FilterVerdict {
    FilterVerdict {
        group_id: group_id.to_string(),
        keep: true,
        answers: FilterAnswers::default(),
        raw_response: raw.to_string(),
        undetermined: true,
    }
}

/// Simulation default when no answer could be parsed: not vulnerable, flagged.
pub fn undetermined_simulation(group_id: &str, raw: &str) -> SimulationVerdict {
    SimulationVerdict {
        group_id: group_id.to_string(),
        vulnerable: false,
        vulnerable_functions: vec![],
        vulnerable_paths: vec![],
        attack_explanation: String::new(),
        steps: SimulationSteps::default(),
        raw_response: raw.to_string(),
        undetermined: true,
    }
}
