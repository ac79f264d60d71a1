//! One input file through every stage: frontend (or IR import), taint,
//! grouping, filtering, simulation, checker, report.

use crate::checker::{apply_checker, CheckerOutcome};
use crate::config::AnalysisConfig;
use crate::frontend::{parse_source, Diagnostic};
use crate::grouping::{group_paths, summarize_group, PathGroup};
use crate::ir::{build_icfg, extract_primitives, import_ir_value, lower_unit, ContractIr};
use crate::reasoning::{
    render_filter_prompt, render_simulation_prompt, Engine, FilterVerdict, PromptInstance, ReasoningError, SimulationVerdict, Transcript,
};
use crate::report::{build_report, redact, ContractArtifacts, Report, ReportInput};
use crate::taint::analyze_taint;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InputFormat {
    Solidity,
    IrJson,
}

impl InputFormat {
    /// `.json` files are IR documents, everything else is source.
    pub fn guess(path: &str) -> InputFormat {
        if path.ends_with(".json") {
            InputFormat::IrJson
        } else {
            InputFormat::Solidity
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PipelineError {
    #[error("no-contracts: {0}")]
    NoContracts(String),
    #[error("schema-violation: {0}")]
    Import(String),
    #[error(transparent)]
    Reasoning(#[from] ReasoningError),
}

impl PipelineError {
    pub fn code(&self) -> &'static str {
        match self {
            PipelineError::NoContracts(_) => "no-contracts",
            PipelineError::Import(_) => "schema-violation",
            PipelineError::Reasoning(e) => e.code(),
        }
    }
}

/// Prompts, verdicts and transcripts of one contract, for stage dumps.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct StageRecord {
    pub contract: String,
    pub groups: Vec<(String, String)>,
    pub filter_prompts: Vec<PromptInstance>,
    pub filter_verdicts: Vec<FilterVerdict>,
    pub simulation_prompts: Vec<PromptInstance>,
    pub simulation_verdicts: Vec<SimulationVerdict>,
    pub checker: Vec<CheckerOutcome>,
    pub transcripts: Vec<Transcript>,
}

pub struct Run {
    pub report: Report,
    pub stages: Vec<StageRecord>,
}

impl Run {
    /// The stage dump as JSON, credentials redacted.
    pub fn stages_json(&self, secrets: &[String]) -> String {
        let mut s = serde_json::to_string_pretty(&self.stages).expect("stages serialize");
        s.push('\n');
        redact(&s, secrets)
    }
}

pub struct RunInput<'a> {
    /// Label used in the report, usually the file name.
    pub name: &'a str,
    pub text: &'a str,
    pub format: InputFormat,
    pub config: &'a AnalysisConfig,
    pub engine: &'a Engine,
    pub config_echo: Value,
    pub secrets: Vec<String>,
}

pub fn sha256_hex(text: &str) -> String {
    Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

/// Contracts in the input plus file-level diagnostics.
pub fn load_contracts(name: &str, text: &str, format: InputFormat) -> Result<(Vec<ContractIr>, Vec<Diagnostic>), PipelineError> {
    match format {
        InputFormat::Solidity => {
            let unit = parse_source(text, name);
            let irs = lower_unit(&unit, text);
            if irs.is_empty() && unit.errors().count() > 0 {
                let first = unit.errors().next().map(|d| d.message.clone()).unwrap_or_default();
                return Err(PipelineError::NoContracts(format!("{name} does not parse: {first}")));
            }
            Ok((irs, unit.diagnostics))
        }
        InputFormat::IrJson => {
            let doc: Value = serde_json::from_str(text).map_err(|e| PipelineError::Import(format!("{name}: {e}")))?;
            let docs = match doc {
                Value::Array(xs) => xs,
                one => vec![one],
            };
            let irs = docs
                .iter()
                .map(|d| import_ir_value(d).map_err(|e| PipelineError::Import(format!("{name}: {e}"))))
                .collect::<Result<Vec<_>, _>>()?;
            Ok((irs, vec![]))
        }
    }
}

struct Analyzed {
    ir: ContractIr,
    path_count: usize,
    diagnostics: Vec<Diagnostic>,
    groups: Vec<PathGroup>,
    filter: Vec<FilterVerdict>,
    simulation: BTreeMap<String, SimulationVerdict>,
    checker: BTreeMap<String, CheckerOutcome>,
    record: StageRecord,
}

fn analyze_contract(ir: ContractIr, cfg: &AnalysisConfig, engine: &Engine) -> Result<Analyzed, PipelineError> {
    let icfg = build_icfg(&ir);
    let facts = extract_primitives(&ir, cfg);
    let taint = analyze_taint(&ir, &icfg, &facts, cfg);
    let groups = group_paths(&ir, &taint.paths);
    let summaries: Vec<_> = groups.iter().map(|g| summarize_group(&ir, g, cfg.summary_line_cap)).collect();

    let filter_prompts = summaries.iter().map(render_filter_prompt).collect::<Result<Vec<_>, _>>()?;
    let filtered = engine.run_filter_stage(&filter_prompts)?;
    let filter = filtered.verdicts;

    // only kept groups move on
    let kept: Vec<usize> = (0..groups.len()).filter(|&i| filter[i].keep).collect();
    let sim_prompts = kept.iter().map(|&i| render_simulation_prompt(&summaries[i], &filter[i])).collect::<Result<Vec<_>, _>>()?;
    let simulated = engine.run_simulation_stage(&sim_prompts)?;
    let simulation: BTreeMap<String, SimulationVerdict> =
        kept.iter().zip(&simulated.verdicts).map(|(&i, v)| (groups[i].id.clone(), v.clone())).collect();

    let kept_refs: Vec<&PathGroup> = kept.iter().map(|&i| &groups[i]).collect();
    let outcomes = apply_checker(&ir, &kept_refs, cfg);
    let checker: BTreeMap<String, CheckerOutcome> = outcomes.iter().map(|o| (o.group_id.clone(), o.clone())).collect();

    let mut diagnostics = taint.diagnostics.clone();
    diagnostics.extend(ir.diagnostics.iter().cloned());
    let mut transcripts = filtered.transcripts;
    transcripts.extend(simulated.transcripts);
    let record = StageRecord {
        contract: ir.contract.clone(),
        groups: groups.iter().map(|g| (g.id.clone(), g.key.to_string())).collect(),
        filter_prompts,
        filter_verdicts: filter.clone(),
        simulation_prompts: sim_prompts,
        simulation_verdicts: simulated.verdicts,
        checker: outcomes,
        transcripts,
    };
    Ok(Analyzed { path_count: taint.paths.len(), ir, diagnostics, groups, filter, simulation, checker, record })
}

/// Runs every stage over one input and assembles its report.
pub fn run(input: RunInput<'_>) -> Result<Run, PipelineError> {
    let (irs, file_diags) = load_contracts(input.name, input.text, input.format)?;
    let analyzed = irs.into_iter().map(|ir| analyze_contract(ir, input.config, input.engine)).collect::<Result<Vec<_>, _>>()?;
    let contracts = analyzed
        .iter()
        .map(|a| {
            (
                ContractArtifacts {
                    ir: &a.ir,
                    path_count: a.path_count,
                    diagnostics: &a.diagnostics,
                    groups: &a.groups,
                    filter: &a.filter,
                    simulation: &a.simulation,
                    checker: &a.checker,
                },
                a.diagnostics.clone(),
            )
        })
        .collect();
    let report = build_report(ReportInput {
        input: input.name,
        input_sha256: sha256_hex(input.text),
        contracts,
        diagnostics: file_diags,
        config: input.config_echo,
        secrets: input.secrets,
    });
    let stages = analyzed.into_iter().map(|a| a.record).collect();
    Ok(Run { report, stages })
}

/// Echo of the analysis and engine settings. The engine part names the
/// credential variable but never holds its value.
pub fn config_echo(cfg: &AnalysisConfig, engine: &Engine) -> Value {
    json!({ "analysis": cfg, "engine": engine.config })
}
