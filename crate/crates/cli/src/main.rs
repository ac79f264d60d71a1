//! `flashtrace`: find flash-loan price-manipulation paths in Solidity.
//!
//! Exit status: 0 clean, 1 at least one high finding (`analyze`), 2
//! operational error.

mod config;
mod output;

use clap::{Parser, Subcommand};
use config::{AnalysisFlags, EngineFlags, RunConfig};
use flashtrace_core::pipeline::{self, load_contracts, InputFormat, Run, RunInput};
use flashtrace_core::reasoning::{Engine, EngineMode};
use flashtrace_core::report::{compute_metrics, CorpusMetrics, Label, Report, Severity};
use output::{artifact_name, write_atomic};
use rayon::prelude::*;
use serde::Serialize;
use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Debug)]
pub struct CliError {
    pub code: &'static str,
    pub message: String,
}

impl CliError {
    pub fn new(code: &'static str, message: impl Into<String>) -> Self {
        CliError { code, message: message.into() }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.code, self.message)
    }
}

impl CliError {
    /// From a library error whose message starts with its own code.
    pub fn coded(code: &'static str, message: String) -> Self {
        let m = message.strip_prefix(code).and_then(|m| m.strip_prefix(": ")).map(str::to_string).unwrap_or(message);
        CliError::new(code, m)
    }
}

impl From<pipeline::PipelineError> for CliError {
    fn from(e: pipeline::PipelineError) -> Self {
        CliError::coded(e.code(), e.to_string())
    }
}

/// Writes to stdout; a closed pipe (`| head`) is not an error.
fn out(text: &str) {
    use std::io::Write;
    let _ = std::io::stdout().lock().write_all(text.as_bytes());
}

#[derive(Parser)]
#[command(name = "flashtrace", version, about = "Detect flash-loan price-manipulation paths in Solidity contracts")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Analyze contracts and write a vulnerability report.
    Analyze {
        #[arg(required = true)]
        inputs: Vec<String>,
        /// Report path (single input only).
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// Directory for report(s) and stage dumps.
        #[arg(long)]
        run_dir: Option<PathBuf>,
        #[command(flatten)]
        engine: EngineFlags,
        #[command(flatten)]
        analysis: AnalysisFlags,
    },
    /// Analyze a labeled corpus and compute precision, recall and F1.
    Eval {
        corpus: PathBuf,
        /// Labels manifest; defaults to labels.json in the corpus.
        #[arg(long)]
        labels: Option<PathBuf>,
        #[arg(long, default_value = "flashtrace-run")]
        run_dir: PathBuf,
        /// Permit the remote engine during evaluation.
        #[arg(long)]
        allow_remote_eval: bool,
        #[command(flatten)]
        engine: EngineFlags,
        #[command(flatten)]
        analysis: AnalysisFlags,
    },
    /// Print the IR of a source file as JSON.
    DumpIr {
        input: String,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Describe the supported Solidity subset.
    Grammar {
        #[arg(long)]
        json: bool,
    },
}

fn read_input(path: &str) -> Result<String, CliError> {
    if !Path::new(path).is_file() {
        return Err(CliError::new("file-not-found", format!("{path} does not exist or is not a file")));
    }
    std::fs::read_to_string(path).map_err(|e| CliError::new("io-error", format!("{path}: {e}")))
}

fn analyze_one(path: &str, name: &str, rc: &RunConfig, engine: &Engine, secrets: &[String]) -> Result<Run, CliError> {
    let text = read_input(path)?;
    Ok(pipeline::run(RunInput {
        name,
        text: &text,
        format: rc.format_for(path),
        config: &rc.analysis,
        engine,
        config_echo: rc.echo(),
        secrets: secrets.to_vec(),
    })?)
}

fn summarize(r: &Report) -> String {
    let count = |s: Severity| r.findings.iter().filter(|f| f.severity == s).count();
    let mut out = format!(
        "{}: {} high, {} medium, {} info ({} paths, {} groups, {} kept, {} suppressed)\n",
        r.input,
        count(Severity::High),
        count(Severity::Medium),
        count(Severity::Info),
        r.stats.paths,
        r.stats.groups,
        r.stats.kept,
        r.stats.suppressed
    );
    for f in &r.findings {
        let sev = serde_json::to_value(f.severity).expect("severity").as_str().unwrap_or_default().to_string();
        out.push_str(&format!("  [{sev}] {} {}\n", f.contract, f.group_key));
        for p in [1u8, 3] {
            if let Some(n) = f.phases.get(&p) {
                out.push_str(&format!("    phase {p} ({}): {}\n", n.title, n.instructions.join(" | ")));
            }
        }
    }
    out
}

fn cmd_analyze(
    inputs: Vec<String>,
    output: Option<PathBuf>,
    run_dir: Option<PathBuf>,
    e: EngineFlags,
    a: AnalysisFlags,
) -> Result<ExitCode, CliError> {
    if output.is_some() && inputs.len() > 1 {
        return Err(CliError::new("bad-config", "-o takes a single input; use --run-dir for several"));
    }
    let rc = RunConfig::new("analyze", inputs.clone(), &e, &a)?;
    let stage_dir = match (&run_dir, &output) {
        (Some(d), _) => Some(d.join("stages")),
        (None, Some(o)) => Some(o.parent().unwrap_or(Path::new(".")).join("stages")),
        (None, None) => None,
    };
    if rc.stage_dump && stage_dir.is_none() {
        return Err(CliError::new("bad-config", "--stage-dump needs -o or --run-dir"));
    }
    let engine = rc.engine()?;
    let secrets = rc.secrets();
    let mut high = 0;
    for path in &inputs {
        let run = analyze_one(path, path, &rc, &engine, &secrets)?;
        let json = run.report.to_json();
        match (&output, &run_dir) {
            (Some(o), _) => write_atomic(o, &json)?,
            (None, Some(d)) if inputs.len() == 1 => write_atomic(&d.join("report.json"), &json)?,
            (None, Some(d)) => write_atomic(&d.join("reports").join(artifact_name(path)), &json)?,
            (None, None) => out(&json),
        }
        if rc.stage_dump {
            let dir = stage_dir.as_ref().expect("checked above");
            write_atomic(&dir.join(artifact_name(path)), &run.stages_json(&secrets))?;
        }
        eprint!("{}", summarize(&run.report));
        high += run.report.high_findings();
    }
    Ok(if high > 0 { ExitCode::from(1) } else { ExitCode::SUCCESS })
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct ContractRow {
    file: String,
    label: Label,
    high_findings: usize,
    detected: bool,
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct Skipped {
    file: String,
    code: String,
    message: String,
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct MetricsDoc {
    metrics: CorpusMetrics,
    contracts: Vec<ContractRow>,
    skipped: Vec<Skipped>,
    config: serde_json::Value,
}

fn corpus_files(dir: &Path, labels_path: &Path) -> Result<Vec<String>, CliError> {
    let rd = std::fs::read_dir(dir).map_err(|e| CliError::new("file-not-found", format!("{}: {e}", dir.display())))?;
    let mut out: Vec<String> = rd
        .filter_map(|e| e.ok())
        .filter(|e| e.path().is_file() && e.path() != labels_path)
        .map(|e| e.file_name().to_string_lossy().into_owned())
        // the manifest name is reserved even when --labels points elsewhere
        .filter(|n| n != "labels.json" && (n.ends_with(".sol") || n.ends_with(".json")))
        .collect();
    out.sort();
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
fn cmd_eval(
    corpus: PathBuf,
    labels: Option<PathBuf>,
    run_dir: PathBuf,
    allow_remote_eval: bool,
    e: EngineFlags,
    a: AnalysisFlags,
) -> Result<ExitCode, CliError> {
    let rc = RunConfig::new("eval", vec![corpus.display().to_string()], &e, &a)?;
    if rc.engine.mode == EngineMode::Remote && !allow_remote_eval {
        return Err(CliError::new("remote-eval-refused", "eval runs offline unless --allow-remote-eval is given"));
    }
    let labels_path = labels.unwrap_or_else(|| corpus.join("labels.json"));
    let text = read_input(&labels_path.display().to_string())?;
    let labels: BTreeMap<String, Label> =
        serde_json::from_str(&text).map_err(|x| CliError::new("bad-config", format!("{}: {x}", labels_path.display())))?;
    let engine = rc.engine()?;
    let secrets = rc.secrets();

    let files = corpus_files(&corpus, &labels_path)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(rc.concurrency.max(1))
        .build()
        .map_err(|x| CliError::new("bad-config", x.to_string()))?;
    let results: Vec<(String, Result<Run, CliError>)> = pool.install(|| {
        files
            .par_iter()
            .map(|f| {
                let r = if labels.contains_key(f) {
                    analyze_one(&corpus.join(f).display().to_string(), f, &rc, &engine, &secrets)
                } else {
                    Err(CliError::new("label-missing", format!("no label for {f}")))
                };
                (f.clone(), r)
            })
            .collect()
    });

    let mut reports = BTreeMap::new();
    let mut skipped = Vec::new();
    for (f, r) in results {
        match r {
            Ok(run) => {
                write_atomic(&run_dir.join("reports").join(artifact_name(&f)), &run.report.to_json())?;
                if rc.stage_dump {
                    write_atomic(&run_dir.join("stages").join(artifact_name(&f)), &run.stages_json(&secrets))?;
                }
                reports.insert(f, run.report);
            }
            Err(err) => {
                eprintln!("{f}: {err}");
                skipped.push(Skipped { file: f, code: err.code.to_string(), message: err.message });
            }
        }
    }
    if reports.is_empty() {
        return Err(CliError::new("no-contracts", format!("no contract in {} could be analyzed", corpus.display())));
    }
    let metrics = compute_metrics(&labels, &reports).map_err(|x| CliError::coded(x.code(), x.to_string()))?;
    let contracts = reports
        .iter()
        .map(|(f, r)| ContractRow { file: f.clone(), label: labels[f], high_findings: r.high_findings(), detected: r.high_findings() > 0 })
        .collect();
    let doc = MetricsDoc { metrics: metrics.clone(), contracts, skipped, config: rc.echo() };
    let mut json = serde_json::to_string_pretty(&doc).expect("metrics serialize");
    json.push('\n');
    write_atomic(&run_dir.join("metrics.json"), &flashtrace_core::report::redact(&json, &secrets))?;
    let table = metrics.table(&format!("{:?}", rc.engine.mode).to_lowercase());
    write_atomic(&run_dir.join("metrics.txt"), &table)?;
    out(&table);
    Ok(ExitCode::SUCCESS)
}

fn cmd_dump_ir(input: String, output: Option<PathBuf>) -> Result<ExitCode, CliError> {
    let text = read_input(&input)?;
    let (irs, diags) = load_contracts(&input, &text, InputFormat::guess(&input))?;
    for d in &diags {
        eprintln!("{input}: {:?} {}: {}", d.severity, d.code, d.message);
    }
    let docs: Vec<serde_json::Value> = irs.iter().map(flashtrace_core::ir::export_ir_json).collect();
    let doc = if docs.len() == 1 { docs.into_iter().next().expect("one") } else { serde_json::Value::Array(docs) };
    let mut json = serde_json::to_string_pretty(&doc).expect("ir serializes");
    json.push('\n');
    match output {
        Some(o) => write_atomic(&o, &json)?,
        None => out(&json),
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_grammar(json: bool) -> Result<ExitCode, CliError> {
    let g = flashtrace_core::frontend::subset_grammar();
    if json {
        out(&format!("{}\n", serde_json::to_string_pretty(g).expect("grammar serializes")));
    } else {
        let w = g.iter().map(|e| e.construct.len()).max().unwrap_or(0);
        for e in g {
            let cat = serde_json::to_value(e.category).expect("category");
            let mark = if e.supported { "yes" } else { "no" };
            let line = format!("{:<12} {:<w$} {:<4} {}", cat.as_str().unwrap_or_default(), e.construct, mark, e.note);
            out(&format!("{}\n", line.trim_end()));
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let r = match cli.command {
        Command::Analyze { inputs, output, run_dir, engine, analysis } => cmd_analyze(inputs, output, run_dir, engine, analysis),
        Command::Eval { corpus, labels, run_dir, allow_remote_eval, engine, analysis } => {
            cmd_eval(corpus, labels, run_dir, allow_remote_eval, engine, analysis)
        }
        Command::DumpIr { input, output } => cmd_dump_ir(input, output),
        Command::Grammar { json } => cmd_grammar(json),
    };
    match r {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
