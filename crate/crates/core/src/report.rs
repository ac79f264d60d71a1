//! Findings, reports and corpus metrics.
//!
//! A finding is one attack opportunity: the groups that survived filtering
//! and share a contract, source function and source instruction are merged
//! into a single finding whose anchors come from its most severe group.

use crate::checker::CheckerOutcome;
use crate::frontend::Diagnostic;
use crate::grouping::PathGroup;
use crate::ir::{describe_inst, ContractIr};
use crate::reasoning::{FilterVerdict, SimulationVerdict};
use crate::taint::{FIXPOINT_BUDGET_EXCEEDED, PATH_CAPPED};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use thiserror::Error;

pub const REPORT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Info,
    Medium,
    High,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Flag {
    Undetermined,
    PathCapped,
    FixpointBudget,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PhaseNote {
    pub title: String,
    pub functions: Vec<String>,
    /// `id: source text`; empty for the narrative-only phases.
    pub instructions: Vec<String>,
    pub note: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct GroupVerdicts {
    pub group_id: String,
    pub group_key: String,
    pub filter_verdict: FilterVerdict,
    pub simulation_verdict: SimulationVerdict,
    pub checker_outcome: CheckerOutcome,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Finding {
    pub contract: String,
    pub group_key: String,
    pub severity: Severity,
    pub phases: BTreeMap<u8, PhaseNote>,
    pub filter_verdict: FilterVerdict,
    pub simulation_verdict: SimulationVerdict,
    pub checker_outcome: CheckerOutcome,
    pub narrative: String,
    pub flags: BTreeSet<Flag>,
    /// Every group folded into this finding, the anchoring one first.
    pub groups: Vec<GroupVerdicts>,
}

/// Everything the stages produced for one contract.
pub struct ContractArtifacts<'a> {
    pub ir: &'a ContractIr,
    pub path_count: usize,
    pub diagnostics: &'a [Diagnostic],
    pub groups: &'a [PathGroup],
    /// Indexed like `groups`.
    pub filter: &'a [FilterVerdict],
    /// Only for kept groups.
    pub simulation: &'a BTreeMap<String, SimulationVerdict>,
    pub checker: &'a BTreeMap<String, CheckerOutcome>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct StageStats {
    pub paths: usize,
    pub groups: usize,
    pub kept: usize,
    pub vulnerable: usize,
    pub suppressed: usize,
    pub undetermined: usize,
    pub findings: usize,
    pub high: usize,
}

impl StageStats {
    fn add(&mut self, o: &StageStats) {
        self.paths += o.paths;
        self.groups += o.groups;
        self.kept += o.kept;
        self.vulnerable += o.vulnerable;
        self.suppressed += o.suppressed;
        self.undetermined += o.undetermined;
        self.findings += o.findings;
        self.high += o.high;
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ContractSection {
    pub name: String,
    pub functions: usize,
    pub instructions: usize,
    pub stats: StageStats,
    pub diagnostics: Vec<Diagnostic>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Report {
    pub report_version: u32,
    pub tool: String,
    pub input: String,
    pub input_sha256: String,
    pub contracts: Vec<ContractSection>,
    pub findings: Vec<Finding>,
    pub stats: StageStats,
    /// Diagnostics not tied to one contract (parse errors, import failures).
    pub diagnostics: Vec<Diagnostic>,
    /// Effective configuration, credentials redacted.
    pub config: Value,
}

impl Report {
    pub fn high_findings(&self) -> usize {
        self.findings.iter().filter(|f| f.severity == Severity::High).count()
    }

    /// Pretty JSON with a trailing newline; identical inputs give identical bytes.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

fn severity(sim: &SimulationVerdict, chk: &CheckerOutcome) -> Option<Severity> {
    if sim.undetermined {
        Some(Severity::Info)
    } else if sim.vulnerable && !chk.suppressed {
        Some(Severity::High)
    } else if sim.vulnerable {
        Some(Severity::Medium)
    } else {
        None
    }
}

fn flags_for(diags: &[Diagnostic], sim: &SimulationVerdict) -> BTreeSet<Flag> {
    let mut out = BTreeSet::new();
    if sim.undetermined {
        out.insert(Flag::Undetermined);
    }
    for d in diags {
        match d.code.as_str() {
            PATH_CAPPED => {
                out.insert(Flag::PathCapped);
            }
            FIXPOINT_BUDGET_EXCEEDED => {
                out.insert(Flag::FixpointBudget);
            }
            _ => {}
        }
    }
    out
}

fn phases(ir: &ContractIr, g: &PathGroup, sim: &SimulationVerdict) -> BTreeMap<u8, PhaseNote> {
    let rep = &g.representative;
    let fname = |id: crate::ir::InstId| ir.func(id).name.clone();
    let at = |id: crate::ir::InstId| format!("{id}: {}", describe_inst(ir, id));
    let interior: Vec<_> = rep.steps.iter().copied().filter(|s| !s.is_pseudo() && *s != rep.source.inst && *s != rep.sink.inst).collect();
    let mut interior_fns: Vec<String> = Vec::new();
    for s in &interior {
        let n = fname(*s);
        if !interior_fns.contains(&n) {
            interior_fns.push(n);
        }
    }
    let source_inst = if rep.source.inst.is_pseudo() {
        vec![format!("{}: parameters of {}", rep.source.inst, rep.source_function)]
    } else {
        vec![at(rep.source.inst)]
    };
    let price = if sim.steps.price_source.is_empty() { "the price source".to_string() } else { sim.steps.price_source.clone() };
    let mut m = BTreeMap::new();
    m.insert(
        0,
        PhaseNote {
            title: "flash loan".into(),
            functions: vec![],
            instructions: vec![],
            note: "the attacker borrows a large amount of the tokens behind the price source".into(),
        },
    );
    m.insert(
        1,
        PhaseNote {
            title: "price manipulation".into(),
            functions: vec![rep.source_function.clone()],
            instructions: source_inst,
            note: format!("{price} is skewed and enters the contract as the taint source ({})", rep.source.kind.as_str()),
        },
    );
    m.insert(
        2,
        PhaseNote {
            title: "exploitation".into(),
            functions: interior_fns,
            instructions: interior.iter().map(|s| at(*s)).collect(),
            note: "the manipulated value propagates into the amount computation".into(),
        },
    );
    m.insert(
        3,
        PhaseNote {
            title: "value extraction".into(),
            functions: vec![g.key.sink_function.clone()],
            instructions: vec![at(rep.sink.inst)],
            note: format!("the inflated amount reaches the sink ({})", rep.sink.kind.as_str()),
        },
    );
    m.insert(
        4,
        PhaseNote {
            title: "cleanup".into(),
            functions: vec![],
            instructions: vec![],
            note: "the attacker swaps the proceeds back, repays the loan and keeps the difference".into(),
        },
    );
    m
}

fn narrative(g: &PathGroup, sim: &SimulationVerdict, chk: &CheckerOutcome, sev: Severity) -> String {
    let mut out = match sev {
        Severity::Info => format!("No usable verdict for {}; the path is reported for manual review.", g.key),
        _ => sim.attack_explanation.clone(),
    };
    if chk.suppressed {
        let how: Vec<String> = chk.defenses.iter().map(|d| d.evidence.clone()).collect();
        out.push_str(&format!(" Suppressed by the defense checker: {}.", how.join("; ")));
    }
    out
}

/// Findings and statistics for one contract.
pub fn contract_findings(a: &ContractArtifacts<'_>) -> (Vec<Finding>, StageStats) {
    let mut stats = StageStats { paths: a.path_count, groups: a.groups.len(), ..StageStats::default() };
    // (source function, source instruction) -> findings in group order
    let mut merged: BTreeMap<(String, String), Vec<(Severity, usize)>> = BTreeMap::new();
    for (i, g) in a.groups.iter().enumerate() {
        let f = &a.filter[i];
        if !f.keep {
            continue;
        }
        stats.kept += 1;
        let (Some(sim), Some(chk)) = (a.simulation.get(&g.id), a.checker.get(&g.id)) else { continue };
        stats.vulnerable += usize::from(sim.vulnerable);
        stats.suppressed += usize::from(chk.suppressed);
        stats.undetermined += usize::from(sim.undetermined || f.undetermined);
        if let Some(sev) = severity(sim, chk) {
            let src = &g.representative.source;
            merged.entry((g.key.source_function.clone(), src.inst.to_string())).or_default().push((sev, i));
        }
    }
    let mut out = Vec::new();
    for members in merged.values() {
        let top = members.iter().map(|m| m.0).max().expect("non-empty");
        let anchor = members.iter().find(|m| m.0 == top).expect("top").1;
        let order = std::iter::once(anchor).chain(members.iter().map(|m| m.1).filter(|&i| i != anchor));
        let groups: Vec<GroupVerdicts> = order
            .map(|i| {
                let g = &a.groups[i];
                GroupVerdicts {
                    group_id: g.id.clone(),
                    group_key: g.key.to_string(),
                    filter_verdict: a.filter[i].clone(),
                    simulation_verdict: a.simulation[&g.id].clone(),
                    checker_outcome: a.checker[&g.id].clone(),
                }
            })
            .collect();
        let g = &a.groups[anchor];
        let sim = &a.simulation[&g.id];
        let chk = &a.checker[&g.id];
        out.push(Finding {
            contract: a.ir.contract.clone(),
            group_key: g.key.to_string(),
            severity: top,
            phases: phases(a.ir, g, sim),
            filter_verdict: a.filter[anchor].clone(),
            simulation_verdict: sim.clone(),
            checker_outcome: chk.clone(),
            narrative: narrative(g, sim, chk, top),
            flags: flags_for(a.diagnostics, sim),
            groups,
        });
    }
    // most severe first, then by key
    out.sort_by(|x, y| y.severity.cmp(&x.severity).then_with(|| x.group_key.cmp(&y.group_key)));
    stats.findings = out.len();
    stats.high = out.iter().filter(|f| f.severity == Severity::High).count();
    (out, stats)
}

/// Replaces every occurrence of each secret in `text`.
pub fn redact(text: &str, secrets: &[String]) -> String {
    let mut out = text.to_string();
    for s in secrets.iter().filter(|s| s.len() >= 4) {
        out = out.replace(s.as_str(), "[REDACTED]");
    }
    out
}

fn redact_value(v: &mut Value, secrets: &[String]) {
    match v {
        Value::String(s) => *s = redact(s, secrets),
        Value::Array(xs) => xs.iter_mut().for_each(|x| redact_value(x, secrets)),
        Value::Object(m) => m.values_mut().for_each(|x| redact_value(x, secrets)),
        _ => {}
    }
}

pub struct ReportInput<'a> {
    pub input: &'a str,
    pub input_sha256: String,
    pub contracts: Vec<(ContractArtifacts<'a>, Vec<Diagnostic>)>,
    pub diagnostics: Vec<Diagnostic>,
    pub config: Value,
    /// Values that must never appear in the report (credentials).
    pub secrets: Vec<String>,
}

pub fn build_report(r: ReportInput<'_>) -> Report {
    let mut findings = Vec::new();
    let mut contracts = Vec::new();
    let mut total = StageStats::default();
    for (a, diags) in &r.contracts {
        let (f, stats) = contract_findings(a);
        total.add(&stats);
        findings.extend(f);
        contracts.push(ContractSection {
            name: a.ir.contract.clone(),
            functions: a.ir.functions.len(),
            instructions: a.ir.instruction_count(),
            stats,
            diagnostics: diags.clone(),
        });
    }
    let report = Report {
        report_version: REPORT_VERSION,
        tool: format!("flashtrace {}", env!("CARGO_PKG_VERSION")),
        input: r.input.to_string(),
        input_sha256: r.input_sha256,
        contracts,
        findings,
        stats: total,
        diagnostics: r.diagnostics,
        config: r.config,
    };
    if r.secrets.is_empty() {
        return report;
    }
    let mut v = serde_json::to_value(&report).expect("report serializes");
    redact_value(&mut v, &r.secrets);
    serde_json::from_value(v).expect("redaction keeps the shape")
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MetricsError {
    #[error("label-missing: no label for {0}")]
    LabelMissing(String),
}

impl MetricsError {
    pub fn code(&self) -> &'static str {
        "label-missing"
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Vulnerable,
    Safe,
}

/// A ratio, or `"undefined"` when its denominator is zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Ratio {
    Value(f64),
    Undefined,
}

impl Ratio {
    fn of(num: usize, den: usize) -> Ratio {
        if den == 0 {
            Ratio::Undefined
        } else {
            Ratio::Value(num as f64 / den as f64)
        }
    }

    pub fn value(self) -> Option<f64> {
        match self {
            Ratio::Value(v) => Some(v),
            Ratio::Undefined => None,
        }
    }
}

impl fmt::Display for Ratio {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Ratio::Value(v) => write!(f, "{v:.2}"),
            Ratio::Undefined => f.write_str("n/a"),
        }
    }
}

impl Serialize for Ratio {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Ratio::Value(v) => s.serialize_f64(*v),
            Ratio::Undefined => s.serialize_str("undefined"),
        }
    }
}

impl<'de> Deserialize<'de> for Ratio {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        match Value::deserialize(d)? {
            Value::Number(n) => n.as_f64().map(Ratio::Value).ok_or_else(|| serde::de::Error::custom("bad ratio")),
            Value::String(s) if s == "undefined" => Ok(Ratio::Undefined),
            other => Err(serde::de::Error::custom(format!("bad ratio {other}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CorpusMetrics {
    pub tp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub fp: usize,
    pub tn: usize,
    pub precision: Ratio,
    pub recall: Ratio,
    pub f1: Ratio,
}

impl CorpusMetrics {
    pub fn from_counts(tp: usize, fn_: usize, fp: usize) -> Self {
        Self::with_tn(tp, fn_, fp, 0)
    }

    fn with_tn(tp: usize, fn_: usize, fp: usize, tn: usize) -> Self {
        let precision = Ratio::of(tp, tp + fp);
        let recall = Ratio::of(tp, tp + fn_);
        let f1 = match (precision, recall) {
            (Ratio::Value(p), Ratio::Value(r)) if p + r > 0.0 => Ratio::Value(2.0 * p * r / (p + r)),
            (Ratio::Value(_), Ratio::Value(_)) => Ratio::Value(0.0),
            _ => Ratio::Undefined,
        };
        CorpusMetrics { tp, fn_, fp, tn, precision, recall, f1 }
    }

    /// Aligned table with the columns TP, FN, Recall, FP, Precision, F1.
    pub fn table(&self, label: &str) -> String {
        let w = label.len().max(6);
        format!(
            "{:<w$}  {:>4}  {:>4}  {:>6}  {:>4}  {:>9}  {:>4}\n{:<w$}  {:>4}  {:>4}  {:>6}  {:>4}  {:>9}  {:>4}\n",
            "",
            "TP",
            "FN",
            "Recall",
            "FP",
            "Precision",
            "F1",
            label,
            self.tp,
            self.fn_,
            self.recall.to_string(),
            self.fp,
            self.precision.to_string(),
            self.f1.to_string(),
        )
    }
}

/// Contract-level scoring: a report counts as detected iff it holds at
/// least one high finding. Reports are keyed by the labels' file names.
pub fn compute_metrics(labels: &BTreeMap<String, Label>, reports: &BTreeMap<String, Report>) -> Result<CorpusMetrics, MetricsError> {
    let (mut tp, mut fn_, mut fp, mut tn) = (0, 0, 0, 0);
    for (name, report) in reports {
        let label = labels.get(name).ok_or_else(|| MetricsError::LabelMissing(name.clone()))?;
        match (label, report.high_findings() > 0) {
            (Label::Vulnerable, true) => tp += 1,
            (Label::Vulnerable, false) => fn_ += 1,
            (Label::Safe, true) => fp += 1,
            (Label::Safe, false) => tn += 1,
        }
    }
    Ok(CorpusMetrics::with_tn(tp, fn_, fp, tn))
}
