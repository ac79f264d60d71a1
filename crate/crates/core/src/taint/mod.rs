//! Inter-procedural taint analysis: sources, fixpoint propagation, sinks and
//! source-to-sink path reconstruction.

mod context;
mod engine;
mod paths;
mod sinks;
mod sources;

pub use context::{Point, TaintContext};
pub use engine::{propagate, run_fixpoint, Fixpoint, FIXPOINT_BUDGET_EXCEEDED};
pub use paths::{reconstruct_paths, validate_path, PathSet, Rule, PATH_CAPPED};
pub use sinks::{find_sinks, is_sink, Sink};
pub use sources::identify_sources;

use crate::config::AnalysisConfig;
use crate::frontend::Diagnostic;
use crate::ir::{ContractIr, Facts, Icfg, InstId, SlotId, ValueRef};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::hash::{Hash, Hasher};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SourceKind {
    PublicInput,
    TxProperty,
    OracleViewCall,
    KnownDexCall,
}

impl SourceKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SourceKind::PublicInput => "PublicInput",
            SourceKind::TxProperty => "TxProperty",
            SourceKind::OracleViewCall => "OracleViewCall",
            SourceKind::KnownDexCall => "KnownDexCall",
        }
    }
}

/// Ordered by reporting priority: a transfer outranks a ledger update,
/// which outranks a plain state write.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SinkKind {
    EtherTokenTransfer,
    InternalLedgerUpdate,
    EconomicStateWrite,
}

impl SinkKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SinkKind::EtherTokenTransfer => "EtherTokenTransfer",
            SinkKind::InternalLedgerUpdate => "InternalLedgerUpdate",
            SinkKind::EconomicStateWrite => "EconomicStateWrite",
        }
    }

    pub fn short(self) -> &'static str {
        match self {
            SinkKind::EtherTokenTransfer => "ETT",
            SinkKind::InternalLedgerUpdate => "ILU",
            SinkKind::EconomicStateWrite => "ESW",
        }
    }
}

/// A taint label. Identity is (source, kind, implicit); `provenance` is the
/// shortest chain of points from the source to the carrier holding the
/// label and does not take part in comparisons.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TaintLabel {
    pub source_id: InstId,
    pub source_kind: SourceKind,
    /// Acquired through control dependence; never seeds further implicit flow.
    pub implicit: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub provenance: Vec<InstId>,
}

impl TaintLabel {
    pub fn new(source_id: InstId, source_kind: SourceKind) -> Self {
        TaintLabel { source_id, source_kind, implicit: false, provenance: Vec::new() }
    }

    pub fn as_implicit(&self) -> Self {
        TaintLabel { source_id: self.source_id, source_kind: self.source_kind, implicit: true, provenance: Vec::new() }
    }

    pub fn as_explicit(&self) -> Self {
        TaintLabel { source_id: self.source_id, source_kind: self.source_kind, implicit: false, provenance: Vec::new() }
    }

    fn key(&self) -> (InstId, SourceKind, bool) {
        (self.source_id, self.source_kind, self.implicit)
    }
}

impl PartialEq for TaintLabel {
    fn eq(&self, other: &Self) -> bool {
        self.key() == other.key()
    }
}

impl Eq for TaintLabel {}

impl Hash for TaintLabel {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.key().hash(state)
    }
}

impl PartialOrd for TaintLabel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for TaintLabel {
    fn cmp(&self, other: &Self) -> Ordering {
        self.key().cmp(&other.key())
    }
}

pub type LabelSet = BTreeSet<TaintLabel>;

static EMPTY: LabelSet = BTreeSet::new();

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TaintMap {
    pub var_taints: BTreeMap<ValueRef, LabelSet>,
    pub slot_taints: BTreeMap<SlotId, LabelSet>,
}

impl TaintMap {
    pub fn labels(&self, v: &ValueRef) -> &LabelSet {
        self.var_taints.get(v).unwrap_or(&EMPTY)
    }

    pub fn slot_labels(&self, s: &SlotId) -> &LabelSet {
        self.slot_taints.get(s).unwrap_or(&EMPTY)
    }

    pub fn is_tainted(&self, v: &ValueRef) -> bool {
        !self.labels(v).is_empty()
    }

    /// Adds labels to a variable; returns whether anything new arrived.
    pub fn add_var<'x>(&mut self, v: &ValueRef, labels: impl IntoIterator<Item = &'x TaintLabel>) -> bool {
        if v.is_const() {
            return false;
        }
        let mut changed = false;
        let mut pending = labels.into_iter().peekable();
        if pending.peek().is_none() {
            return false;
        }
        let set = self.var_taints.entry(v.clone()).or_default();
        for l in pending {
            if !set.contains(l) {
                set.insert(l.clone());
                changed = true;
            }
        }
        changed
    }

    pub fn add_slot<'x>(&mut self, s: &SlotId, labels: impl IntoIterator<Item = &'x TaintLabel>) -> bool {
        let mut changed = false;
        let mut pending = labels.into_iter().peekable();
        if pending.peek().is_none() {
            return false;
        }
        let set = self.slot_taints.entry(s.clone()).or_default();
        for l in pending {
            if !set.contains(l) {
                set.insert(l.clone());
                changed = true;
            }
        }
        changed
    }

    /// Label-wise inclusion, the monotonicity check between iterations.
    pub fn is_subset_of(&self, other: &TaintMap) -> bool {
        self.var_taints.iter().all(|(k, ls)| other.var_taints.get(k).is_some_and(|o| ls.is_subset(o)))
            && self.slot_taints.iter().all(|(k, ls)| other.slot_taints.get(k).is_some_and(|o| ls.is_subset(o)))
    }

    pub fn size(&self) -> usize {
        self.var_taints.values().map(|s| s.len()).sum::<usize>() + self.slot_taints.values().map(|s| s.len()).sum::<usize>()
    }

    /// Tainted variables (the carrier set), ignoring labels.
    pub fn tainted_vars(&self) -> BTreeSet<ValueRef> {
        self.var_taints.iter().filter(|(_, s)| !s.is_empty()).map(|(k, _)| k.clone()).collect()
    }

    /// JSON keyed by stable names: `f<idx>:<var>` for variables and
    /// `<stateVar>@<slot>` for slots.
    pub fn to_json(&self, ir: &ContractIr) -> Value {
        let label = |l: &TaintLabel| {
            json!({
                "source": l.source_id.to_string(),
                "kind": l.source_kind.as_str(),
                "implicit": l.implicit,
                "provenance": l.provenance.iter().map(|p| p.to_string()).collect::<Vec<_>>(),
            })
        };
        let mut vars = serde_json::Map::new();
        for (v, ls) in &self.var_taints {
            vars.insert(var_key(v), Value::Array(ls.iter().map(label).collect()));
        }
        let mut slots = serde_json::Map::new();
        for (s, ls) in &self.slot_taints {
            let key = format!("{}@{}", ir.slot_name(s), serde_json::to_string(&s.access_path).unwrap_or_default());
            slots.insert(key, Value::Array(ls.iter().map(label).collect()));
        }
        json!({ "varTaints": vars, "slotTaints": slots })
    }
}

pub fn var_key(v: &ValueRef) -> String {
    match v {
        ValueRef::Local { func, .. } | ValueRef::Param { func, .. } => format!("f{func}:{v}"),
        _ => v.to_string(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct PathSource {
    pub inst: InstId,
    pub kind: SourceKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct PathSink {
    pub inst: InstId,
    pub kind: SinkKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct TaintPath {
    pub source: PathSource,
    pub sink: PathSink,
    /// From the source point to the sink instruction, inclusive.
    pub steps: Vec<InstId>,
    pub source_function: String,
    pub sink_function: String,
    pub affected_slots: BTreeSet<SlotId>,
}

impl TaintPath {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

/// Everything the analysis of one contract produces.
#[derive(Debug, Clone)]
pub struct TaintResult {
    pub map: TaintMap,
    pub paths: Vec<TaintPath>,
    pub sinks: Vec<Sink>,
    pub iterations: usize,
    pub diagnostics: Vec<Diagnostic>,
    /// Paths dropped by the per-pair cap or the expansion budget.
    pub dropped_paths: usize,
}

/// Sources, fixpoint, sinks, then paths.
pub fn analyze_taint(ir: &ContractIr, icfg: &Icfg, facts: &Facts, config: &AnalysisConfig) -> TaintResult {
    let ctx = TaintContext::new(ir, icfg, facts, config);
    analyze_with(&ctx)
}

pub fn analyze_with(ctx: &TaintContext) -> TaintResult {
    let seeds = identify_sources(ctx);
    let Fixpoint { mut map, iterations, diagnostics: mut diags } = run_fixpoint(ctx, seeds);
    paths::fill_provenance(ctx, &mut map);
    let sinks = find_sinks(ctx, &map);
    let PathSet { paths, dropped, capped } = reconstruct_paths(ctx, &map, &sinks);
    if capped {
        diags.push(Diagnostic::warning(
            PATH_CAPPED,
            Default::default(),
            format!("path expansion budget exhausted; {dropped} further paths over the per-pair cap"),
        ));
    } else if dropped > 0 {
        diags.push(Diagnostic::warning(PATH_CAPPED, Default::default(), format!("{dropped} paths over the per-pair cap not reported")));
    }
    TaintResult { map, paths, sinks, iterations, diagnostics: diags, dropped_paths: dropped }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn provenance_is_not_identity() {
        let mut a = TaintLabel::new(InstId::new(0, 1), SourceKind::KnownDexCall);
        let b = a.clone();
        a.provenance = vec![InstId::new(0, 1), InstId::new(0, 2)];
        assert_eq!(a, b);
        assert_ne!(a.as_implicit(), b);
        assert_eq!(a.as_implicit().as_explicit(), b);
    }

    #[test]
    fn sink_priority_order() {
        assert!(SinkKind::EtherTokenTransfer < SinkKind::InternalLedgerUpdate);
        assert!(SinkKind::InternalLedgerUpdate < SinkKind::EconomicStateWrite);
    }
}
