//! Path grouping: paths sharing source function, sink function and the set
//! of critical operations they pass through collapse into one group with the
//! longest member as representative.

use crate::ir::{ContractIr, InstId, InstKind, ValueRef};
use crate::taint::{SinkKind, SourceKind, TaintPath};
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum CriticalKind {
    #[serde(rename = "EC")]
    ExternalCall,
    #[serde(rename = "SSTORE")]
    SStore,
}

impl CriticalKind {
    pub fn as_str(self) -> &'static str {
        match self {
            CriticalKind::ExternalCall => "EC",
            CriticalKind::SStore => "SSTORE",
        }
    }
}

/// Canonical form of a critical operation. Holds no instruction ids, so it
/// survives renumbering.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct CriticalOp {
    pub kind: CriticalKind,
    /// Called function name, or state variable name.
    pub target: String,
    pub operand_kinds: Vec<String>,
}

impl fmt::Display for CriticalOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.kind.as_str(), self.target)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct GroupKey {
    pub source_function: String,
    pub sink_function: String,
    pub critical_ops: BTreeSet<CriticalOp>,
}

impl GroupKey {
    /// Stable short id derived from the canonical key.
    pub fn id(&self) -> String {
        let canon = serde_json::to_string(self).expect("key serializes");
        let digest = Sha256::digest(canon.as_bytes());
        let hex: String = digest.iter().take(6).map(|b| format!("{b:02x}")).collect();
        format!("G-{hex}")
    }

    pub fn render_ops(&self) -> String {
        if self.critical_ops.is_empty() {
            return "none".into();
        }
        self.critical_ops.iter().map(|o| o.to_string()).collect::<Vec<_>>().join(", ")
    }
}

impl fmt::Display for GroupKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let ops: Vec<String> = self.critical_ops.iter().map(|o| o.to_string()).collect();
        write!(f, "<{}, {}, {{{}}}>", self.source_function, self.sink_function, ops.join(", "))
    }
}

fn operand_kind(v: &ValueRef) -> String {
    v.kind_name().to_string()
}

pub fn critical_op(ir: &ContractIr, id: InstId) -> Option<CriticalOp> {
    let inst = ir.inst(id)?;
    let (kind, target) = match &inst.kind {
        InstKind::ExternalCall { function, .. } => (CriticalKind::ExternalCall, function.clone()),
        InstKind::SStore { slot } => (CriticalKind::SStore, ir.slot_name(slot)),
        _ => return None,
    };
    Some(CriticalOp { kind, target, operand_kinds: inst.operands.iter().map(operand_kind).collect() })
}

pub fn compute_key(ir: &ContractIr, path: &TaintPath) -> GroupKey {
    GroupKey {
        source_function: path.source_function.clone(),
        sink_function: path.sink_function.clone(),
        critical_ops: path.steps.iter().filter_map(|&s| critical_op(ir, s)).collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct PathGroup {
    pub id: String,
    pub key: GroupKey,
    pub members: Vec<TaintPath>,
    pub representative: TaintPath,
}

impl PathGroup {
    pub fn source_kinds(&self) -> BTreeSet<SourceKind> {
        self.members.iter().map(|p| p.source.kind).collect()
    }

    pub fn sink_kinds(&self) -> BTreeSet<SinkKind> {
        self.members.iter().map(|p| p.sink.kind).collect()
    }
}

/// Longest member; ties go to the lexicographically smallest step sequence.
pub fn select_representative(members: &[TaintPath]) -> &TaintPath {
    members.iter().max_by(|a, b| a.steps.len().cmp(&b.steps.len()).then_with(|| b.steps.cmp(&a.steps))).expect("group has members")
}

/// Partitions `paths` by key. Groups come out ordered by key, members in
/// input order.
pub fn group_paths(ir: &ContractIr, paths: &[TaintPath]) -> Vec<PathGroup> {
    let mut by_key: BTreeMap<GroupKey, Vec<TaintPath>> = BTreeMap::new();
    for p in paths {
        by_key.entry(compute_key(ir, p)).or_default().push(p.clone());
    }
    by_key
        .into_iter()
        .map(|(key, members)| {
            let representative = select_representative(&members).clone();
            PathGroup { id: key.id(), key, members, representative }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct FunctionExcerpt {
    pub name: String,
    pub signature: String,
    pub visibility: String,
    pub modifiers: Vec<String>,
    pub excerpt: String,
    /// Lines left out by the cap.
    pub omitted_lines: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct GroupSummary {
    pub group_id: String,
    pub contract: String,
    pub key: String,
    pub source_function: FunctionExcerpt,
    pub sink_function: FunctionExcerpt,
    /// Rendered critical operations, or "none".
    pub critical_operations: String,
    pub affected_states: Vec<String>,
    pub source_kinds: Vec<String>,
    pub sink_kinds: Vec<String>,
    pub member_count: usize,
    pub representative_steps: Vec<String>,
    /// Callee names of the external calls among the critical operations.
    pub external_calls: Vec<String>,
    /// `require` conditions and revert-guarded branches in the functions the
    /// representative passes through.
    pub guards: Vec<String>,
}

impl GroupSummary {
    pub fn affected_states_text(&self) -> String {
        if self.affected_states.is_empty() {
            "none".into()
        } else {
            self.affected_states.join(", ")
        }
    }
}

fn line_of(text: &str, offset: usize) -> usize {
    text.as_bytes()[..offset.min(text.len())].iter().filter(|&&b| b == b'\n').count()
}

fn excerpt(ir: &ContractIr, func: u32, steps: &[InstId], cap: usize) -> FunctionExcerpt {
    let f = &ir.functions[func as usize];
    let (lines, focus): (Vec<String>, Vec<usize>) = match &f.source {
        Some(src) => {
            let lines: Vec<String> = src.lines().map(str::to_string).collect();
            let focus = steps
                .iter()
                .filter(|s| s.func == func)
                .filter_map(|&s| ir.inst(s))
                .filter(|i| i.span.start >= f.span.start)
                .map(|i| line_of(src, i.span.start - f.span.start))
                .collect();
            (lines, focus)
        }
        // imported IR carries no text; list the instructions instead
        None => {
            let lines = f.instructions.iter().map(|i| format!("{:>3}: {}", i.id.idx, crate::ir::render_inst(ir, i))).collect();
            let focus = steps.iter().filter(|s| s.func == func && !s.is_pseudo()).map(|s| s.idx as usize).collect();
            (lines, focus)
        }
    };
    let n = lines.len();
    let (start, end) = if n <= cap {
        (0, n)
    } else {
        let lo = focus.iter().copied().min().unwrap_or(0);
        let hi = focus.iter().copied().max().unwrap_or(0);
        let center = (lo + hi) / 2;
        let start = center.saturating_sub(cap / 2).min(n - cap);
        (start, start + cap)
    };
    FunctionExcerpt {
        name: f.name.clone(),
        signature: f.signature(),
        visibility: format!("{:?}", f.visibility).to_lowercase(),
        modifiers: f.modifiers.clone(),
        excerpt: lines[start..end].join("\n"),
        omitted_lines: n - (end - start),
    }
}

fn inst_text(ir: &ContractIr, id: InstId) -> Option<String> {
    let f = &ir.functions[id.func as usize];
    let i = ir.inst(id)?;
    let src = f.source.as_ref()?;
    let (a, b) = (i.span.start.checked_sub(f.span.start)?, i.span.end.checked_sub(f.span.start)?);
    src.get(a..b).map(|t| t.split_whitespace().collect::<Vec<_>>().join(" "))
}

/// Does the branch taken when the condition at `cj` holds end in a revert?
fn then_reverts(f: &crate::ir::FunctionIr, then: u32) -> bool {
    for i in &f.instructions[then as usize..] {
        match i.kind {
            InstKind::Revert => return true,
            InstKind::Return | InstKind::Jump { .. } | InstKind::CondJump { .. } => return false,
            _ => {}
        }
    }
    false
}

fn guards(ir: &ContractIr, funcs: &BTreeSet<u32>) -> Vec<String> {
    let mut out = Vec::new();
    for &fi in funcs {
        let f = &ir.functions[fi as usize];
        for i in &f.instructions {
            match &i.kind {
                InstKind::Require => {
                    out.push(inst_text(ir, i.id).unwrap_or_else(|| crate::ir::render_inst(ir, i)));
                }
                InstKind::CondJump { then, .. } if then_reverts(f, *then) => {
                    let cond = inst_text(ir, i.id).unwrap_or_else(|| i.operands.first().map(|o| o.to_string()).unwrap_or_default());
                    out.push(format!("if ({cond}) revert"));
                }
                _ => {}
            }
        }
    }
    out
}

fn render_step(ir: &ContractIr, id: InstId) -> String {
    let f = &ir.functions[id.func as usize];
    match ir.inst(id) {
        Some(i) => format!("{id} {}: {}", f.name, crate::ir::render_inst(ir, i)),
        None => {
            let ps: Vec<&str> = f.params.iter().map(|p| p.name.as_str()).collect();
            format!("{id} {}: parameters ({})", f.name, ps.join(", "))
        }
    }
}

pub fn summarize_group(ir: &ContractIr, group: &PathGroup, line_cap: usize) -> GroupSummary {
    let rep = &group.representative;
    let src_fn = rep.source.inst.func;
    let sink_fn = ir.function_index(&rep.sink_function).unwrap_or(rep.sink.inst.func);
    let mut funcs: BTreeSet<u32> = rep.steps.iter().map(|s| s.func).collect();
    funcs.insert(sink_fn);
    let affected: BTreeSet<String> = group.members.iter().flat_map(|p| p.affected_slots.iter()).map(|s| ir.slot_name(s)).collect();
    GroupSummary {
        group_id: group.id.clone(),
        contract: ir.contract.clone(),
        key: group.key.to_string(),
        source_function: excerpt(ir, src_fn, &rep.steps, line_cap),
        sink_function: excerpt(ir, sink_fn, &rep.steps, line_cap),
        critical_operations: group.key.render_ops(),
        affected_states: affected.into_iter().collect(),
        source_kinds: group.source_kinds().into_iter().map(|k| k.as_str().to_string()).collect(),
        sink_kinds: group.sink_kinds().into_iter().map(|k| k.as_str().to_string()).collect(),
        member_count: group.members.len(),
        representative_steps: rep.steps.iter().map(|&s| render_step(ir, s)).collect(),
        external_calls: group.key.critical_ops.iter().filter(|o| o.kind == CriticalKind::ExternalCall).map(|o| o.target.clone()).collect(),
        guards: guards(ir, &funcs),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::AnalysisConfig;
    use crate::frontend::parse_source;
    use crate::ir::{build_icfg, extract_primitives, lower_unit};
    use crate::taint::analyze_taint;

    fn zzf() -> (ContractIr, Vec<TaintPath>) {
        let src = include_str!("../tests/fixtures/zzf.sol");
        let u = parse_source(src, "zzf.sol");
        let ir = lower_unit(&u, src).pop().unwrap();
        let cfg = AnalysisConfig::default();
        let r = analyze_taint(&ir, &build_icfg(&ir), &extract_primitives(&ir, &cfg), &cfg);
        (ir, r.paths)
    }

    #[test]
    fn zzf_key_matches_the_expected_shape() {
        let (ir, paths) = zzf();
        let esw = paths.iter().find(|p| p.sink.kind == SinkKind::EconomicStateWrite && p.source.kind == SourceKind::KnownDexCall).unwrap();
        let k = compute_key(&ir, esw);
        assert_eq!(k.to_string(), "<burnToHolder, burnFeeRewards, {EC:getAmountsOut, SSTORE:burnAmount}>");
        assert!(k.id().starts_with("G-"));
        assert_eq!(k.id().len(), 14);
    }

    #[test]
    fn no_critical_ops_renders_none() {
        let (ir, paths) = zzf();
        let p = paths.iter().find(|p| p.source.kind == SourceKind::PublicInput && p.sink.kind == SinkKind::InternalLedgerUpdate).unwrap();
        let k = compute_key(&ir, p);
        assert!(k.critical_ops.is_empty());
        assert_eq!(k.render_ops(), "none");
    }

    #[test]
    fn zzf_groups() {
        let (ir, paths) = zzf();
        let groups = group_paths(&ir, &paths);
        assert_eq!(groups.iter().map(|g| g.members.len()).sum::<usize>(), paths.len());
        let ec_only = groups.iter().find(|g| g.key.render_ops() == "EC:getAmountsOut").unwrap();
        // the ledger-update path and the transfer path collapse; the transfer one is longer
        assert_eq!(ec_only.members.len(), 2);
        assert_eq!(ec_only.representative.sink.kind, SinkKind::EtherTokenTransfer);
        let s = summarize_group(&ir, ec_only, 120);
        assert!(s.affected_states.contains(&"burnAmount".to_string()));
        assert!(s.source_function.excerpt.contains("getAmountsOut"));
        assert!(s.sink_function.excerpt.contains("_transfer"));
        assert_eq!(s.source_function.omitted_lines, 0);
    }

    #[test]
    fn tie_break_prefers_smaller_steps() {
        let (_, paths) = zzf();
        let mut a = paths[0].clone();
        let mut b = paths[0].clone();
        a.steps = vec![InstId::new(0, 1), InstId::new(0, 3)];
        b.steps = vec![InstId::new(0, 1), InstId::new(0, 2)];
        let members = vec![a, b.clone()];
        assert_eq!(select_representative(&members).steps, b.steps);
    }

    #[test]
    fn excerpt_cap_centers_on_steps() {
        let body: String = (0..300).map(|i| format!("        x = {i};\n")).collect();
        let src = format!("contract L {{ uint x; IR r;\n    function f() public {{\n{body}        x = r.getReserves();\n    }}\n}}");
        let u = parse_source(&src, "t.sol");
        let ir = lower_unit(&u, &src).pop().unwrap();
        let ec = ir.functions[0].instructions.iter().find(|i| matches!(i.kind, InstKind::ExternalCall { .. })).unwrap();
        let e = excerpt(&ir, 0, &[ec.id], 120);
        assert_eq!(e.excerpt.lines().count(), 120);
        assert_eq!(e.omitted_lines, ir.functions[0].source.as_ref().unwrap().lines().count() - 120);
        assert!(e.excerpt.contains("getReserves"));
    }
}
