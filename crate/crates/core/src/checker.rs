//! Defense checker: a rule-based post-filter that suppresses a flagged
//! group when concrete evidence shows the path is neutralized by an access
//! restriction, a cooldown, or a fee-on-transfer shape that finishes its
//! balance updates before calling a DEX router.

use crate::config::AnalysisConfig;
use crate::grouping::PathGroup;
use crate::ir::{BinOpKind, ContractIr, FunctionIr, InstId, InstKind, Instruction, TxProp, ValueRef};
use crate::taint::TaintPath;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeSet, HashMap};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DefenseKind {
    Privilege,
    Temporal,
    FeeOnTransfer,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct DefenseFinding {
    pub kind: DefenseKind,
    /// An instruction id, or `modifier <name>`.
    pub location: String,
    pub evidence: String,
    pub protected_functions: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CheckerOutcome {
    pub group_id: String,
    pub group_key: String,
    pub suppressed: bool,
    pub defenses: Vec<DefenseFinding>,
}

/// Functions whose code runs on the path: every function a step lies in,
/// the callee behind the sink, and what those call internally.
/// Returns (function, path function it runs on behalf of).
fn scope(ir: &ContractIr, path: &TaintPath) -> Vec<(u32, u32)> {
    let mut on_path: BTreeSet<u32> = path.steps.iter().map(|s| s.func).collect();
    if let Some(g) = sink_callee(ir, path) {
        on_path.insert(g);
    }
    let mut out = BTreeSet::new();
    for &f in &on_path {
        let mut stack = vec![f];
        let mut seen = BTreeSet::new();
        while let Some(g) = stack.pop() {
            if !seen.insert(g) {
                continue;
            }
            out.insert((g, f));
            for i in &ir.functions[g as usize].instructions {
                if let InstKind::InternalCall { resolved: Some(h), .. } = i.kind {
                    stack.push(h);
                }
            }
        }
    }
    out.into_iter().collect()
}

fn sink_callee(ir: &ContractIr, path: &TaintPath) -> Option<u32> {
    match ir.inst(path.sink.inst)?.kind {
        InstKind::InternalCall { resolved: Some(g), .. } => Some(g),
        _ => None,
    }
}

/// Where each local of a function is defined.
fn defs(f: &FunctionIr) -> HashMap<&ValueRef, &Instruction> {
    let mut m = HashMap::new();
    for i in &f.instructions {
        if let Some(r) = &i.result {
            m.insert(r, i);
        }
    }
    m
}

struct Shapes<'a> {
    defs: HashMap<&'a ValueRef, &'a Instruction>,
}

impl<'a> Shapes<'a> {
    fn new(f: &'a FunctionIr) -> Self {
        Shapes { defs: defs(f) }
    }

    /// Looks through copies and conversions.
    fn origin(&self, v: &'a ValueRef) -> &'a ValueRef {
        let mut v = v;
        for _ in 0..16 {
            match self.defs.get(v) {
                Some(i)
                    if matches!(&i.kind, InstKind::Assign(crate::ir::AssignForm::Copy | crate::ir::AssignForm::Convert { .. }))
                        && i.operands.len() == 1 =>
                {
                    v = &i.operands[0]
                }
                _ => break,
            }
        }
        v
    }

    fn binop(&self, v: &'a ValueRef) -> Option<(BinOpKind, &'a ValueRef, &'a ValueRef)> {
        let i = self.defs.get(self.origin(v))?;
        match i.kind {
            InstKind::BinOp { op } if i.operands.len() == 2 => Some((op, &i.operands[0], &i.operands[1])),
            _ => None,
        }
    }

    fn is_tx(&self, v: &'a ValueRef, p: TxProp) -> bool {
        matches!(self.origin(v), ValueRef::TxProperty { prop } if *prop == p)
    }

    /// A plain state variable read (no mapping keys), or a named constant.
    fn is_state(&self, v: &'a ValueRef) -> bool {
        let o = self.origin(v);
        match self.defs.get(o) {
            Some(i) => matches!(&i.kind, InstKind::SLoad { slot } if slot.access_path.is_empty()) && i.operands.is_empty(),
            None => matches!(o, ValueRef::Const { value } if is_identifier(value)) || matches!(o, ValueRef::StateSlot { .. }),
        }
    }

    fn is_const_or_state(&self, v: &'a ValueRef) -> bool {
        matches!(self.origin(v), ValueRef::Const { .. }) || self.is_state(v)
    }

    /// Conjuncts and disjuncts of a condition, recursively.
    fn atoms(&self, v: &'a ValueRef, out: &mut Vec<&'a ValueRef>) {
        match self.binop(v) {
            Some((BinOpKind::And | BinOpKind::Or, a, b)) => {
                self.atoms(a, out);
                self.atoms(b, out);
            }
            _ => out.push(v),
        }
    }

    /// `msg.sender == S` (or `!=` when `negated`), either side.
    fn sender_test(&self, v: &'a ValueRef, negated: bool) -> bool {
        let want = if negated { BinOpKind::Ne } else { BinOpKind::Eq };
        match self.binop(v) {
            Some((op, a, b)) if op == want => {
                (self.is_tx(a, TxProp::Sender) && self.is_state(b)) || (self.is_tx(b, TxProp::Sender) && self.is_state(a))
            }
            _ => false,
        }
    }

    /// `S + C` with S a state read and C a constant or state read.
    fn state_plus(&self, v: &'a ValueRef) -> bool {
        match self.binop(v) {
            Some((BinOpKind::Add, a, b)) => {
                (self.is_state(a) && self.is_const_or_state(b)) || (self.is_state(b) && self.is_const_or_state(a))
            }
            _ => false,
        }
    }

    /// `ts >= S + C` (or `>`), or the mirrored `S + C <= ts`. With
    /// `negated`, the failing form `ts < S + C` used before a revert.
    fn cooldown_test(&self, v: &'a ValueRef, negated: bool) -> bool {
        let Some((op, a, b)) = self.binop(v) else { return false };
        let ts = |x| self.is_tx(x, TxProp::Timestamp);
        let (later, earlier) = if negated {
            ([BinOpKind::Lt, BinOpKind::Le], [BinOpKind::Gt, BinOpKind::Ge])
        } else {
            ([BinOpKind::Ge, BinOpKind::Gt], [BinOpKind::Le, BinOpKind::Lt])
        };
        (later.contains(&op) && ts(a) && self.state_plus(b)) || (earlier.contains(&op) && ts(b) && self.state_plus(a))
    }
}

fn is_identifier(s: &str) -> bool {
    s.starts_with(|c: char| c.is_ascii_alphabetic() || c == '_') && !matches!(s, "true" | "false")
}

/// Does the branch taken when the condition holds end in a revert?
fn then_reverts(f: &FunctionIr, then: u32) -> bool {
    for i in &f.instructions[then as usize..] {
        match i.kind {
            InstKind::Revert => return true,
            InstKind::Return | InstKind::Jump { .. } | InstKind::CondJump { .. } => return false,
            _ => {}
        }
    }
    false
}

/// Guard conditions of a function: (instruction, condition, negated).
/// `require(c)` gives c; `if (c) revert` gives c negated.
fn guards(f: &FunctionIr) -> Vec<(InstId, &ValueRef, bool)> {
    let mut out = Vec::new();
    for i in &f.instructions {
        match &i.kind {
            InstKind::Require => out.extend(i.operands.first().map(|c| (i.id, c, false))),
            InstKind::CondJump { then, .. } if then_reverts(f, *then) => out.extend(i.operands.first().map(|c| (i.id, c, true))),
            _ => {}
        }
    }
    out
}

fn inst_text(ir: &ContractIr, id: InstId) -> String {
    crate::ir::describe_inst(ir, id)
}

fn name(ir: &ContractIr, f: u32) -> String {
    ir.functions[f as usize].name.clone()
}

pub fn check_privilege(ir: &ContractIr, path: &TaintPath, cfg: &AnalysisConfig) -> Vec<DefenseFinding> {
    let mut out: Vec<DefenseFinding> = Vec::new();
    for (g, on_behalf) in scope(ir, path) {
        let f = &ir.functions[g as usize];
        for m in f.modifiers.iter().filter(|m| cfg.is_privileged_modifier(m)) {
            add(&mut out, DefenseKind::Privilege, format!("modifier {m}"), format!("{} is declared {m}", f.name), name(ir, on_behalf));
        }
        let sh = Shapes::new(f);
        for (at, cond, negated) in guards(f) {
            let mut atoms = Vec::new();
            sh.atoms(cond, &mut atoms);
            if atoms.iter().any(|a| sh.sender_test(a, negated)) {
                let text = inst_text(ir, at);
                add(&mut out, DefenseKind::Privilege, at.to_string(), format!("sender guard in {}: {text}", f.name), name(ir, on_behalf));
            }
        }
    }
    out
}

pub fn check_temporal(ir: &ContractIr, path: &TaintPath) -> Vec<DefenseFinding> {
    let mut out = Vec::new();
    for (g, on_behalf) in scope(ir, path) {
        let f = &ir.functions[g as usize];
        let sh = Shapes::new(f);
        for (at, cond, negated) in guards(f) {
            let mut atoms = Vec::new();
            sh.atoms(cond, &mut atoms);
            if atoms.iter().any(|a| sh.cooldown_test(a, negated)) {
                let text = inst_text(ir, at);
                add(&mut out, DefenseKind::Temporal, at.to_string(), format!("cooldown guard in {}: {text}", f.name), name(ir, on_behalf));
            }
        }
    }
    out
}

/// Mapping slots treated as balances: by name, or written by a
/// transfer-named function.
pub fn balance_slots(ir: &ContractIr, cfg: &AnalysisConfig) -> BTreeSet<u32> {
    let mut out: BTreeSet<u32> =
        ir.state_vars.iter().filter(|v| v.is_mapping() && cfg.balance_mappings.contains(&v.name)).map(|v| v.slot).collect();
    for f in ir.functions.iter().filter(|f| cfg.is_transfer_name(&f.name)) {
        for i in &f.instructions {
            if let InstKind::SStore { slot } = &i.kind {
                if slot.is_mapping_base {
                    out.insert(slot.base_slot);
                }
            }
        }
    }
    out
}

pub fn check_fee_on_transfer(ir: &ContractIr, path: &TaintPath, cfg: &AnalysisConfig) -> Vec<DefenseFinding> {
    let home = sink_callee(ir, path).unwrap_or(path.sink.inst.func);
    let f = &ir.functions[home as usize];
    if !cfg.is_transfer_name(&f.name) {
        return vec![];
    }
    let balances = balance_slots(ir, cfg);
    let stores: Vec<u32> = f
        .instructions
        .iter()
        .filter(|i| matches!(&i.kind, InstKind::SStore { slot } if balances.contains(&slot.base_slot)))
        .map(|i| i.id.idx)
        .collect();
    let calls: Vec<&Instruction> = f.instructions.iter().filter(|i| matches!(i.kind, InstKind::ExternalCall { .. })).collect();
    let (Some(&last_store), Some(first_call)) = (stores.iter().max(), calls.first()) else { return vec![] };
    let all_router = calls.iter().all(|i| match &i.kind {
        InstKind::ExternalCall { interface, function, .. } => cfg.is_router(interface.as_deref(), function),
        _ => false,
    });
    if last_store >= first_call.id.idx || !all_router {
        return vec![];
    }
    let callees: Vec<String> = calls
        .iter()
        .map(|i| match &i.kind {
            InstKind::ExternalCall { function, .. } => function.clone(),
            _ => unreachable!(),
        })
        .collect();
    let mut out = Vec::new();
    add(
        &mut out,
        DefenseKind::FeeOnTransfer,
        first_call.id.to_string(),
        format!(
            "{}: balance writes at {:?} all precede router calls ({}) starting at {}",
            f.name,
            stores,
            callees.join(", "),
            first_call.id.idx
        ),
        f.name.clone(),
    );
    out
}

fn add(out: &mut Vec<DefenseFinding>, kind: DefenseKind, location: String, evidence: String, protects: String) {
    if let Some(d) = out.iter_mut().find(|d| d.kind == kind && d.location == location && d.evidence == evidence) {
        d.protected_functions.insert(protects);
        return;
    }
    out.push(DefenseFinding { kind, location, evidence, protected_functions: [protects].into_iter().collect() });
}

/// All three checks over the group's representative. A defense protecting
/// any function on that path suppresses the whole group.
pub fn check_group(ir: &ContractIr, group: &PathGroup, cfg: &AnalysisConfig) -> CheckerOutcome {
    let rep = &group.representative;
    let mut defenses = check_privilege(ir, rep, cfg);
    defenses.extend(check_temporal(ir, rep));
    defenses.extend(check_fee_on_transfer(ir, rep, cfg));
    let mut on_path: BTreeSet<String> = rep.steps.iter().map(|s| name(ir, s.func)).collect();
    on_path.insert(rep.sink_function.clone());
    if let Some(g) = sink_callee(ir, rep) {
        on_path.insert(name(ir, g));
    }
    let suppressed = defenses.iter().any(|d| d.protected_functions.iter().any(|p| on_path.contains(p)));
    CheckerOutcome { group_id: group.id.clone(), group_key: group.key.to_string(), suppressed, defenses }
}

pub fn apply_checker(ir: &ContractIr, groups: &[&PathGroup], cfg: &AnalysisConfig) -> Vec<CheckerOutcome> {
    groups.iter().map(|g| check_group(ir, g, cfg)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::parse_source;
    use crate::ir::{build_icfg, extract_primitives, lower_unit};
    use crate::taint::analyze_taint;

    fn analyze(src: &str) -> (ContractIr, Vec<TaintPath>) {
        let u = parse_source(src, "t.sol");
        assert!(u.errors().count() == 0, "{:?}", u.diagnostics);
        let ir = lower_unit(&u, src).pop().unwrap();
        let cfg = AnalysisConfig::default();
        let r = analyze_taint(&ir, &build_icfg(&ir), &extract_primitives(&ir, &cfg), &cfg);
        (ir, r.paths)
    }

    const GUARDED: &str =
        "contract G { address owner; uint256 last; uint256 gap; mapping(address => bool) whitelisted; mapping(address => uint256) bal;
        function f(uint256 v) external { GUARD bal[msg.sender] = v; } }";

    fn with_guard(g: &str) -> (ContractIr, Vec<TaintPath>) {
        analyze(&GUARDED.replace("GUARD", g))
    }

    #[test]
    fn no_guard_no_finding() {
        let (ir, paths) = with_guard("");
        let cfg = AnalysisConfig::default();
        assert!(!paths.is_empty());
        assert!(check_privilege(&ir, &paths[0], &cfg).is_empty());
        assert!(check_temporal(&ir, &paths[0]).is_empty());
    }

    #[test]
    fn sender_guard_shapes() {
        let cfg = AnalysisConfig::default();
        for (g, hit) in [
            ("require(msg.sender == owner);", true),
            ("require(owner == msg.sender);", true),
            ("require(msg.sender == owner || whitelisted[msg.sender]);", true),
            ("if (msg.sender != owner) revert();", true),
            ("require(whitelisted[msg.sender]);", false),
            ("require(msg.sender != owner);", false),
            ("require(v == last);", false),
        ] {
            let (ir, paths) = with_guard(g);
            assert_eq!(!check_privilege(&ir, &paths[0], &cfg).is_empty(), hit, "{g}");
        }
    }

    #[test]
    fn cooldown_shapes() {
        for (g, hit) in [
            ("require(block.timestamp >= last + gap);", true),
            ("require(block.timestamp > last + 60);", true),
            ("require(last + gap <= block.timestamp);", true),
            ("if (block.timestamp < last + gap) revert();", true),
            ("require(block.timestamp > 0);", false),
            ("require(block.timestamp >= v + 1);", false),
            ("if (block.timestamp >= last + gap) revert();", false),
        ] {
            let (ir, paths) = with_guard(g);
            assert_eq!(!check_temporal(&ir, &paths[0]).is_empty(), hit, "{g}");
        }
    }

    #[test]
    fn findings_cite_the_guard() {
        let (ir, paths) = with_guard("require(block.timestamp >= last + gap);");
        let d = &check_temporal(&ir, &paths[0])[0];
        assert!(d.evidence.contains("require(block.timestamp >= last + gap)"), "{}", d.evidence);
        assert!(d.protected_functions.contains("f"));
        let at: InstId = d.location.parse().unwrap();
        assert_eq!(ir.inst(at).unwrap().kind, InstKind::Require);
    }
}
