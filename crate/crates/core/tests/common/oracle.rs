//! Brute-force taint oracle, written independently of the engine: its own
//! dependence extraction, control dependence by node-removal reachability
//! and naive transitive closure.

#![allow(dead_code)]

use flashtrace_core::config::AnalysisConfig;
use flashtrace_core::ir::*;
use flashtrace_core::taint::{SinkKind, SourceKind};
use std::collections::{BTreeMap, BTreeSet};

/// (source, kind, implicit)
pub type Lab = (InstId, SourceKind, bool);

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum Node {
    Var(ValueRef),
    Slot(SlotId),
}

pub struct Oracle {
    pub vars: BTreeMap<ValueRef, BTreeSet<Lab>>,
    pub slots: BTreeMap<SlotId, BTreeSet<Lab>>,
    /// (sink instruction, kind) -> labels on the sink operands
    pub sinks: BTreeMap<(InstId, SinkKind), BTreeSet<Lab>>,
}

fn alias(a: &SlotId, b: &SlotId) -> bool {
    if a.base_slot != b.base_slot {
        return false;
    }
    for (x, y) in a.access_path.iter().zip(&b.access_path) {
        let ok = match (x, y) {
            (PathElem::MappingKey(p), PathElem::MappingKey(q)) | (PathElem::ArrayIndex(p), PathElem::ArrayIndex(q)) => {
                *p == AbsKey::Any || *q == AbsKey::Any || p == q
            }
            (PathElem::Member(p), PathElem::Member(q)) => p == q,
            _ => true,
        };
        if !ok {
            return false;
        }
    }
    true
}

fn callee_index(ir: &ContractIr, inst: &Instruction) -> Option<usize> {
    match &inst.kind {
        InstKind::InternalCall { callee, resolved: Some(r), .. } if ir.functions.get(*r as usize).is_some_and(|f| &f.name == callee) => {
            Some(*r as usize)
        }
        _ => None,
    }
}

fn call_rets(inst: &Instruction) -> Vec<ValueRef> {
    let n = match &inst.kind {
        InstKind::InternalCall { returns, .. } | InstKind::ExternalCall { returns, .. } => (*returns).max(1),
        _ => 1,
    };
    (0..n).map(|k| ValueRef::CallReturn { inst: inst.id, index: k }).collect()
}

/// Explicit dependence edges between carriers.
pub fn edges(ir: &ContractIr) -> Vec<(Node, Node)> {
    let mut out = Vec::new();
    let stores: Vec<&Instruction> = ir.instructions().filter(|i| matches!(i.kind, InstKind::SStore { .. })).collect();
    for f in &ir.functions {
        for inst in &f.instructions {
            match &inst.kind {
                InstKind::Assign(_) | InstKind::BinOp { .. } | InstKind::Phi => {
                    if let Some(r) = &inst.result {
                        for o in &inst.operands {
                            out.push((Node::Var(o.clone()), Node::Var(r.clone())));
                        }
                    }
                }
                InstKind::SLoad { slot } => {
                    let r = inst.result.clone().unwrap();
                    for o in &inst.operands {
                        out.push((Node::Var(o.clone()), Node::Var(r.clone())));
                    }
                    for s in &stores {
                        let InstKind::SStore { slot: ss } = &s.kind else { unreachable!() };
                        if alias(ss, slot) {
                            out.push((Node::Slot(ss.clone()), Node::Var(r.clone())));
                        }
                    }
                }
                InstKind::SStore { slot } => out.push((Node::Var(inst.operands[0].clone()), Node::Slot(slot.clone()))),
                InstKind::InternalCall { .. } => match callee_index(ir, inst) {
                    Some(g) => {
                        for (i, a) in inst.operands.iter().enumerate() {
                            out.push((Node::Var(a.clone()), Node::Var(ValueRef::Param { func: g as u32, index: i as u32 })));
                        }
                        for r in ir.functions[g].instructions.iter().filter(|i| i.kind == InstKind::Return) {
                            for (k, o) in r.operands.iter().enumerate() {
                                out.push((Node::Var(o.clone()), Node::Var(ValueRef::CallReturn { inst: inst.id, index: k as u32 })));
                            }
                        }
                    }
                    None => {
                        for a in &inst.operands {
                            for d in call_rets(inst) {
                                out.push((Node::Var(a.clone()), Node::Var(d)));
                            }
                        }
                    }
                },
                _ => {}
            }
        }
    }
    out
}

/// Successor lists with a virtual exit `n`.
fn cfg(insts: &[Instruction]) -> Vec<Vec<usize>> {
    let n = insts.len();
    insts
        .iter()
        .enumerate()
        .map(|(i, inst)| match &inst.kind {
            InstKind::Return | InstKind::Revert => vec![n],
            InstKind::Jump { target } => vec![*target as usize],
            InstKind::CondJump { then, otherwise } => vec![*then as usize, *otherwise as usize],
            InstKind::Require => vec![i + 1, n],
            _ if i + 1 < n => vec![i + 1],
            _ => vec![n],
        })
        .collect()
}

fn reaches_exit_without(succ: &[Vec<usize>], from: usize, removed: usize) -> bool {
    let n = succ.len();
    if from == removed {
        return false;
    }
    let mut seen = vec![false; n + 1];
    let mut stack = vec![from];
    while let Some(v) = stack.pop() {
        if v == n {
            return true;
        }
        if seen[v] || v == removed {
            continue;
        }
        seen[v] = true;
        stack.extend(succ[v].iter().copied());
    }
    false
}

/// v postdominates s iff removing v disconnects s from the exit.
fn pdom(succ: &[Vec<usize>], v: usize, s: usize) -> bool {
    s == v || !reaches_exit_without(succ, s, v)
}

/// (dependent, branch) pairs.
pub fn control_deps(insts: &[Instruction]) -> Vec<(usize, usize)> {
    let succ = cfg(insts);
    let n = insts.len();
    let mut out = Vec::new();
    for c in 0..n {
        if !matches!(insts[c].kind, InstKind::CondJump { .. } | InstKind::Require) {
            continue;
        }
        let ss: BTreeSet<usize> = succ[c].iter().copied().collect();
        if ss.len() < 2 {
            continue;
        }
        for v in 0..n {
            let strictly = v != c && pdom(&succ, v, c);
            if strictly {
                continue;
            }
            if ss.iter().any(|&s| s != n && pdom(&succ, v, s)) {
                out.push((v, c));
            }
        }
    }
    out
}

fn feeds_mul_div(ir: &ContractIr, start: Vec<ValueRef>) -> bool {
    let mut reach: BTreeSet<ValueRef> = start.into_iter().collect();
    loop {
        let before = reach.len();
        for f in &ir.functions {
            for inst in &f.instructions {
                let hit = inst.operands.iter().any(|o| reach.contains(o));
                if !hit {
                    continue;
                }
                match &inst.kind {
                    InstKind::BinOp { op: BinOpKind::Mul | BinOpKind::Div } => return true,
                    InstKind::BinOp { .. } | InstKind::Assign(_) | InstKind::Phi | InstKind::SLoad { .. } => {
                        reach.extend(inst.result.clone())
                    }
                    InstKind::InternalCall { .. } => match callee_index(ir, inst) {
                        Some(g) => {
                            for (i, o) in inst.operands.iter().enumerate() {
                                if reach.contains(o) {
                                    reach.insert(ValueRef::Param { func: g as u32, index: i as u32 });
                                }
                            }
                        }
                        None => reach.extend(call_rets(inst)),
                    },
                    InstKind::Return => {
                        let fi = inst.id.func as usize;
                        for g in &ir.functions {
                            for cs in &g.instructions {
                                if callee_index(ir, cs) == Some(fi) {
                                    for (k, o) in inst.operands.iter().enumerate() {
                                        if reach.contains(o) {
                                            reach.insert(ValueRef::CallReturn { inst: cs.id, index: k as u32 });
                                        }
                                    }
                                }
                            }
                        }
                    }
                    _ => {}
                }
            }
        }
        if reach.len() == before {
            return false;
        }
    }
}

fn seeds(ir: &ContractIr, cfg: &AnalysisConfig) -> BTreeMap<Node, BTreeSet<Lab>> {
    let mut m: BTreeMap<Node, BTreeSet<Lab>> = BTreeMap::new();
    for (fi, f) in ir.functions.iter().enumerate() {
        let public =
            matches!(f.visibility, flashtrace_core::frontend::Visibility::Public | flashtrace_core::frontend::Visibility::External)
                && f.kind != flashtrace_core::frontend::FunctionKind::Constructor;
        if public {
            for i in 0..f.params.len() {
                m.entry(Node::Var(ValueRef::Param { func: fi as u32, index: i as u32 })).or_default().insert((
                    InstId::entry(fi as u32),
                    SourceKind::PublicInput,
                    false,
                ));
            }
        }
        for inst in &f.instructions {
            match &inst.kind {
                InstKind::Assign(AssignForm::Copy) => {
                    if let Some(ValueRef::TxProperty { prop: TxProp::Value | TxProp::Data }) = inst.operands.first() {
                        m.entry(Node::Var(inst.result.clone().unwrap())).or_default().insert((inst.id, SourceKind::TxProperty, false));
                    }
                }
                InstKind::ExternalCall { function, mutability, .. } => {
                    let kind = if cfg.dex_functions.contains(function) {
                        Some(SourceKind::KnownDexCall)
                    } else if matches!(
                        mutability,
                        Some(flashtrace_core::frontend::Mutability::View | flashtrace_core::frontend::Mutability::Pure)
                    ) && feeds_mul_div(ir, call_rets(inst))
                    {
                        Some(SourceKind::OracleViewCall)
                    } else {
                        None
                    };
                    if let Some(k) = kind {
                        for d in call_rets(inst) {
                            m.entry(Node::Var(d)).or_default().insert((inst.id, k, false));
                        }
                    }
                }
                _ => {}
            }
        }
    }
    m
}

fn close(m: &mut BTreeMap<Node, BTreeSet<Lab>>, es: &[(Node, Node)]) {
    loop {
        let mut changed = false;
        for (a, b) in es {
            let from: Vec<Lab> = m.get(a).map(|s| s.iter().copied().collect()).unwrap_or_default();
            if let Node::Var(ValueRef::Const { .. }) = b {
                continue;
            }
            let to = m.entry(b.clone()).or_default();
            for l in from {
                changed |= to.insert(l);
            }
        }
        if !changed {
            break;
        }
    }
}

pub fn run(ir: &ContractIr, cfg: &AnalysisConfig) -> Oracle {
    let es = edges(ir);
    let mut m = seeds(ir, cfg);
    close(&mut m, &es);
    // implicit seeds from explicit labels on branch conditions, depth 1
    let mut implicit: BTreeMap<Node, BTreeSet<Lab>> = BTreeMap::new();
    for (fi, f) in ir.functions.iter().enumerate() {
        for (v, c) in control_deps(&f.instructions) {
            let cond = f.instructions[c].operands[0].clone();
            let labs: Vec<Lab> =
                m.get(&Node::Var(cond)).map(|s| s.iter().filter(|l| !l.2).map(|l| (l.0, l.1, true)).collect()).unwrap_or_default();
            if labs.is_empty() {
                continue;
            }
            let inst = &f.instructions[v];
            let mut targets: Vec<Node> = Vec::new();
            match &inst.kind {
                InstKind::SStore { slot } => targets.push(Node::Slot(slot.clone())),
                InstKind::Return => {
                    for g in &ir.functions {
                        for cs in &g.instructions {
                            if callee_index(ir, cs) == Some(fi) {
                                targets.extend(call_rets(cs).into_iter().map(Node::Var));
                            }
                        }
                    }
                }
                InstKind::InternalCall { .. } | InstKind::ExternalCall { .. } | InstKind::LowLevelCall { .. } => {
                    targets.extend(call_rets(inst).into_iter().map(Node::Var))
                }
                _ => targets.extend(inst.result.clone().map(Node::Var)),
            }
            for t in targets {
                implicit.entry(t).or_default().extend(labs.iter().copied());
            }
        }
    }
    for (k, v) in implicit {
        m.entry(k).or_default().extend(v);
    }
    close(&mut m, &es);

    let mut vars = BTreeMap::new();
    let mut slots = BTreeMap::new();
    for (k, v) in m {
        if v.is_empty() {
            continue;
        }
        match k {
            Node::Var(ValueRef::Const { .. }) => {}
            Node::Var(x) => {
                vars.insert(x, v);
            }
            Node::Slot(s) => {
                slots.insert(s, v);
            }
        }
    }
    let sinks = sinks(ir, cfg, &vars);
    Oracle { vars, slots, sinks }
}

fn sinks(ir: &ContractIr, cfg: &AnalysisConfig, vars: &BTreeMap<ValueRef, BTreeSet<Lab>>) -> BTreeMap<(InstId, SinkKind), BTreeSet<Lab>> {
    let labs = |ops: &[ValueRef]| -> BTreeSet<Lab> { ops.iter().flat_map(|o| vars.get(o).cloned().unwrap_or_default()).collect() };
    let mut ledger = BTreeSet::new();
    for (fi, f) in ir.functions.iter().enumerate() {
        let public =
            matches!(f.visibility, flashtrace_core::frontend::Visibility::Public | flashtrace_core::frontend::Visibility::External)
                && f.kind != flashtrace_core::frontend::FunctionKind::Constructor;
        let writes_mapping = f.instructions.iter().any(|i| matches!(&i.kind, InstKind::SStore { slot } if slot.is_mapping_base));
        if !public && writes_mapping {
            ledger.insert(fi);
        }
    }
    let mut out = BTreeMap::new();
    for f in &ir.functions {
        for inst in &f.instructions {
            let mut cands: Vec<(SinkKind, BTreeSet<Lab>)> = Vec::new();
            let args: &[ValueRef] = match inst.kind {
                InstKind::ExternalCall { .. } => &inst.operands[1..],
                _ => &inst.operands,
            };
            match &inst.kind {
                InstKind::LowLevelCall { .. } => cands.push((SinkKind::EtherTokenTransfer, labs(&inst.operands[1..2]))),
                InstKind::ExternalCall { function: name, .. } | InstKind::InternalCall { callee: name, .. } => {
                    if let Some(t) = cfg.transfer_functions.iter().find(|t| &t.name == name && t.arity == args.len()) {
                        cands.push((SinkKind::EtherTokenTransfer, labs(&args[t.amount..t.amount + 1])));
                    }
                }
                _ => {}
            }
            if let Some(g) = callee_index(ir, inst) {
                if ledger.contains(&g) {
                    cands.push((SinkKind::InternalLedgerUpdate, labs(args)));
                }
            }
            if let InstKind::SStore { slot } = &inst.kind {
                if slot.is_mapping_base {
                    cands.push((SinkKind::EconomicStateWrite, labs(&inst.operands[..1])));
                }
            }
            if let Some((k, l)) = cands.into_iter().find(|(_, l)| !l.is_empty()) {
                out.insert((inst.id, k), l);
            }
        }
    }
    out
}
