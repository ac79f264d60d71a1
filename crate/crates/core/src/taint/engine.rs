//! Fixpoint propagation.

use super::{LabelSet, TaintContext, TaintMap};
use crate::frontend::Diagnostic;
use crate::ir::{InstKind, Instruction, ValueRef};

pub const FIXPOINT_BUDGET_EXCEEDED: &str = "fixpoint-budget-exceeded";

/// Implicit labels an instruction receives from the explicit labels of the
/// branch conditions it is control dependent on.
pub(crate) fn implicit_in(ctx: &TaintContext, map: &TaintMap, inst: &Instruction) -> LabelSet {
    let f = &ctx.ir.functions[inst.id.func as usize];
    let mut out = LabelSet::new();
    for &c in ctx.deps_of(inst.id) {
        if let Some(cond) = f.instructions[c as usize].operands.first() {
            out.extend(map.labels(cond).iter().filter(|l| !l.implicit).map(|l| l.as_implicit()));
        }
    }
    out
}

fn union<'x>(map: &'x TaintMap, vs: impl IntoIterator<Item = &'x ValueRef>) -> LabelSet {
    let mut out = LabelSet::new();
    for v in vs {
        out.extend(map.labels(v).iter().cloned());
    }
    out
}

/// Labels carried out of a Return: its operand `k`, plus the implicit ones.
pub(crate) fn return_labels(ctx: &TaintContext, map: &TaintMap, ret: &Instruction, k: usize) -> LabelSet {
    let mut out = implicit_in(ctx, map, ret);
    if let Some(o) = ret.operands.get(k) {
        out.extend(map.labels(o).iter().cloned());
    }
    out
}

fn step(ctx: &TaintContext, map: &mut TaintMap, inst: &Instruction) {
    let imp = implicit_in(ctx, map, inst);
    match &inst.kind {
        InstKind::Assign(_) | InstKind::BinOp { .. } | InstKind::Phi => {
            if let Some(r) = &inst.result {
                let mut ls = union(map, &inst.operands);
                ls.extend(imp);
                map.add_var(r, &ls);
            }
        }
        InstKind::SLoad { slot } => {
            if let Some(r) = &inst.result {
                let mut ls = union(map, &inst.operands);
                for (s, sl) in &map.slot_taints {
                    if s.may_alias(slot) {
                        ls.extend(sl.iter().cloned());
                    }
                }
                ls.extend(imp);
                map.add_var(r, &ls);
            }
        }
        InstKind::SStore { slot } => {
            let mut ls = union(map, inst.operands.first());
            ls.extend(imp);
            map.add_slot(slot, &ls);
        }
        InstKind::InternalCall { .. } => match ctx.callee.get(&inst.id) {
            Some(&g) => {
                for (i, a) in inst.operands.iter().enumerate() {
                    let ls = map.labels(a).clone();
                    map.add_var(&ValueRef::Param { func: g, index: i as u32 }, &ls);
                }
                for d in inst.defs() {
                    let ValueRef::CallReturn { index, .. } = d else { continue };
                    let mut ls = imp.clone();
                    for r in ctx.returns_of(g) {
                        ls.extend(return_labels(ctx, map, r, index as usize));
                    }
                    map.add_var(&d, &ls);
                }
            }
            None => {
                let mut ls = union(map, &inst.operands);
                ls.extend(imp);
                for d in inst.defs() {
                    map.add_var(&d, &ls);
                }
            }
        },
        InstKind::ExternalCall { .. } | InstKind::LowLevelCall { .. } => {
            for d in inst.defs() {
                map.add_var(&d, &imp);
            }
        }
        _ => {}
    }
}

/// One pass of every propagation rule over every instruction, in the
/// configured visit order.
pub fn propagate(ctx: &TaintContext, map: &TaintMap) -> TaintMap {
    let mut out = map.clone();
    for &id in &ctx.order {
        step(ctx, &mut out, ctx.inst(id));
    }
    out
}

#[derive(Debug, Clone)]
pub struct Fixpoint {
    pub map: TaintMap,
    pub iterations: usize,
    pub diagnostics: Vec<Diagnostic>,
}

pub fn run_fixpoint(ctx: &TaintContext, seeds: TaintMap) -> Fixpoint {
    let mut map = seeds;
    let mut iterations = 0;
    let mut diagnostics = Vec::new();
    loop {
        if iterations >= ctx.config.max_iterations {
            diagnostics.push(Diagnostic::warning(
                FIXPOINT_BUDGET_EXCEEDED,
                Default::default(),
                format!("taint fixpoint not reached after {iterations} iterations"),
            ));
            break;
        }
        let next = propagate(ctx, &map);
        iterations += 1;
        assert!(map.is_subset_of(&next), "taint propagation lost a label");
        let done = next.size() == map.size();
        map = next;
        if done {
            break;
        }
    }
    Fixpoint { map, iterations, diagnostics }
}
