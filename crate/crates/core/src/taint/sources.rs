//! Initial taint sources.

use super::{SourceKind, TaintContext, TaintLabel, TaintMap};
use crate::ir::{AssignForm, BinOpKind, InstId, InstKind, TxProp, ValueRef};
use std::collections::{BTreeSet, VecDeque};

pub fn identify_sources(ctx: &TaintContext) -> TaintMap {
    let mut map = TaintMap::default();
    for (fi, f) in ctx.ir.functions.iter().enumerate() {
        let fi = fi as u32;
        if f.is_public() && !f.params.is_empty() {
            let l = TaintLabel::new(InstId::entry(fi), SourceKind::PublicInput);
            for i in 0..f.params.len() {
                map.add_var(&ValueRef::Param { func: fi, index: i as u32 }, [&l]);
            }
        }
        for inst in &f.instructions {
            match &inst.kind {
                InstKind::Assign(AssignForm::Copy) => {
                    let tx = matches!(inst.operands.first(), Some(ValueRef::TxProperty { prop: TxProp::Value | TxProp::Data }));
                    if let (true, Some(r)) = (tx, &inst.result) {
                        map.add_var(r, [&TaintLabel::new(inst.id, SourceKind::TxProperty)]);
                    }
                }
                InstKind::ExternalCall { function, mutability, .. } => {
                    let kind = if ctx.config.is_dex_function(function) {
                        Some(SourceKind::KnownDexCall)
                    } else if mutability.is_some_and(|m| m.is_read_only()) && reaches_mul_div(ctx, inst.id) {
                        Some(SourceKind::OracleViewCall)
                    } else {
                        None
                    };
                    if let Some(kind) = kind {
                        let l = TaintLabel::new(inst.id, kind);
                        for d in inst.defs() {
                            map.add_var(&d, [&l]);
                        }
                    }
                }
                _ => {}
            }
        }
    }
    map
}

/// Does any return of the call at `cs` reach an operand of `*` or `/`
/// through def-use chains (locals, call arguments and call returns)?
pub fn reaches_mul_div(ctx: &TaintContext, cs: InstId) -> bool {
    let mut seen: BTreeSet<ValueRef> = ctx.inst(cs).defs().into_iter().collect();
    let mut queue: VecDeque<ValueRef> = seen.iter().cloned().collect();
    while let Some(v) = queue.pop_front() {
        let mut next = Vec::new();
        for inst in ctx.ir.instructions() {
            if !inst.operands.contains(&v) {
                continue;
            }
            match &inst.kind {
                InstKind::BinOp { op: BinOpKind::Mul | BinOpKind::Div } => return true,
                InstKind::BinOp { .. } | InstKind::Assign(_) | InstKind::Phi => next.extend(inst.result.clone()),
                InstKind::SLoad { .. } => next.extend(inst.result.clone()),
                InstKind::InternalCall { .. } => match ctx.callee.get(&inst.id) {
                    Some(&g) => {
                        for (i, o) in inst.operands.iter().enumerate() {
                            if *o == v {
                                next.push(ValueRef::Param { func: g, index: i as u32 });
                            }
                        }
                    }
                    None => next.extend(inst.defs()),
                },
                InstKind::Return => {
                    for (k, o) in inst.operands.iter().enumerate() {
                        if *o == v {
                            for cs in ctx.callers.get(&inst.id.func).into_iter().flatten() {
                                next.push(ValueRef::CallReturn { inst: *cs, index: k as u32 });
                            }
                        }
                    }
                }
                _ => {}
            }
        }
        for n in next {
            if seen.insert(n.clone()) {
                queue.push_back(n);
            }
        }
    }
    false
}
