//! The three sink classes.

use super::{LabelSet, SinkKind, TaintContext, TaintMap};
use crate::ir::facts::call_args;
use crate::ir::{InstId, InstKind, Instruction, ValueRef};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sink {
    pub inst: InstId,
    pub kind: SinkKind,
    /// Operands whose taint makes this a sink.
    pub operands: Vec<ValueRef>,
    pub labels: LabelSet,
}

/// Operands checked by each sink rule that applies to `inst`, in priority order.
fn candidates(ctx: &TaintContext, inst: &Instruction) -> Vec<(SinkKind, Vec<ValueRef>)> {
    let mut out = Vec::new();
    if let Some(t) = ctx.facts.transfer_at(inst.id) {
        out.push((SinkKind::EtherTokenTransfer, vec![t.amount.clone()]));
    }
    if let (InstKind::InternalCall { .. }, Some(g)) = (&inst.kind, ctx.callee.get(&inst.id)) {
        if ctx.ledger_functions.contains(g) {
            out.push((SinkKind::InternalLedgerUpdate, call_args(inst).to_vec()));
        }
    }
    if let InstKind::SStore { slot } = &inst.kind {
        if slot.is_mapping_base {
            out.push((SinkKind::EconomicStateWrite, inst.operands.first().cloned().into_iter().collect()));
        }
    }
    out
}

/// Operands the rule `kind` inspects at `inst`, if that rule applies there.
pub(crate) fn sink_operands(ctx: &TaintContext, inst: &Instruction, kind: SinkKind) -> Option<Vec<ValueRef>> {
    candidates(ctx, inst).into_iter().find(|(k, _)| *k == kind).map(|(_, ops)| ops)
}

pub fn is_sink(ctx: &TaintContext, inst: &Instruction, map: &TaintMap) -> Option<SinkKind> {
    candidates(ctx, inst).into_iter().find(|(_, ops)| ops.iter().any(|o| map.is_tainted(o))).map(|(k, _)| k)
}

pub fn find_sinks(ctx: &TaintContext, map: &TaintMap) -> Vec<Sink> {
    let mut out = Vec::new();
    for inst in ctx.ir.instructions() {
        for (kind, ops) in candidates(ctx, inst) {
            let labels: LabelSet = ops.iter().flat_map(|o| map.labels(o).iter().cloned()).collect();
            if !labels.is_empty() {
                out.push(Sink { inst: inst.id, kind, operands: ops, labels });
                break;
            }
        }
    }
    out
}
