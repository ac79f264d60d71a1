//! Primitive fact base over a lowered contract.

use super::*;
use crate::config::AnalysisConfig;
use std::collections::BTreeSet;

/// Call(cs, f, args, ret): an internal call.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CallFact {
    pub cs: InstId,
    pub callee: String,
    pub resolved: Option<u32>,
    pub args: Vec<ValueRef>,
    pub rets: Vec<ValueRef>,
}

/// EC(cs, f, ...): a call into another contract.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct EcFact {
    pub cs: InstId,
    pub interface: Option<String>,
    pub function: String,
    pub mutability: Option<Mutability>,
    pub receiver: ValueRef,
    pub args: Vec<ValueRef>,
    pub rets: Vec<ValueRef>,
}

/// SSTORE(σ, v).
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SstoreFact {
    pub inst: InstId,
    pub slot: SlotId,
    pub value: ValueRef,
}

/// Transfer(r, a) at a call site.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TransferFact {
    pub cs: InstId,
    pub callee: String,
    pub recipient: ValueRef,
    pub amount: ValueRef,
}

/// Arg(cs, i, v).
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ArgFact {
    pub cs: InstId,
    pub index: usize,
    pub value: ValueRef,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct Facts {
    pub calls: Vec<CallFact>,
    pub external_calls: Vec<EcFact>,
    pub sstores: Vec<SstoreFact>,
    /// IsPublic(f), by function index.
    pub public_functions: BTreeSet<u32>,
    pub transfers: Vec<TransferFact>,
    pub args: Vec<ArgFact>,
    /// IsMappingSlot(σ) for every slot written or read through a mapping base.
    pub mapping_slots: BTreeSet<SlotId>,
}

impl Facts {
    pub fn is_public(&self, func: u32) -> bool {
        self.public_functions.contains(&func)
    }

    pub fn transfer_at(&self, cs: InstId) -> Option<&TransferFact> {
        self.transfers.iter().find(|t| t.cs == cs)
    }
}

/// Call arguments of an instruction: external calls carry the receiver first,
/// low-level calls carry receiver and value.
pub fn call_args(inst: &Instruction) -> &[ValueRef] {
    match inst.kind {
        InstKind::ExternalCall { .. } => inst.operands.get(1..).unwrap_or(&[]),
        _ => &inst.operands,
    }
}

pub fn extract_primitives(ir: &ContractIr, config: &AnalysisConfig) -> Facts {
    let mut facts = Facts::default();
    for (fi, f) in ir.functions.iter().enumerate() {
        if f.is_public() {
            facts.public_functions.insert(fi as u32);
        }
        for inst in &f.instructions {
            let args = call_args(inst);
            if inst.kind.is_call() {
                for (i, v) in args.iter().enumerate() {
                    facts.args.push(ArgFact { cs: inst.id, index: i, value: v.clone() });
                }
            }
            match &inst.kind {
                InstKind::InternalCall { callee, resolved, .. } => {
                    facts.calls.push(CallFact {
                        cs: inst.id,
                        callee: callee.clone(),
                        resolved: *resolved,
                        args: args.to_vec(),
                        rets: inst.defs(),
                    });
                    push_transfer(&mut facts, config, inst, callee, args);
                }
                InstKind::ExternalCall { interface, function, mutability, .. } => {
                    facts.external_calls.push(EcFact {
                        cs: inst.id,
                        interface: interface.clone(),
                        function: function.clone(),
                        mutability: *mutability,
                        receiver: inst.operands.first().cloned().unwrap_or_else(|| ValueRef::constant("?")),
                        args: args.to_vec(),
                        rets: inst.defs(),
                    });
                    push_transfer(&mut facts, config, inst, function, args);
                }
                InstKind::LowLevelCall { call } => {
                    if let (Some(r), Some(a)) = (inst.operands.first(), inst.operands.get(1)) {
                        facts.transfers.push(TransferFact {
                            cs: inst.id,
                            callee: format!("{call:?}").to_lowercase(),
                            recipient: r.clone(),
                            amount: a.clone(),
                        });
                    }
                }
                InstKind::SStore { slot } => {
                    if slot.is_mapping_base {
                        facts.mapping_slots.insert(slot.clone());
                    }
                    facts.sstores.push(SstoreFact {
                        inst: inst.id,
                        slot: slot.clone(),
                        value: inst.operands.first().cloned().unwrap_or_else(|| ValueRef::constant("0")),
                    });
                }
                InstKind::SLoad { slot } if slot.is_mapping_base => {
                    facts.mapping_slots.insert(slot.clone());
                }
                _ => {}
            }
        }
    }
    facts
}

fn push_transfer(facts: &mut Facts, config: &AnalysisConfig, inst: &Instruction, name: &str, args: &[ValueRef]) {
    if let Some(sig) = config.transfer_sig(name, args.len()) {
        if let (Some(r), Some(a)) = (args.get(sig.recipient), args.get(sig.amount)) {
            facts.transfers.push(TransferFact { cs: inst.id, callee: name.to_string(), recipient: r.clone(), amount: a.clone() });
        }
    }
}
