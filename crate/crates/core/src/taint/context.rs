//! Precomputed structure shared by propagation, sinks and paths.

use crate::config::AnalysisConfig;
use crate::ir::{ContractIr, Facts, Icfg, InstId, InstKind, Instruction, SlotId, ValueRef};
use std::collections::{BTreeSet, HashMap};

/// A place where labels can sit in a chain: an instruction, a function's
/// parameter binding, or the returns of a resolved internal call (the call
/// site seen from the callee side).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Point {
    Entry(u32),
    Inst(InstId),
    Ret(InstId),
}

impl Point {
    pub fn id(self) -> InstId {
        match self {
            Point::Entry(f) => InstId::entry(f),
            Point::Inst(i) | Point::Ret(i) => i,
        }
    }

    pub fn func(self) -> u32 {
        self.id().func
    }
}

pub struct TaintContext<'a> {
    pub ir: &'a ContractIr,
    pub icfg: &'a Icfg,
    pub facts: &'a Facts,
    pub config: &'a AnalysisConfig,
    /// Per function, per instruction: the branch instructions (CondJump or
    /// Require) it is control dependent on.
    pub control_deps: Vec<Vec<Vec<u32>>>,
    /// Where each local is defined.
    pub def_sites: HashMap<ValueRef, Point>,
    /// Callee of each resolved internal call.
    pub callee: HashMap<InstId, u32>,
    /// Resolved call sites per callee.
    pub callers: HashMap<u32, Vec<InstId>>,
    /// Functions that are not public and write a mapping slot.
    pub ledger_functions: BTreeSet<u32>,
    pub order: Vec<InstId>,
}

impl<'a> TaintContext<'a> {
    pub fn new(ir: &'a ContractIr, icfg: &'a Icfg, facts: &'a Facts, config: &'a AnalysisConfig) -> Self {
        let control_deps = ir.functions.iter().map(|f| control_dependence(&f.instructions)).collect();
        let mut def_sites = HashMap::new();
        let mut callee = HashMap::new();
        let mut callers: HashMap<u32, Vec<InstId>> = HashMap::new();
        for &(cs, entry) in &icfg.call_edges {
            callee.insert(cs, entry.func);
            callers.entry(entry.func).or_default().push(cs);
        }
        for (fi, f) in ir.functions.iter().enumerate() {
            for i in 0..f.params.len() {
                def_sites.insert(ValueRef::Param { func: fi as u32, index: i as u32 }, Point::Entry(fi as u32));
            }
            for inst in &f.instructions {
                let p = if callee.contains_key(&inst.id) { Point::Ret(inst.id) } else { Point::Inst(inst.id) };
                for d in inst.defs() {
                    def_sites.insert(d, p);
                }
            }
        }
        let ledger_functions =
            facts.sstores.iter().filter(|s| s.slot.is_mapping_base && !facts.is_public(s.inst.func)).map(|s| s.inst.func).collect();
        let mut order: Vec<InstId> = ir.instructions().map(|i| i.id).collect();
        if config.visit_order == crate::config::VisitOrder::Reverse {
            order.reverse();
        }
        TaintContext { ir, icfg, facts, config, control_deps, def_sites, callee, callers, ledger_functions, order }
    }

    pub fn inst(&self, id: InstId) -> &'a Instruction {
        &self.ir.functions[id.func as usize].instructions[id.idx as usize]
    }

    pub fn is_resolved_call(&self, id: InstId) -> bool {
        self.callee.contains_key(&id)
    }

    pub fn deps_of(&self, id: InstId) -> &[u32] {
        &self.control_deps[id.func as usize][id.idx as usize]
    }

    /// Operands through which data flows into what `inst` defines (or, for
    /// branches, returns and resolved calls, into what it consumes).
    pub fn data_operands(&self, inst: &'a Instruction) -> &'a [ValueRef] {
        match &inst.kind {
            InstKind::ExternalCall { .. } | InstKind::LowLevelCall { .. } => &[],
            InstKind::SStore { .. } | InstKind::CondJump { .. } | InstKind::Require => &inst.operands[..inst.operands.len().min(1)],
            InstKind::Jump { .. } | InstKind::Revert => &[],
            _ => &inst.operands,
        }
    }

    /// Stores whose slot may alias `slot`.
    pub fn aliasing_stores(&self, slot: &SlotId) -> impl Iterator<Item = &'a Instruction> + '_ {
        let slot = slot.clone();
        self.facts.sstores.iter().filter(move |s| s.slot.may_alias(&slot)).map(|s| self.inst(s.inst))
    }

    /// Returns of a function.
    pub fn returns_of(&self, func: u32) -> impl Iterator<Item = &'a Instruction> {
        self.ir.functions[func as usize].instructions.iter().filter(|i| i.kind == InstKind::Return)
    }
}

/// Branch instructions each instruction is control dependent on, computed
/// from post-dominators over the CFG extended with a virtual exit that
/// Return, Revert and the failing side of Require lead to.
pub fn control_dependence(insts: &[Instruction]) -> Vec<Vec<u32>> {
    let n = insts.len();
    let exit = n;
    let mut succ: Vec<Vec<usize>> = insts
        .iter()
        .map(|i| {
            let mut s: Vec<usize> = i.successors(n as u32).into_iter().map(|x| x as usize).collect();
            if matches!(i.kind, InstKind::Return | InstKind::Revert | InstKind::Require) || s.is_empty() {
                s.push(exit);
            }
            s
        })
        .collect();
    // nodes that cannot reach the exit (infinite loops) get a virtual edge to it
    let mut reaches = vec![false; n + 1];
    reaches[exit] = true;
    let mut changed = true;
    while changed {
        changed = false;
        for v in 0..n {
            if !reaches[v] && succ[v].iter().any(|&s| reaches[s]) {
                reaches[v] = true;
                changed = true;
            }
        }
    }
    for v in 0..n {
        if !reaches[v] {
            succ[v].push(exit);
        }
    }
    // post-dominator sets as bit vectors
    let all = vec![true; n + 1];
    let mut pdom: Vec<Vec<bool>> = vec![all; n + 1];
    pdom[exit] = vec![false; n + 1];
    pdom[exit][exit] = true;
    let mut changed = true;
    while changed {
        changed = false;
        for v in (0..n).rev() {
            let mut new = vec![true; n + 1];
            for &s in &succ[v] {
                for k in 0..=n {
                    new[k] &= pdom[s][k];
                }
            }
            new[v] = true;
            if new != pdom[v] {
                pdom[v] = new;
                changed = true;
            }
        }
    }
    let mut deps = vec![Vec::new(); n];
    for (c, ss) in succ.iter().enumerate() {
        let branch = matches!(insts[c].kind, InstKind::CondJump { .. } | InstKind::Require);
        if !branch || ss.len() < 2 {
            continue;
        }
        for v in 0..n {
            let strictly_pdom_c = v != c && pdom[c][v];
            if strictly_pdom_c {
                continue;
            }
            if ss.iter().any(|&s| s != exit && pdom[s][v]) {
                deps[v].push(c as u32);
            }
        }
    }
    deps
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::parse_source;
    use crate::ir::lower_unit;

    fn deps(body: &str) -> (Vec<Instruction>, Vec<Vec<u32>>) {
        let src = format!("contract A {{ uint x; function f(uint c) public {{ {body} }} }}");
        let u = parse_source(&src, "t.sol");
        let ir = lower_unit(&u, &src).pop().unwrap();
        let insts = ir.functions[0].instructions.clone();
        let d = control_dependence(&insts);
        (insts, d)
    }

    #[test]
    fn then_branch_depends_on_the_condition() {
        let (insts, d) = deps("uint y = 0; if (c > 1) { y = 1; } x = y;");
        let cj = insts.iter().position(|i| matches!(i.kind, InstKind::CondJump { .. })).unwrap() as u32;
        let in_then = cj as usize + 1;
        assert_eq!(d[in_then], vec![cj]);
        let store = insts.iter().position(|i| matches!(i.kind, InstKind::SStore { .. })).unwrap();
        assert!(d[store].is_empty());
    }

    #[test]
    fn everything_after_require_depends_on_it() {
        let (insts, d) = deps("require(c > 1); x = c;");
        let req = insts.iter().position(|i| i.kind == InstKind::Require).unwrap() as u32;
        for (i, ds) in d.iter().enumerate() {
            assert_eq!(ds.contains(&req), i as u32 > req, "inst {i}");
        }
    }
}
