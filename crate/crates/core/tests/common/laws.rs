//! Random path sets over a synthetic contract, and the grouping laws
//! checked against them.

#![allow(dead_code)]

use flashtrace_core::frontend::Span;
use flashtrace_core::grouping::*;
use flashtrace_core::ir::*;
use flashtrace_core::taint::*;
use proptest::prelude::*;
use proptest::test_runner::TestCaseError;
use std::collections::BTreeSet;

const FNS: [&str; 3] = ["getReserves", "swap", "balanceOf"];

pub fn synthetic(kinds: &[Vec<u8>], shift: u32) -> ContractIr {
    let state_vars = (0..3).map(|s| StateVarIr { name: format!("m{s}"), ty: "mapping(address => uint256)".into(), slot: s }).collect();
    let functions = kinds
        .iter()
        .enumerate()
        .map(|(fi, ks)| {
            let mut insts = Vec::new();
            let mut push = |kind: InstKind, operands: Vec<ValueRef>| {
                let id = InstId::new(fi as u32, insts.len() as u32);
                insts.push(Instruction { id, kind, operands, result: None, span: Span::default() });
            };
            for _ in 0..shift {
                push(InstKind::Assign(AssignForm::Copy), vec![ValueRef::constant("0")]);
            }
            for &k in ks {
                match k % 3 {
                    0 => push(
                        InstKind::ExternalCall {
                            interface: None,
                            function: FNS[(k / 3) as usize % 3].into(),
                            mutability: None,
                            returns: 1,
                        },
                        vec![ValueRef::constant("0")],
                    ),
                    1 => push(InstKind::SStore { slot: SlotId::base((k / 3) as u32 % 3, true) }, vec![ValueRef::constant("1")]),
                    _ => push(InstKind::Assign(AssignForm::Copy), vec![ValueRef::constant("2")]),
                }
            }
            push(InstKind::Return, vec![]);
            FunctionIr {
                name: format!("f{fi}"),
                kind: flashtrace_core::frontend::FunctionKind::Function,
                visibility: flashtrace_core::frontend::Visibility::Public,
                mutability: flashtrace_core::frontend::Mutability::Default,
                modifiers: vec![],
                params: vec![],
                returns: vec![],
                instructions: insts,
                source: None,
                span: Span::default(),
            }
        })
        .collect();
    ContractIr { ir_version: IR_VERSION, contract: "Syn".into(), state_vars, functions, diagnostics: vec![] }
}

pub fn make_path(src_fn: u32, sink_fn: u32, steps: Vec<InstId>) -> TaintPath {
    TaintPath {
        source: PathSource { inst: steps[0], kind: SourceKind::PublicInput },
        sink: PathSink { inst: *steps.last().unwrap(), kind: SinkKind::EconomicStateWrite },
        steps,
        source_function: format!("f{src_fn}"),
        sink_function: format!("f{sink_fn}"),
        affected_slots: Default::default(),
    }
}

pub type RawPath = (u32, u32, Vec<(u32, u32)>);

pub fn materialize(raw: &[RawPath], shift: u32) -> Vec<TaintPath> {
    raw.iter().map(|(s, k, st)| make_path(*s, *k, st.iter().map(|&(f, i)| InstId::new(f, i + shift)).collect())).collect()
}

pub fn raw_paths() -> impl Strategy<Value = Vec<RawPath>> {
    let step = (0u32..3, 0u32..6);
    prop::collection::vec((0u32..3, 0u32..3, prop::collection::vec(step, 1..10)), 0..14)
}

pub fn kinds() -> impl Strategy<Value = Vec<Vec<u8>>> {
    prop::collection::vec(prop::collection::vec(0u8..9, 6), 3)
}

/// Partition, representative maximality, key stability under renumbering,
/// order independence and idempotence for one generated case.
pub fn check_grouping_laws(ks: &[Vec<u8>], raw: &[RawPath], shift: u32, seed: u64) -> Result<(), TestCaseError> {
    let ks = ks.to_vec();
    let raw = raw.to_vec();
    let ir = synthetic(&ks, 0);
    let paths = materialize(&raw, 0);
    let groups = group_paths(&ir, &paths);

    // partition
    prop_assert_eq!(groups.iter().map(|g| g.members.len()).sum::<usize>(), paths.len());
    let mut seen = 0;
    for p in &paths {
        let n = groups.iter().filter(|g| g.members.contains(p)).count();
        prop_assert!(n >= 1);
        seen += 1;
    }
    prop_assert_eq!(seen, paths.len());
    let keys: BTreeSet<&GroupKey> = groups.iter().map(|g| &g.key).collect();
    prop_assert_eq!(keys.len(), groups.len());

    for g in &groups {
        // members share the key; representative is a longest member
        for m in &g.members {
            prop_assert_eq!(&compute_key(&ir, m), &g.key);
            prop_assert!(m.len() <= g.representative.len());
        }
        prop_assert!(g.members.contains(&g.representative));
    }

    // key stability under renumbering every instruction
    let shifted_ir = synthetic(&ks, shift);
    let shifted = materialize(&raw, shift);
    for (a, b) in paths.iter().zip(&shifted) {
        prop_assert_eq!(compute_key(&ir, a), compute_key(&shifted_ir, b));
    }
    let shifted_groups = group_paths(&shifted_ir, &shifted);
    let ka: Vec<&GroupKey> = groups.iter().map(|g| &g.key).collect();
    let kb: Vec<&GroupKey> = shifted_groups.iter().map(|g| &g.key).collect();
    prop_assert_eq!(ka, kb);

    // member order does not matter
    let mut perm = paths.clone();
    let n = perm.len();
    if n > 1 {
        let mut s = seed;
        for i in (1..n).rev() {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            perm.swap(i, (s >> 33) as usize % (i + 1));
        }
    }
    let pg = group_paths(&ir, &perm);
    prop_assert_eq!(pg.len(), groups.len());
    for (a, b) in groups.iter().zip(&pg) {
        prop_assert_eq!(&a.key, &b.key);
        prop_assert_eq!(&a.representative, &b.representative);
    }

    // idempotence
    let reps: Vec<TaintPath> = groups.iter().map(|g| g.representative.clone()).collect();
    let again = group_paths(&ir, &reps);
    prop_assert_eq!(again.len(), groups.len());
    prop_assert!(again.iter().all(|g| g.members.len() == 1));
    Ok(())
}
