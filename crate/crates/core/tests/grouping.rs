use flashtrace_core::config::AnalysisConfig;
use flashtrace_core::frontend::parse_source;
use flashtrace_core::grouping::*;
use flashtrace_core::ir::*;
use flashtrace_core::taint::*;
mod common;

use common::laws::*;
use proptest::prelude::*;
use std::collections::{BTreeMap, BTreeSet};

fn lower(src: &str) -> ContractIr {
    let unit = parse_source(src, "t.sol");
    assert_eq!(unit.errors().count(), 0, "{:?}", unit.diagnostics);
    lower_unit(&unit, src).pop().unwrap()
}

fn analyze(ir: &ContractIr) -> TaintResult {
    let cfg = AnalysisConfig::default();
    analyze_taint(ir, &build_icfg(ir), &extract_primitives(ir, &cfg), &cfg)
}

/// Every chain of def-use links (no control dependence; the fixture has
/// none that is tainted) from a source instruction to a mapping store,
/// visiting any instruction at most twice and never passing through the
/// store itself. Written against the raw instruction list only.
fn enumerate_chains(f: &FunctionIr, dex: &[&str]) -> BTreeSet<Vec<InstId>> {
    let entry = InstId::entry(0);
    let mut def: BTreeMap<ValueRef, InstId> = BTreeMap::new();
    for i in &f.instructions {
        match &i.kind {
            InstKind::ExternalCall { .. } => {
                def.insert(ValueRef::CallReturn { inst: i.id, index: 0 }, i.id);
            }
            _ => {
                if let Some(r) = &i.result {
                    def.insert(r.clone(), i.id);
                }
            }
        }
    }
    for k in 0..f.params.len() {
        def.insert(ValueRef::Param { func: 0, index: k as u32 }, entry);
    }
    let is_source = |id: InstId| {
        if id == entry {
            return true;
        }
        let i = &f.instructions[id.idx as usize];
        match &i.kind {
            InstKind::ExternalCall { function, .. } => dex.contains(&function.as_str()),
            InstKind::Assign(AssignForm::Copy) => i.operands.first().is_some_and(|o| o.to_string() == "msg.value"),
            _ => false,
        }
    };
    let preds = |id: InstId| -> Vec<InstId> {
        if id == entry {
            return vec![];
        }
        let i = &f.instructions[id.idx as usize];
        let ops: &[ValueRef] = match &i.kind {
            InstKind::SStore { .. } => &i.operands[..1],
            InstKind::ExternalCall { .. } => &[],
            _ => &i.operands,
        };
        let mut v: Vec<InstId> = ops.iter().filter_map(|o| def.get(o).copied()).collect();
        v.sort();
        v.dedup();
        v
    };
    let mut out = BTreeSet::new();
    for sink in f.instructions.iter().filter(|i| matches!(&i.kind, InstKind::SStore { slot } if slot.is_mapping_base)) {
        let mut stack: Vec<Vec<InstId>> = preds(sink.id).into_iter().map(|p| vec![p]).collect();
        while let Some(chain) = stack.pop() {
            let last = *chain.last().unwrap();
            if is_source(last) {
                let mut steps: Vec<InstId> = chain.iter().rev().copied().collect();
                steps.push(sink.id);
                out.insert(steps);
                continue;
            }
            for p in preds(last) {
                if p == sink.id || chain.iter().filter(|&&c| c == p).count() >= 2 {
                    continue;
                }
                let mut c = chain.clone();
                c.push(p);
                stack.push(c);
            }
        }
    }
    out
}

#[test]
fn loop_fixture_collapses_seven_paths_into_two_groups() {
    let ir = lower(include_str!("fixtures/loop_group.sol"));
    let cfg = AnalysisConfig::default();
    let dex: Vec<&str> = cfg.dex_functions.iter().map(String::as_str).collect();
    let brute = enumerate_chains(&ir.functions[0], &dex);
    assert_eq!(brute.len(), 7);
    let r = analyze(&ir);
    let engine: BTreeSet<Vec<InstId>> = r.paths.iter().map(|p| p.steps.clone()).collect();
    assert_eq!(engine, brute);

    // grouping by hand: which external calls and stores each chain passes through
    let mut by_ops: BTreeMap<BTreeSet<String>, usize> = BTreeMap::new();
    for steps in &brute {
        let ops: BTreeSet<String> = steps
            .iter()
            .filter_map(|&s| ir.inst(s))
            .filter_map(|i| match &i.kind {
                InstKind::ExternalCall { function, .. } => Some(function.clone()),
                InstKind::SStore { slot } => Some(ir.slot_name(slot)),
                _ => None,
            })
            .collect();
        let e = by_ops.entry(ops).or_default();
        *e = (*e).max(steps.len());
    }
    let mut want: Vec<usize> = by_ops.values().copied().collect();
    want.sort();
    assert_eq!(want, vec![4, 9]);

    let groups = group_paths(&ir, &r.paths);
    assert_eq!(groups.len(), 2);
    let mut reps: Vec<usize> = groups.iter().map(|g| g.representative.len()).collect();
    reps.sort();
    assert_eq!(reps, vec![4, 9]);
    assert_eq!(groups.iter().map(|g| g.members.len()).sum::<usize>(), 7);
}

#[test]
fn loop_unrolling_does_not_change_the_key() {
    let ir = lower(include_str!("fixtures/loop_group.sol"));
    let r = analyze(&ir);
    let dex: Vec<&TaintPath> = r.paths.iter().filter(|p| p.source.kind == SourceKind::KnownDexCall).collect();
    let short = dex.iter().min_by_key(|p| p.len()).unwrap();
    let long = dex.iter().max_by_key(|p| p.len()).unwrap();
    assert!(long.len() > short.len());
    assert_eq!(compute_key(&ir, short), compute_key(&ir, long));
}

#[test]
fn zzf_summary_is_deterministic_and_names_the_states() {
    let ir = lower(include_str!("fixtures/zzf.sol"));
    let r = analyze(&ir);
    let render = || {
        let groups = group_paths(&ir, &r.paths);
        let sums: Vec<GroupSummary> = groups.iter().map(|g| summarize_group(&ir, g, 120)).collect();
        serde_json::to_string_pretty(&sums).unwrap()
    };
    let a = render();
    assert_eq!(a, render());
    let groups = group_paths(&ir, &r.paths);
    let esw = groups.iter().find(|g| g.key.render_ops() == "EC:getAmountsOut, SSTORE:burnAmount").unwrap();
    let s = summarize_group(&ir, esw, 120);
    assert_eq!(s.affected_states, vec!["burnAmount"]);
    assert_eq!(s.source_function.name, "burnToHolder");
    assert_eq!(s.sink_function.name, "burnFeeRewards");
    let none = groups.iter().find(|g| g.key.critical_ops.is_empty()).unwrap();
    assert_eq!(summarize_group(&ir, none, 120).critical_operations, "none");
}

#[test]
fn empty_input_gives_no_groups() {
    let ir = lower(include_str!("fixtures/zzf.sol"));
    assert!(group_paths(&ir, &[]).is_empty());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn grouping_laws(ks in kinds(), raw in raw_paths(), shift in 1u32..4, seed in any::<u64>()) {
        check_grouping_laws(&ks, &raw, shift, seed)?;
    }
}
