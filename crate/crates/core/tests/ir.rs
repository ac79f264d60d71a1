use flashtrace_core::config::AnalysisConfig;
use flashtrace_core::frontend::parse_source;
use flashtrace_core::ir::*;
use flashtrace_core::taint::analyze_taint;

const ZZF: &str = include_str!("fixtures/zzf.sol");

fn lower(src: &str) -> ContractIr {
    let unit = parse_source(src, "t.sol");
    assert_eq!(unit.errors().count(), 0, "{:?}", unit.diagnostics);
    lower_unit(&unit, src).pop().unwrap()
}

fn find(f: &FunctionIr, pred: impl Fn(&Instruction) -> bool) -> &Instruction {
    f.instructions.iter().find(|i| pred(i)).expect("instruction present")
}

#[test]
fn get_amounts_out_feeds_an_index_read() {
    let ir = lower(ZZF);
    let f = &ir.functions[0];
    let ec = find(f, |i| matches!(&i.kind, InstKind::ExternalCall { function, .. } if function == "getAmountsOut"));
    let ret = ValueRef::CallReturn { inst: ec.id, index: 0 };
    let idx = find(f, |i| i.operands.first() == Some(&ret));
    assert_eq!(idx.kind, InstKind::Assign(AssignForm::Index));
    assert!(matches!(&idx.result, Some(ValueRef::Local { name, .. }) if name == "deserved"));
}

#[test]
fn burn_amount_update_loads_and_stores_one_slot() {
    let ir = lower(ZZF);
    let f = &ir.functions[ir.function_index("burnFeeRewards").unwrap() as usize];
    let load = find(f, |i| matches!(i.kind, InstKind::SLoad { .. }));
    let store = find(f, |i| matches!(i.kind, InstKind::SStore { .. }));
    let (InstKind::SLoad { slot: a }, InstKind::SStore { slot: b }) = (&load.kind, &store.kind) else { unreachable!() };
    assert_eq!(a, b);
    assert_eq!(ir.slot_name(a), "burnAmount");
    assert!(a.is_mapping_base);
    let add = find(f, |i| i.operands.first() == load.result.as_ref());
    assert_eq!(add.kind, InstKind::BinOp { op: BinOpKind::Add });
    assert_eq!(store.operands[0], *add.result.as_ref().unwrap());
}

#[test]
fn empty_function_is_entry_and_return() {
    let ir = lower("contract E { function f() public {} }");
    assert_eq!(ir.functions[0].instructions.len(), 1);
    assert_eq!(ir.functions[0].instructions[0].kind, InstKind::Return);
    let g = build_icfg(&ir);
    assert!(g.intra_edges.is_empty());
    assert!(g.nodes.contains(&InstId::entry(0)));
}

#[test]
fn zzf_call_edge_at_the_reward_call() {
    let ir = lower(ZZF);
    let g = build_icfg(&ir);
    assert_eq!(g.call_edges.len(), 1);
    let (cs, entry) = g.call_edges[0];
    assert_eq!(entry, InstId::entry(1));
    assert!(matches!(&ir.inst(cs).unwrap().kind, InstKind::InternalCall { callee, .. } if callee == "burnFeeRewards"));
    assert_eq!(g.return_edges, vec![(InstId::exit(1), cs)]);
    assert_eq!(g.entry_points, vec![InstId::entry(0)]);
    // `_transfer` is not declared in the fixture
    assert_eq!(g.diagnostics.len(), 1);
}

#[test]
fn straight_line_has_n_minus_one_edges() {
    for n in 1..8 {
        let body: String = (0..n - 1).map(|i| format!("x = {i}; ")).collect::<String>() + "return;";
        let src = format!("contract S {{ uint x; function f() public {{ {body} }} }}");
        let ir = lower(&src);
        assert_eq!(ir.functions[0].instructions.len(), n);
        let g = build_icfg(&ir);
        assert_eq!(g.intra_edges.len(), n - 1);
        assert!(g.call_edges.is_empty());
    }
}

#[test]
fn if_else_matches_hand_drawn_cfg() {
    // 0: t = c > 0      1: condjump 2 / 4
    // 2: a = 1          3: jump 5
    // 4: a = 2          5: phi(a)   6: x = a   7: return
    let ir = lower("contract B { uint x; function f(uint c) public { uint a; if (c > 0) { a = 1; } else { a = 2; } x = a; } }");
    let f = &ir.functions[0];
    let kinds: Vec<&str> = f.instructions.iter().map(|i| i.kind.name()).collect();
    assert_eq!(kinds, vec!["Assign", "BinOp", "CondJump", "Assign", "Jump", "Assign", "Phi", "SStore", "Return"]);
    let g = build_icfg(&ir);
    let e = |a: u32, b: u32| (InstId::new(0, a), InstId::new(0, b));
    let want = vec![e(0, 1), e(1, 2), e(2, 3), e(2, 5), e(3, 4), e(4, 6), e(5, 6), e(6, 7), e(7, 8)];
    assert_eq!(g.intra_edges, want);
}

#[test]
fn transfer_fact_for_internal_transfer() {
    let ir = lower(ZZF);
    let facts = extract_primitives(&ir, &AnalysisConfig::default());
    assert_eq!(facts.transfers.len(), 1);
    let t = &facts.transfers[0];
    assert_eq!(t.callee, "_transfer");
    assert_eq!(t.amount, ValueRef::Param { func: 1, index: 1 });
    assert_eq!(ir.functions[1].params[1].name, "increase");
    assert_eq!(facts.external_calls.len(), 3);
}

#[test]
fn sstore_facts_match_sstore_instructions() {
    let src = include_str!("fixtures/oracle/o03_private.sol");
    let ir = lower(src);
    let facts = extract_primitives(&ir, &AnalysisConfig::default());
    let n = ir.instructions().filter(|i| matches!(i.kind, InstKind::SStore { .. })).count();
    assert_eq!(facts.sstores.len(), n);
}

#[test]
fn slots_do_not_depend_on_function_order() {
    let a = lower("contract P { uint a; mapping(uint => uint) m; function f() public { a = 1; } function g() public { m[1] = 2; } }");
    let b = lower("contract P { uint a; mapping(uint => uint) m; function g() public { m[1] = 2; } function f() public { a = 1; } }");
    assert_eq!(a.state_vars, b.state_vars);
    let slots = |ir: &ContractIr| {
        let mut v: Vec<(String, SlotId)> = ir
            .functions
            .iter()
            .flat_map(|f| {
                f.instructions.iter().filter_map(move |i| match &i.kind {
                    InstKind::SStore { slot } => Some((f.name.clone(), slot.clone())),
                    _ => None,
                })
            })
            .collect();
        v.sort();
        v
    };
    assert_eq!(slots(&a), slots(&b));
}

#[test]
fn export_import_round_trip_preserves_taint() {
    let cfg = AnalysisConfig::default();
    let native = lower(ZZF);
    let doc = export_ir_json(&native);
    let text = serde_json::to_string_pretty(&doc).unwrap();
    let imported = import_ir_json(&text).unwrap();
    assert_eq!(imported, native);
    let run = |ir: &ContractIr| {
        let g = build_icfg(ir);
        let f = extract_primitives(ir, &cfg);
        analyze_taint(ir, &g, &f, &cfg)
    };
    let (a, b) = (run(&native), run(&imported));
    assert_eq!(a.paths, b.paths);
    assert_eq!(a.map, b.map);
    assert!(!a.paths.is_empty());
}

#[test]
fn lowering_failure_excludes_only_that_function() {
    let ir = lower("contract L { uint x; function ok() public { x = 1; } function bad() public { (x, x) = (1, (2, 3)); } }");
    assert_eq!(ir.functions.len(), 1);
    assert_eq!(ir.functions[0].name, "ok");
    assert_eq!(ir.diagnostics[0].code, "lowering-unsupported");
}
