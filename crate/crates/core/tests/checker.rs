use flashtrace_core::checker::*;
use flashtrace_core::config::AnalysisConfig;
use flashtrace_core::frontend::{parse_source, FunctionKind, Mutability, Span, Visibility};
use flashtrace_core::grouping::{group_paths, PathGroup};
use flashtrace_core::ir::*;
use flashtrace_core::taint::*;

fn load(name: &str) -> ContractIr {
    let path = format!("{}/tests/fixtures/{name}", env!("CARGO_MANIFEST_DIR"));
    let src = std::fs::read_to_string(&path).unwrap();
    let unit = parse_source(&src, name);
    assert_eq!(unit.errors().count(), 0, "{name}: {:?}", unit.diagnostics);
    lower_unit(&unit, &src).pop().unwrap()
}

fn groups(ir: &ContractIr) -> Vec<PathGroup> {
    let cfg = AnalysisConfig::default();
    let r = analyze_taint(ir, &build_icfg(ir), &extract_primitives(ir, &cfg), &cfg);
    group_paths(ir, &r.paths)
}

fn outcomes(ir: &ContractIr) -> Vec<CheckerOutcome> {
    let gs = groups(ir);
    let refs: Vec<&PathGroup> = gs.iter().collect();
    apply_checker(ir, &refs, &AnalysisConfig::default())
}

fn dex_groups_suppressed(ir: &ContractIr) -> Vec<bool> {
    let gs = groups(ir);
    let cfg = AnalysisConfig::default();
    gs.iter().filter(|g| g.source_kinds().contains(&SourceKind::KnownDexCall)).map(|g| check_group(ir, g, &cfg).suppressed).collect()
}

#[test]
fn unguarded_zzf_is_not_suppressed() {
    let ir = load("zzf.sol");
    let out = outcomes(&ir);
    assert!(!out.is_empty());
    assert!(out.iter().all(|o| !o.suppressed && o.defenses.is_empty()));
}

#[test]
fn only_owner_suppresses_zzf() {
    let ir = load("zzf_owner.sol");
    let out = outcomes(&ir);
    assert!(!out.is_empty());
    for o in &out {
        assert!(o.suppressed, "{}", o.group_key);
        let kinds: Vec<DefenseKind> = o.defenses.iter().map(|d| d.kind).collect();
        assert!(kinds.iter().all(|k| *k == DefenseKind::Privilege));
        // the modifier itself and the sender guard it inlines
        assert!(o.defenses.iter().any(|d| d.location == "modifier onlyOwner"));
        assert!(o.defenses.iter().any(|d| d.location != "modifier onlyOwner" && d.evidence.starts_with("sender guard in burnToHolder")));
    }
}

#[test]
fn literal_cooldown_suppresses_zzf() {
    let ir = load("zzf_cooldown.sol");
    let out = outcomes(&ir);
    assert!(!out.is_empty());
    for o in &out {
        assert!(o.suppressed, "{}", o.group_key);
        let d = o.defenses.iter().find(|d| d.kind == DefenseKind::Temporal).unwrap();
        assert!(d.evidence.contains("require(block.timestamp >= lastActionTime + cooldownPeriod)"), "{}", d.evidence);
    }
}

#[test]
fn fee_on_transfer_suppresses_zzf() {
    let ir = load("zzf_fee.sol");
    let s = dex_groups_suppressed(&ir);
    assert!(!s.is_empty());
    assert!(s.iter().all(|x| *x), "{s:?}");
    let out = outcomes(&ir);
    let d = out.iter().flat_map(|o| &o.defenses).find(|d| d.kind == DefenseKind::FeeOnTransfer).unwrap();
    assert!(d.evidence.contains("swapExactTokensForETHSupportingFeeOnTransferTokens"));
    assert!(d.protected_functions.contains("_transfer"));
}

#[test]
fn fee_on_transfer_needs_the_ordering() {
    let ir = load("zzf_fee_unordered.sol");
    let s = dex_groups_suppressed(&ir);
    assert!(!s.is_empty());
    assert!(s.iter().all(|x| !*x));
}

#[test]
fn fee_on_transfer_needs_a_router() {
    let ir = load("zzf_fee_unknown.sol");
    let s = dex_groups_suppressed(&ir);
    assert!(!s.is_empty());
    assert!(s.iter().all(|x| !*x));
}

#[test]
fn empty_group_list_gives_no_outcomes() {
    let ir = load("zzf.sol");
    assert!(apply_checker(&ir, &[], &AnalysisConfig::default()).is_empty());
}

/// Hand-built `_transfer`: balance writes at 2 and 3, router swap at 5.
fn fee_ir(store_at: [usize; 2], call_at: usize, function: &str) -> ContractIr {
    let slot = SlotId { base_slot: 0, access_path: vec![PathElem::MappingKey(AbsKey::Any)], is_mapping_base: true };
    let mut insts = Vec::new();
    for i in 0..7u32 {
        let (kind, operands) = if store_at.contains(&(i as usize)) {
            (InstKind::SStore { slot: slot.clone() }, vec![ValueRef::Param { func: 0, index: 2 }, ValueRef::Param { func: 0, index: 1 }])
        } else if i as usize == call_at {
            (
                InstKind::ExternalCall {
                    interface: Some("IUniswapV2Router02".into()),
                    function: function.into(),
                    mutability: None,
                    returns: 0,
                },
                vec![ValueRef::constant("router")],
            )
        } else if i == 6 {
            (InstKind::Return, vec![])
        } else {
            (InstKind::Assign(AssignForm::Copy), vec![ValueRef::constant("0")])
        };
        let result = matches!(kind, InstKind::Assign(_)).then(|| ValueRef::Local { name: format!("t{i}"), version: 0, func: 0 });
        insts.push(Instruction { id: InstId::new(0, i), kind, operands, result, span: Span::default() });
    }
    let params = ["from", "to", "value"].iter().map(|n| ParamIr { name: n.to_string(), ty: "uint256".into() }).collect();
    ContractIr {
        ir_version: IR_VERSION,
        contract: "Fee".into(),
        state_vars: vec![StateVarIr { name: "_balances".into(), ty: "mapping(address => uint256)".into(), slot: 0 }],
        functions: vec![FunctionIr {
            name: "_transfer".into(),
            kind: FunctionKind::Function,
            visibility: Visibility::Internal,
            mutability: Mutability::Default,
            modifiers: vec![],
            params,
            returns: vec![],
            instructions: insts,
            source: None,
            span: Span::default(),
        }],
        diagnostics: vec![],
    }
}

fn sink_path(ir: &ContractIr, at: u32) -> TaintPath {
    TaintPath {
        source: PathSource { inst: InstId::entry(0), kind: SourceKind::PublicInput },
        sink: PathSink { inst: InstId::new(0, at), kind: SinkKind::EconomicStateWrite },
        steps: vec![InstId::entry(0), InstId::new(0, at)],
        source_function: ir.functions[0].name.clone(),
        sink_function: ir.functions[0].name.clone(),
        affected_slots: Default::default(),
    }
}

#[test]
fn hand_built_fee_transfer_shapes() {
    let cfg = AnalysisConfig::default();
    let swap = "swapExactTokensForETHSupportingFeeOnTransferTokens";
    let ir = fee_ir([2, 3], 5, swap);
    let f = check_fee_on_transfer(&ir, &sink_path(&ir, 2), &cfg);
    assert_eq!(f.len(), 1);
    assert_eq!(f[0].location, "0:5");
    // swap before the second balance write
    let ir = fee_ir([2, 5], 3, swap);
    assert!(check_fee_on_transfer(&ir, &sink_path(&ir, 2), &cfg).is_empty());
    // not a transfer-named function
    let mut ir = fee_ir([2, 3], 5, swap);
    ir.functions[0].name = "settle".into();
    assert!(check_fee_on_transfer(&ir, &sink_path(&ir, 2), &cfg).is_empty());
    // unknown callee on an unknown interface
    let mut ir = fee_ir([2, 3], 5, "collect");
    if let InstKind::ExternalCall { interface, .. } = &mut ir.functions[0].instructions[5].kind {
        *interface = Some("IFeeSink".into());
    }
    assert!(check_fee_on_transfer(&ir, &sink_path(&ir, 2), &cfg).is_empty());
}

fn real_location(ir: &ContractIr, loc: &str) -> bool {
    match loc.strip_prefix("modifier ") {
        Some(m) => ir.functions.iter().any(|f| f.modifiers.iter().any(|x| x == m)),
        None => loc.parse::<InstId>().ok().and_then(|id| ir.inst(id)).is_some(),
    }
}

const ALL: [&str; 6] = ["zzf.sol", "zzf_owner.sol", "zzf_cooldown.sol", "zzf_fee.sol", "zzf_fee_unordered.sol", "zzf_fee_unknown.sol"];

#[test]
fn suppression_always_has_real_evidence() {
    for name in ALL {
        let ir = load(name);
        for o in outcomes(&ir) {
            if o.suppressed {
                assert!(!o.defenses.is_empty());
            }
            for d in &o.defenses {
                assert!(real_location(&ir, &d.location), "{name}: {}", d.location);
                assert!(!d.evidence.is_empty());
            }
        }
    }
}

#[test]
fn adding_only_owner_never_unsuppresses() {
    let cfg = AnalysisConfig::default();
    for name in ALL {
        let ir = load(name);
        for g in groups(&ir) {
            let before = check_group(&ir, &g, &cfg).suppressed;
            let mut guarded = ir.clone();
            let src = guarded.function_index(&g.key.source_function).unwrap() as usize;
            guarded.functions[src].modifiers.push("onlyOwner".into());
            let after = check_group(&guarded, &g, &cfg);
            assert!(after.suppressed, "{name} {}", g.key);
            assert!(!before || after.suppressed);
        }
    }
}
