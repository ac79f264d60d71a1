//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero when a criterion fails that is not listed in `KNOWN_RED`.
//! Runs without the libtest harness so the lines always reach the console.

mod common;

use common::{laws, oracle};
use flashtrace_core::checker::check_group;
use flashtrace_core::config::{AnalysisConfig, VisitOrder};
use flashtrace_core::frontend::{ast_dump, parse_source};
use flashtrace_core::grouping::group_paths;
use flashtrace_core::ir::*;
use flashtrace_core::pipeline::*;
use flashtrace_core::reasoning::*;
use flashtrace_core::report::*;
use flashtrace_core::taint::*;
use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};
use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;
use std::time::Instant;

/// Criteria that cannot pass as stated. Each still runs and prints FAIL;
/// the harness only insists that it keeps failing for the recorded reason.
const KNOWN_RED: &[(&str, &str)] = &[("metrics-rows", "(60,8,6) gives precision 60/66 = 0.909, outside 0.90 +/- 0.005")];

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn root() -> &'static str {
    env!("CARGO_MANIFEST_DIR")
}

fn read(rel: &str) -> String {
    std::fs::read_to_string(format!("{}/{rel}", root())).unwrap_or_else(|e| panic!("{rel}: {e}"))
}

fn sol_files(rel: &str) -> Vec<(String, String)> {
    let dir = format!("{}/{rel}", root());
    let mut v: Vec<(String, String)> = std::fs::read_dir(&dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "sol"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read_to_string(&p).unwrap()))
        .collect();
    v.sort();
    v
}

fn lower(name: &str, src: &str) -> Result<ContractIr, String> {
    let unit = parse_source(src, name);
    if unit.errors().count() > 0 {
        return Err(format!("{name}: {:?}", unit.diagnostics));
    }
    lower_unit(&unit, src).pop().ok_or_else(|| format!("{name}: no contract"))
}

fn taint(ir: &ContractIr, cfg: &AnalysisConfig) -> TaintResult {
    analyze_taint(ir, &build_icfg(ir), &extract_primitives(ir, cfg), cfg)
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn offline(cfg: &AnalysisConfig) -> Engine {
    Engine::offline(OfflineRules::from_config(cfg))
}

fn run_file(name: &str, text: &str, engine: &Engine, cfg: &AnalysisConfig) -> Result<Run, String> {
    run(RunInput { name, text, format: InputFormat::Solidity, config: cfg, engine, config_echo: config_echo(cfg, engine), secrets: vec![] })
        .map_err(|e| format!("{name}: {e}"))
}

fn zzf_end_to_end() -> Outcome {
    let t = Instant::now();
    let cfg = AnalysisConfig::default();
    let src = read("tests/fixtures/zzf.sol");
    let ir = lower("zzf.sol", &src)?;
    let r = taint(&ir, &cfg);
    let to_transfer = r
        .paths
        .iter()
        .filter(|p| p.source.kind == SourceKind::KnownDexCall && p.sink.kind == SinkKind::EtherTokenTransfer)
        .filter(|p| matches!(ir.inst(p.source.inst).map(|i| &i.kind), Some(InstKind::ExternalCall { function, .. } ) if function == "getAmountsOut"))
        .count();
    ensure(to_transfer >= 1, || "no getAmountsOut -> transfer path".into())?;
    let run = run_file("zzf.sol", &src, &offline(&cfg), &cfg)?;
    let secs = t.elapsed().as_secs_f64();
    let rep = &run.report;
    ensure(rep.high_findings() == 1, || format!("{} high findings", rep.high_findings()))?;
    let f = rep.findings.iter().find(|f| f.severity == Severity::High).unwrap();
    let p1 = f.phases[&1].instructions.join(" ");
    let p3 = f.phases[&3].instructions.join(" ");
    ensure(p1.contains("getAmountsOut"), || format!("phase 1 anchor {p1:?}"))?;
    ensure(p3.contains("_transfer("), || format!("phase 3 anchor {p3:?}"))?;
    ensure(secs < 2.0, || format!("{secs:.2}s"))?;
    Ok(format!("{to_transfer} oracle->transfer paths, 1 high finding, {secs:.2}s"))
}

fn metrics_rows() -> Outcome {
    // counts and the published (precision, recall, f1)
    let rows = [((57, 11, 0), (1.00, 0.84, 0.91)), ((60, 8, 6), (0.90, 0.88, 0.90)), ((59, 9, 10), (0.86, 0.87, 0.86))];
    let mut bad = Vec::new();
    for ((tp, fn_, fp), want) in rows {
        // independent arithmetic
        let (p, r) = (tp as f64 / (tp + fp) as f64, tp as f64 / (tp + fn_) as f64);
        let f1 = 2.0 * p * r / (p + r);
        let m = CorpusMetrics::from_counts(tp, fn_, fp);
        let got = (m.precision.value().unwrap(), m.recall.value().unwrap(), m.f1.value().unwrap());
        if (got.0 - p).abs() > 1e-12 || (got.1 - r).abs() > 1e-12 || (got.2 - f1).abs() > 1e-12 {
            bad.push(format!("({tp},{fn_},{fp}): implementation {got:?} disagrees with {:?}", (p, r, f1)));
        }
        for (name, g, w) in [("precision", got.0, want.0), ("recall", got.1, want.1), ("f1", got.2, want.2)] {
            if (g - w).abs() > 0.005 {
                bad.push(format!("({tp},{fn_},{fp}) {name} {g:.4} vs {w:.2}"));
            }
        }
    }
    ensure(bad.is_empty(), || bad.join("; "))?;
    Ok("3 rows".into())
}

fn taint_oracle_equivalence() -> Outcome {
    let t = Instant::now();
    let cfg = AnalysisConfig::default();
    let fixtures = sol_files("tests/fixtures/oracle");
    ensure(fixtures.len() >= 10, || format!("{} fixtures", fixtures.len()))?;
    for (name, src) in &fixtures {
        let ir = lower(name, src)?;
        ensure(ir.instruction_count() <= 50, || format!("{name}: {} instructions", ir.instruction_count()))?;
        let r = taint(&ir, &cfg);
        let o = oracle::run(&ir, &cfg);
        let got: BTreeSet<oracle::Node> = r
            .map
            .var_taints
            .iter()
            .filter(|(_, s)| !s.is_empty())
            .map(|(k, _)| oracle::Node::Var(k.clone()))
            .chain(r.map.slot_taints.iter().filter(|(_, s)| !s.is_empty()).map(|(k, _)| oracle::Node::Slot(k.clone())))
            .collect();
        let want: BTreeSet<oracle::Node> =
            o.vars.keys().map(|k| oracle::Node::Var(k.clone())).chain(o.slots.keys().map(|k| oracle::Node::Slot(k.clone()))).collect();
        ensure(got == want, || format!("{name}: carrier sets differ"))?;
        let gs: BTreeSet<(InstId, SinkKind)> = r.sinks.iter().map(|s| (s.inst, s.kind)).collect();
        let ws: BTreeSet<(InstId, SinkKind)> = o.sinks.keys().cloned().collect();
        ensure(gs == ws, || format!("{name}: sink sets differ"))?;
    }
    let secs = t.elapsed().as_secs_f64();
    ensure(secs < 1.0, || format!("{secs:.2}s"))?;
    Ok(format!("{} fixtures, {secs:.3}s", fixtures.len()))
}

fn fixpoint_properties() -> Outcome {
    let mut all = sol_files("tests/fixtures/oracle");
    all.extend(sol_files("tests/fixtures"));
    let fwd = AnalysisConfig::default();
    let rev = AnalysisConfig { visit_order: VisitOrder::Reverse, ..AnalysisConfig::default() };
    let mut iterations = 0;
    for (name, src) in &all {
        let ir = lower(name, src)?;
        let icfg = build_icfg(&ir);
        let mut maps = Vec::new();
        for cfg in [&fwd, &rev] {
            let facts = extract_primitives(&ir, cfg);
            let ctx = TaintContext::new(&ir, &icfg, &facts, cfg);
            let mut map = identify_sources(&ctx);
            loop {
                let next = propagate(&ctx, &map);
                iterations += 1;
                ensure(map.is_subset_of(&next), || format!("{name}: iteration {iterations} lost a label"))?;
                if next == map {
                    break;
                }
                map = next;
            }
            maps.push(map);
        }
        ensure(maps[0] == maps[1], || format!("{name}: visit orders disagree"))?;
    }
    Ok(format!("{} fixtures, {iterations} iterations checked", all.len()))
}

fn grouping_laws() -> Outcome {
    let cases = 1000;
    let mut runner = TestRunner::new(Config { cases, failure_persistence: None, ..Config::default() });
    let strat = (laws::kinds(), laws::raw_paths(), 1u32..4, any::<u64>());
    runner.run(&strat, |(ks, raw, shift, seed)| laws::check_grouping_laws(&ks, &raw, shift, seed)).map_err(|e| e.to_string())?;
    Ok(format!("{cases} generated cases"))
}

fn sink_rules() -> Outcome {
    let cfg = AnalysisConfig::default();
    let cases: [(&str, &str, SinkKind, bool); 6] = [
        (
            "ett+",
            "contract T { IToken t; function f(address to, uint n) public { t.transfer(to, n); } }",
            SinkKind::EtherTokenTransfer,
            true,
        ),
        ("ett-", "contract T { IToken t; function f(address to) public { t.transfer(to, 10); } }", SinkKind::EtherTokenTransfer, false),
        (
            "ilu+",
            "contract P { mapping(address => uint) bal;
               function credit(address a, uint v) private { bal[a] = v; }
               function outer(uint v) public { credit(msg.sender, v); } }",
            SinkKind::InternalLedgerUpdate,
            true,
        ),
        (
            "ilu-",
            "contract P { mapping(address => uint) bal;
               function credit(address a, uint v) public { bal[a] = v; }
               function outer(uint v) public { credit(msg.sender, v); } }",
            SinkKind::InternalLedgerUpdate,
            false,
        ),
        (
            "esw+",
            "contract K { mapping(address => uint) shares; function f(uint p) public { shares[msg.sender] = p * 2; } }",
            SinkKind::EconomicStateWrite,
            true,
        ),
        ("esw-", "contract K { mapping(uint => uint) m; function f() public { m[1] = 5; } }", SinkKind::EconomicStateWrite, false),
    ];
    for (label, src, kind, present) in cases {
        let ir = lower(label, src)?;
        let r = taint(&ir, &cfg);
        let found = r.sinks.iter().any(|s| s.kind == kind);
        ensure(found == present, || format!("{label}: {kind:?} present={found}"))?;
    }
    Ok("3 rules x (positive, negative)".into())
}

fn checker_suite() -> Outcome {
    let cfg = AnalysisConfig::default();
    let dex_suppressed = |name: &str| -> Result<Vec<bool>, String> {
        let ir = lower(name, &read(&format!("tests/fixtures/{name}")))?;
        let r = taint(&ir, &cfg);
        let groups = group_paths(&ir, &r.paths);
        Ok(groups
            .iter()
            .filter(|g| g.source_kinds().contains(&SourceKind::KnownDexCall))
            .map(|g| check_group(&ir, g, &cfg).suppressed)
            .collect())
    };
    let base = dex_suppressed("zzf.sol")?;
    ensure(!base.is_empty() && base.iter().all(|s| !s), || format!("original: {base:?}"))?;
    for name in ["zzf_owner.sol", "zzf_cooldown.sol", "zzf_fee.sol"] {
        let s = dex_suppressed(name)?;
        ensure(!s.is_empty() && s.iter().all(|s| *s), || format!("{name}: {s:?}"))?;
    }
    let literal = "require(block.timestamp >= lastActionTime + cooldownPeriod)";
    ensure(read("tests/fixtures/zzf_cooldown.sol").contains(literal), || "cooldown fixture lacks the literal guard".into())?;
    Ok("3 defenses suppress, original not suppressed".into())
}

fn mini_corpus(engine: &Engine, cfg: &AnalysisConfig) -> Result<(BTreeMap<String, Run>, String), String> {
    let mut runs = BTreeMap::new();
    for (name, text) in sol_files("../../corpus/mini") {
        let r = run_file(&name, &text, engine, cfg)?;
        runs.insert(name, r);
    }
    let labels: BTreeMap<String, Label> = serde_json::from_str(&read("../../corpus/mini/labels.json")).map_err(|e| e.to_string())?;
    let reports: BTreeMap<String, Report> = runs.iter().map(|(k, r)| (k.clone(), r.report.clone())).collect();
    let m = compute_metrics(&labels, &reports).map_err(|e| e.to_string())?;
    Ok((runs, serde_json::to_string(&m).unwrap()))
}

fn corpus_determinism() -> Outcome {
    let t = Instant::now();
    let cfg = AnalysisConfig::default();
    let engine = offline(&cfg);
    let (a, ma) = mini_corpus(&engine, &cfg)?;
    let (b, mb) = mini_corpus(&engine, &cfg)?;
    let secs = t.elapsed().as_secs_f64();
    ensure(a.len() == 12, || format!("{} contracts", a.len()))?;
    for (k, r) in &a {
        ensure(r.report.to_json() == b[k].report.to_json(), || format!("{k}: report differs"))?;
        ensure(r.stages_json(&[]) == b[k].stages_json(&[]), || format!("{k}: stages differ"))?;
    }
    ensure(ma == mb, || "metrics differ".into())?;
    let m: CorpusMetrics = serde_json::from_str(&ma).unwrap();
    let (p, r) = (m.precision.value().unwrap_or(0.0), m.recall.value().unwrap_or(0.0));
    ensure(m.fp == 0 && (p - 1.0).abs() < 1e-12, || format!("precision {p}"))?;
    ensure(r >= 0.83, || format!("recall {r}"))?;
    ensure(secs < 30.0, || format!("{secs:.2}s"))?;
    Ok(format!("TP {} FN {} FP {} TN {}, precision {p:.2}, recall {r:.2}, {secs:.2}s for two runs", m.tp, m.fn_, m.fp, m.tn))
}

fn stage_ordering() -> Outcome {
    let cfg = AnalysisConfig::default();
    let mut runs: Vec<Run> = mini_corpus(&offline(&cfg), &cfg)?.0.into_values().collect();
    // a scripted filter that discards every other group
    let client = Arc::new(ScriptedClient::new(|p, _| {
        if p.contains("Respond with a JSON array") {
            let docs: Vec<String> = p
                .lines()
                .filter_map(|l| l.strip_prefix("### Group "))
                .enumerate()
                .map(|(i, id)| {
                    format!(
                        r#"{{"groupId": "{id}", "accessControl": "a", "economicIntent": "b", "mitigation": "c", "keep": {}}}"#,
                        i % 2 == 1
                    )
                })
                .collect();
            Ok(format!("[{}]", docs.join(",")))
        } else {
            Ok(r#"{"verdict": true, "vulnerableFunctions": [], "attackExplanation": "x"}"#.into())
        }
    }));
    let engine = Engine::with_client(EngineConfig::default(), OfflineRules::from_config(&cfg), Box::new(client));
    for (name, text) in sol_files("../../corpus/mini") {
        runs.push(run_file(&name, &text, &engine, &cfg)?);
    }
    let (mut discarded, mut simulated) = (0, 0);
    for r in &runs {
        for st in &r.stages {
            let kept: BTreeSet<&str> = st.filter_verdicts.iter().filter(|v| v.keep).map(|v| v.group_id.as_str()).collect();
            discarded += st.filter_verdicts.len() - kept.len();
            for p in &st.simulation_prompts {
                simulated += 1;
                ensure(kept.contains(p.group_id.as_str()), || format!("{}: simulated discarded group {}", st.contract, p.group_id))?;
            }
        }
    }
    ensure(discarded > 0 && simulated > 0, || format!("vacuous: {discarded} discarded, {simulated} simulated"))?;
    Ok(format!("{} runs, {discarded} discarded groups, 0 simulated", runs.len()))
}

fn nonempty_spans(n: &serde_json::Value) -> bool {
    let ok = n["span"].as_array().is_none_or(|a| a[0].as_u64() < a[1].as_u64());
    ok && n["children"].as_array().into_iter().flatten().all(nonempty_spans)
}

fn fuzz_robustness() -> Outcome {
    let cases = 10_000;
    let mut runner = TestRunner::new(Config { cases, failure_persistence: None, ..Config::default() });
    runner
        .run(&prop::collection::vec(any::<u8>(), 0..512), |bytes| {
            let text = String::from_utf8_lossy(&bytes);
            let u =
                std::panic::catch_unwind(|| parse_source(&text, "fuzz.sol")).map_err(|_| TestCaseError::fail("parse_source panicked"))?;
            let names: BTreeSet<&str> = u.contracts.iter().map(|c| c.name.name.as_str()).collect();
            prop_assert_eq!(names.len(), u.contracts.len());
            prop_assert!(nonempty_spans(&ast_dump(&u)));
            prop_assert!(u.diagnostics.iter().all(|d| !d.code.is_empty() && d.span.end <= text.len()));
            Ok(())
        })
        .map_err(|e| e.to_string())?;
    Ok(format!("{cases} random byte strings"))
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("zzf-end-to-end", zzf_end_to_end),
        ("metrics-rows", metrics_rows),
        ("taint-oracle-equivalence", taint_oracle_equivalence),
        ("fixpoint-properties", fixpoint_properties),
        ("grouping-laws", grouping_laws),
        ("sink-rules", sink_rules),
        ("checker-suite", checker_suite),
        ("corpus-determinism", corpus_determinism),
        ("stage-ordering", stage_ordering),
        ("fuzz-robustness", fuzz_robustness),
    ];
    let mut unexpected = Vec::new();
    for (name, check) in criteria {
        let outcome = std::panic::catch_unwind(check).unwrap_or_else(|_| Err("panicked".into()));
        let known = KNOWN_RED.iter().find(|(n, _)| *n == name);
        match (&outcome, known) {
            (Ok(detail), None) => println!("PASS {name}: {detail}"),
            (Err(why), Some((_, reason))) => println!("FAIL {name}: {why} [known: {reason}]"),
            (Err(why), None) => {
                println!("FAIL {name}: {why}");
                unexpected.push(name);
            }
            (Ok(detail), Some(_)) => {
                println!("PASS {name}: {detail} [listed as known red; update KNOWN_RED]");
                unexpected.push(name);
            }
        }
    }
    if !unexpected.is_empty() {
        eprintln!("acceptance: unexpected outcome for {}", unexpected.join(", "));
        std::process::exit(1);
    }
}
