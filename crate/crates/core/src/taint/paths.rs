//! Path reconstruction over (point, label) states.
//!
//! A state holds when the point carries the label in the final map. Each
//! predecessor edge is justified by one propagation rule and re-checks the
//! carrier it goes through, so a chain never links two points that merely
//! share a label.

use super::engine::{implicit_in, return_labels};
use super::sinks::sink_operands;
use super::{LabelSet, PathSink, PathSource, Point, SinkKind, SourceKind, TaintContext, TaintLabel, TaintMap, TaintPath};
use crate::ir::{InstId, InstKind, SlotId, ValueRef};
use serde::Serialize;
use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};

pub const PATH_CAPPED: &str = "path-capped";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Rule {
    Data,
    CallArg,
    Return,
    Storage,
    Control,
}

impl Rule {
    pub fn as_str(self) -> &'static str {
        match self {
            Rule::Data => "data",
            Rule::CallArg => "call-arg",
            Rule::Return => "return",
            Rule::Storage => "storage",
            Rule::Control => "control",
        }
    }
}

type State = (Point, TaintLabel);

/// Labels held at a point.
pub(crate) fn carried(ctx: &TaintContext, map: &TaintMap, p: Point) -> LabelSet {
    let mut out = LabelSet::new();
    match p {
        Point::Entry(f) => {
            for i in 0..ctx.ir.functions[f as usize].params.len() {
                out.extend(map.labels(&ValueRef::Param { func: f, index: i as u32 }).iter().cloned());
            }
        }
        Point::Ret(cs) => {
            for d in ctx.inst(cs).defs() {
                out.extend(map.labels(&d).iter().cloned());
            }
        }
        Point::Inst(id) => {
            let inst = ctx.inst(id);
            match &inst.kind {
                _ if ctx.is_resolved_call(id) => {
                    for a in &inst.operands {
                        out.extend(map.labels(a).iter().cloned());
                    }
                }
                InstKind::SStore { .. } => {
                    out.extend(inst.operands.first().iter().flat_map(|o| map.labels(o).iter().cloned()));
                    out.extend(implicit_in(ctx, map, inst));
                }
                InstKind::CondJump { .. } | InstKind::Require => {
                    out.extend(inst.operands.first().iter().flat_map(|o| map.labels(o).iter().cloned()));
                }
                InstKind::Return => {
                    for o in &inst.operands {
                        out.extend(map.labels(o).iter().cloned());
                    }
                    out.extend(implicit_in(ctx, map, inst));
                }
                InstKind::Jump { .. } | InstKind::Revert => {}
                _ => {
                    for d in inst.defs() {
                        out.extend(map.labels(&d).iter().cloned());
                    }
                }
            }
        }
    }
    out
}

fn is_source(p: Point, l: &TaintLabel) -> bool {
    if l.implicit {
        return false;
    }
    match l.source_kind {
        SourceKind::PublicInput => p == Point::Entry(l.source_id.func) && l.source_id.is_entry(),
        _ => p == Point::Inst(l.source_id),
    }
}

fn data_preds(ctx: &TaintContext, map: &TaintMap, ops: &[ValueRef], l: &TaintLabel, out: &mut Vec<(Point, TaintLabel, Rule)>) {
    for o in ops {
        if map.labels(o).contains(l) {
            if let Some(&d) = ctx.def_sites.get(o) {
                out.push((d, l.clone(), Rule::Data));
            }
        }
    }
}

fn control_preds(ctx: &TaintContext, map: &TaintMap, at: InstId, l: &TaintLabel, out: &mut Vec<(Point, TaintLabel, Rule)>) {
    if !l.implicit {
        return;
    }
    let explicit = l.as_explicit();
    let f = &ctx.ir.functions[at.func as usize];
    for &c in ctx.deps_of(at) {
        let cond = f.instructions[c as usize].operands.first();
        if cond.is_some_and(|o| map.labels(o).contains(&explicit)) {
            out.push((Point::Inst(InstId::new(at.func, c)), explicit.clone(), Rule::Control));
        }
    }
}

/// Predecessor states of a held state, each with the rule that links them.
pub(crate) fn preds(ctx: &TaintContext, map: &TaintMap, p: Point, l: &TaintLabel) -> Vec<(Point, TaintLabel, Rule)> {
    let mut out = Vec::new();
    match p {
        Point::Entry(f) => {
            for &cs in ctx.callers.get(&f).into_iter().flatten() {
                let args = &ctx.inst(cs).operands;
                let ok = args
                    .iter()
                    .enumerate()
                    .any(|(i, a)| map.labels(a).contains(l) && map.labels(&ValueRef::Param { func: f, index: i as u32 }).contains(l));
                if ok {
                    out.push((Point::Inst(cs), l.clone(), Rule::CallArg));
                }
            }
        }
        Point::Ret(cs) => {
            let g = ctx.callee[&cs];
            let defs = ctx.inst(cs).defs();
            for r in ctx.returns_of(g) {
                let ok = defs.iter().enumerate().any(|(k, d)| map.labels(d).contains(l) && return_labels(ctx, map, r, k).contains(l));
                if ok {
                    out.push((Point::Inst(r.id), l.clone(), Rule::Return));
                }
            }
            if implicit_in(ctx, map, ctx.inst(cs)).contains(l) {
                control_preds(ctx, map, cs, l, &mut out);
            }
        }
        Point::Inst(id) => {
            let inst = ctx.inst(id);
            data_preds(ctx, map, ctx.data_operands(inst), l, &mut out);
            if let InstKind::SLoad { slot } = &inst.kind {
                for u in ctx.aliasing_stores(slot) {
                    if carried(ctx, map, Point::Inst(u.id)).contains(l) {
                        out.push((Point::Inst(u.id), l.clone(), Rule::Storage));
                    }
                }
            }
            let gets_implicit = !ctx.is_resolved_call(id)
                && !matches!(inst.kind, InstKind::CondJump { .. } | InstKind::Require | InstKind::Jump { .. } | InstKind::Revert);
            if gets_implicit && implicit_in(ctx, map, inst).contains(l) {
                control_preds(ctx, map, id, l, &mut out);
            }
        }
    }
    out.sort();
    out.dedup();
    out
}

fn sink_preds(ctx: &TaintContext, map: &TaintMap, sink: &PathSink, l: &TaintLabel) -> Vec<(Point, TaintLabel, Rule)> {
    let mut out = Vec::new();
    if let Some(ops) = sink_operands(ctx, ctx.inst(sink.inst), sink.kind) {
        data_preds(ctx, map, &ops, l, &mut out);
    }
    out.sort();
    out.dedup();
    out
}

fn all_points(ctx: &TaintContext) -> Vec<Point> {
    let mut pts = Vec::new();
    for (fi, f) in ctx.ir.functions.iter().enumerate() {
        pts.push(Point::Entry(fi as u32));
        for inst in &f.instructions {
            pts.push(Point::Inst(inst.id));
            if ctx.is_resolved_call(inst.id) {
                pts.push(Point::Ret(inst.id));
            }
        }
    }
    pts
}

/// Fills every label's provenance with the shortest chain of points from
/// its source to the definition of the carrier holding it.
pub fn fill_provenance(ctx: &TaintContext, map: &mut TaintMap) {
    // forward adjacency of the state graph
    let mut succ: BTreeMap<State, Vec<State>> = BTreeMap::new();
    let mut sources: BTreeSet<State> = BTreeSet::new();
    for p in all_points(ctx) {
        for l in carried(ctx, map, p) {
            if is_source(p, &l) {
                sources.insert((p, l.clone()));
            }
            for (q, lq, _) in preds(ctx, map, p, &l) {
                succ.entry((q, lq)).or_default().push((p, l.clone()));
            }
        }
    }
    let mut chain: HashMap<State, Vec<InstId>> = HashMap::new();
    for s in sources {
        let mut queue = VecDeque::from([s.clone()]);
        let mut local: HashMap<State, Vec<InstId>> = HashMap::from([(s.clone(), vec![s.0.id()])]);
        while let Some(cur) = queue.pop_front() {
            let base = local[&cur].clone();
            for n in succ.get(&cur).into_iter().flatten() {
                if !local.contains_key(n) {
                    let mut c = base.clone();
                    c.push(n.0.id());
                    local.insert(n.clone(), c);
                    queue.push_back(n.clone());
                }
            }
        }
        for (k, v) in local {
            match chain.get(&k) {
                Some(old) if (old.len(), old) <= (v.len(), &v) => {}
                _ => {
                    chain.insert(k, v);
                }
            }
        }
    }
    let def_sites = &ctx.def_sites;
    for (v, ls) in map.var_taints.iter_mut() {
        let Some(&p) = def_sites.get(v) else { continue };
        *ls = ls
            .iter()
            .map(|l| {
                let mut l = l.clone();
                l.provenance = chain.get(&(p, l.clone())).cloned().unwrap_or_default();
                l
            })
            .collect();
    }
    let stores: Vec<(SlotId, InstId)> = ctx.facts.sstores.iter().map(|s| (s.slot.clone(), s.inst)).collect();
    for (slot, ls) in map.slot_taints.iter_mut() {
        *ls = ls
            .iter()
            .map(|l| {
                let mut l = l.clone();
                l.provenance = stores
                    .iter()
                    .filter(|(s, _)| s == slot)
                    .filter_map(|(_, u)| chain.get(&(Point::Inst(*u), l.clone())))
                    .min_by(|a, b| (a.len(), *a).cmp(&(b.len(), *b)))
                    .cloned()
                    .unwrap_or_default();
                l
            })
            .collect();
    }
}

#[derive(Debug, Clone, Default)]
pub struct PathSet {
    pub paths: Vec<TaintPath>,
    /// Complete paths beyond the per-pair cap.
    pub dropped: usize,
    /// The global expansion budget ran out.
    pub capped: bool,
}

fn build_path(ctx: &TaintContext, src: &TaintLabel, sink: &PathSink, chain: &[Point]) -> TaintPath {
    let mut steps: Vec<InstId> = chain.iter().rev().map(|p| p.id()).collect();
    steps.push(sink.inst);
    let mut affected = BTreeSet::new();
    for p in chain {
        if let Point::Inst(id) = p {
            if let InstKind::SStore { slot } = &ctx.inst(*id).kind {
                affected.insert(slot.clone());
            }
        }
    }
    let sink_inst = ctx.inst(sink.inst);
    if let InstKind::SStore { slot } = &sink_inst.kind {
        affected.insert(slot.clone());
    }
    let sink_function = match (sink.kind, ctx.callee.get(&sink.inst)) {
        (SinkKind::InternalLedgerUpdate, Some(&g)) => {
            for s in &ctx.facts.sstores {
                if s.inst.func == g && s.slot.is_mapping_base {
                    affected.insert(s.slot.clone());
                }
            }
            ctx.ir.functions[g as usize].name.clone()
        }
        _ => ctx.ir.functions[sink.inst.func as usize].name.clone(),
    };
    TaintPath {
        source: PathSource { inst: src.source_id, kind: src.source_kind },
        sink: sink.clone(),
        source_function: ctx.ir.functions[src.source_id.func as usize].name.clone(),
        sink_function,
        steps,
        affected_slots: affected,
    }
}

/// Enumerates source-to-sink chains backwards from every sink, shortest
/// first, at most `max_paths_per_pair` per (source, sink).
pub fn reconstruct_paths(ctx: &TaintContext, map: &TaintMap, sinks: &[super::Sink]) -> PathSet {
    let cap = ctx.config.max_paths_per_pair;
    let mut budget = ctx.config.path_expansion_budget;
    let mut set = PathSet::default();
    for sink in sinks {
        let ps = PathSink { inst: sink.inst, kind: sink.kind };
        let by_source: BTreeSet<(InstId, SourceKind)> = sink.labels.iter().map(|l| (l.source_id, l.source_kind)).collect();
        for (sid, skind) in by_source {
            let src = TaintLabel::new(sid, skind);
            // chains are stored sink-side first
            let mut frontier: Vec<Vec<State>> = Vec::new();
            for l in sink.labels.iter().filter(|l| l.source_id == sid && l.source_kind == skind) {
                for (q, lq, _) in sink_preds(ctx, map, &ps, l) {
                    frontier.push(vec![(q, lq)]);
                }
            }
            let mut found: BTreeSet<Vec<InstId>> = BTreeSet::new();
            let mut kept = 0usize;
            while !frontier.is_empty() && !set.capped {
                let mut layer: BTreeMap<Vec<InstId>, Vec<Point>> = BTreeMap::new();
                let mut next = Vec::new();
                for chain in frontier {
                    let (p, l) = chain.last().expect("non-empty chain").clone();
                    if is_source(p, &l) {
                        let pts: Vec<Point> = chain.iter().map(|s| s.0).collect();
                        let mut steps: Vec<InstId> = pts.iter().rev().map(|p| p.id()).collect();
                        steps.push(sink.inst);
                        layer.entry(steps).or_insert(pts);
                        continue;
                    }
                    for (q, lq, _) in preds(ctx, map, p, &l) {
                        let seen = chain.iter().filter(|s| s.0.id() == q.id()).count();
                        if seen >= 2 || q.id() == sink.inst {
                            continue;
                        }
                        if budget == 0 {
                            set.capped = true;
                            break;
                        }
                        budget -= 1;
                        let mut c = chain.clone();
                        c.push((q, lq));
                        next.push(c);
                    }
                }
                for (steps, pts) in layer {
                    if !found.insert(steps) {
                        continue;
                    }
                    if kept < cap {
                        set.paths.push(build_path(ctx, &src, &ps, &pts));
                        kept += 1;
                    } else {
                        set.dropped += 1;
                    }
                }
                frontier = next;
            }
        }
    }
    set.paths.sort_by(|a, b| (a.sink.inst, &a.source, a.steps.len(), &a.steps).cmp(&(b.sink.inst, &b.source, b.steps.len(), &b.steps)));
    set
}

/// Replays a path: returns the rule linking each consecutive pair of steps
/// (the last one names the sink operand link as `data`).
pub fn validate_path(ctx: &TaintContext, map: &TaintMap, path: &TaintPath) -> Result<Vec<Rule>, String> {
    let n = path.steps.len();
    if n < 2 {
        return Err("a path needs a source and a sink".into());
    }
    let key = |l: &TaintLabel| l.source_id == path.source.inst && l.source_kind == path.source.kind;
    let points = |id: InstId| -> Vec<Point> {
        if id.is_entry() {
            vec![Point::Entry(id.func)]
        } else if id.is_pseudo() || ctx.ir.inst(id).is_none() {
            vec![]
        } else if ctx.is_resolved_call(id) {
            vec![Point::Inst(id), Point::Ret(id)]
        } else {
            vec![Point::Inst(id)]
        }
    };
    let mut cur: BTreeMap<State, Vec<Rule>> = BTreeMap::new();
    for p in points(path.steps[0]) {
        let l = TaintLabel::new(path.source.inst, path.source.kind);
        if is_source(p, &l) && carried(ctx, map, p).contains(&l) {
            cur.insert((p, l), Vec::new());
        }
    }
    if cur.is_empty() {
        return Err(format!("step 0 ({}) is not the source", path.steps[0]));
    }
    for i in 1..n - 1 {
        let mut next: BTreeMap<State, Vec<Rule>> = BTreeMap::new();
        for q in points(path.steps[i]) {
            for lq in carried(ctx, map, q).into_iter().filter(|l| key(l)) {
                for (pp, lp, rule) in preds(ctx, map, q, &lq) {
                    if let Some(rules) = cur.get(&(pp, lp)) {
                        let mut r = rules.clone();
                        r.push(rule);
                        next.entry((q, lq.clone())).or_insert(r);
                        break;
                    }
                }
            }
        }
        if next.is_empty() {
            return Err(format!("no rule justifies {} -> {}", path.steps[i - 1], path.steps[i]));
        }
        cur = next;
    }
    let sink = &path.sink;
    if path.steps[n - 1] != sink.inst {
        return Err("last step is not the sink".into());
    }
    let ops = sink_operands(ctx, ctx.inst(sink.inst), sink.kind).ok_or("sink rule does not apply")?;
    for ((p, l), rules) in &cur {
        if sink_preds(ctx, map, sink, l).iter().any(|(q, lq, _)| q == p && lq == l) && !ops.is_empty() {
            let mut r = rules.clone();
            r.push(Rule::Data);
            return Ok(r);
        }
    }
    Err(format!("no tainted sink operand at {}", sink.inst))
}
