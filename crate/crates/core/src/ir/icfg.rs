//! Inter-procedural control-flow graph and call graph.

use super::*;
use crate::frontend::Diagnostic;
use std::collections::{BTreeMap, BTreeSet};

pub const UNRESOLVED_INTERNAL_CALL: &str = "unresolved-internal-call";

/// Edges use instruction ids; each function also has `InstId::entry(f)`
/// (bound to its first instruction) and `InstId::exit(f)` (reached from
/// every `Return`). Those two bindings are implicit and not listed in
/// `intra_edges`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct Icfg {
    pub nodes: Vec<InstId>,
    pub intra_edges: Vec<(InstId, InstId)>,
    pub call_edges: Vec<(InstId, InstId)>,
    pub return_edges: Vec<(InstId, InstId)>,
    pub entry_points: Vec<InstId>,
    /// caller function -> callee functions
    pub call_graph: BTreeMap<u32, BTreeSet<u32>>,
    pub diagnostics: Vec<Diagnostic>,
}

impl Icfg {
    pub fn intra_successors(&self, id: InstId) -> impl Iterator<Item = InstId> + '_ {
        let start = self.intra_edges.partition_point(|(a, _)| *a < id);
        self.intra_edges[start..].iter().take_while(move |(a, _)| *a == id).map(|(_, b)| *b)
    }

    /// Callee entry of a call site, if the call resolves.
    pub fn callee_of(&self, cs: InstId) -> Option<u32> {
        self.call_edges.iter().find(|(a, _)| *a == cs).map(|(_, b)| b.func)
    }

    /// Call sites that call `func`.
    pub fn callers_of(&self, func: u32) -> Vec<InstId> {
        self.call_edges.iter().filter(|(_, b)| b.func == func).map(|(a, _)| *a).collect()
    }

    /// Functions reachable from `func` in the call graph, `func` included.
    pub fn reachable_functions(&self, func: u32) -> BTreeSet<u32> {
        let mut seen = BTreeSet::from([func]);
        let mut stack = vec![func];
        while let Some(f) = stack.pop() {
            for g in self.call_graph.get(&f).into_iter().flatten() {
                if seen.insert(*g) {
                    stack.push(*g);
                }
            }
        }
        seen
    }
}

pub fn build_icfg(ir: &ContractIr) -> Icfg {
    let mut g = Icfg::default();
    for (fi, f) in ir.functions.iter().enumerate() {
        let fi = fi as u32;
        g.nodes.push(InstId::entry(fi));
        if f.is_public() {
            g.entry_points.push(InstId::entry(fi));
        }
        let len = f.instructions.len() as u32;
        for inst in &f.instructions {
            g.nodes.push(inst.id);
            for s in inst.successors(len) {
                g.intra_edges.push((inst.id, InstId::new(fi, s)));
            }
            if let InstKind::InternalCall { callee, resolved, .. } = &inst.kind {
                match resolved.filter(|r| (*r as usize) < ir.functions.len()) {
                    Some(target) => {
                        g.call_edges.push((inst.id, InstId::entry(target)));
                        g.return_edges.push((InstId::exit(target), inst.id));
                        g.call_graph.entry(fi).or_default().insert(target);
                    }
                    None => g.diagnostics.push(Diagnostic::warning(
                        UNRESOLVED_INTERNAL_CALL,
                        inst.span,
                        format!("internal callee `{callee}` not found; call treated as opaque"),
                    )),
                }
            }
        }
        g.nodes.push(InstId::exit(fi));
    }
    g.intra_edges.sort();
    g
}
