//! Deterministic stand-in for a live model, used in tests and CI.
//!
//! Filter: keep a group iff its source function carries no privileged
//! modifier, it is fed by a price read or touches some state, and no
//! cooldown guard sits on the path. Simulation: vulnerable iff a DEX or
//! oracle read is among its sources. The engine writes the same JSON a
//! model would and runs it through the ordinary parser.

use super::{parse_verdict, FilterVerdict, SimulationVerdict, Stage, Verdict};
use crate::config::AnalysisConfig;
use crate::grouping::GroupSummary;
use crate::taint::SourceKind;
use serde_json::json;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OfflineRules {
    pub privileged_modifiers: Vec<String>,
}

impl OfflineRules {
    pub fn from_config(cfg: &AnalysisConfig) -> Self {
        OfflineRules { privileged_modifiers: cfg.privileged_modifiers.clone() }
    }

    fn privileged<'s>(&self, s: &'s GroupSummary) -> Option<&'s str> {
        s.source_function.modifiers.iter().find(|m| self.privileged_modifiers.contains(m)).map(String::as_str)
    }

    fn price_read(s: &GroupSummary) -> bool {
        let price = [SourceKind::KnownDexCall.as_str(), SourceKind::OracleViewCall.as_str()];
        s.source_kinds.iter().any(|k| price.contains(&k.as_str()))
    }

    fn cooldown(s: &GroupSummary) -> Option<&str> {
        s.guards
            .iter()
            .find(|g| g.contains("block.timestamp") && g.contains('+') && (g.contains('<') || g.contains('>')))
            .map(String::as_str)
    }

    pub fn filter(&self, s: &GroupSummary) -> FilterVerdict {
        let src = &s.source_function.name;
        let access_control = match self.privileged(s) {
            Some(m) => format!("{src} is restricted by the {m} modifier; an attacker cannot call it"),
            None => format!("{src} has no privileged modifier; any account can call it"),
        };
        let intent = Self::price_read(s) || !s.affected_states.is_empty();
        let economic_intent = if Self::price_read(s) {
            format!("{} reads a manipulable price that reaches {}", src, s.sink_function.name)
        } else if intent {
            format!("the path updates {}", s.affected_states.join(", "))
        } else {
            "no price read and no state affected; no economic benefit to the caller".to_string()
        };
        let mitigation = match Self::cooldown(s) {
            Some(g) => format!("cooldown guard on the path: {g}"),
            None => "none found".to_string(),
        };
        let keep = self.privileged(s).is_none() && intent && Self::cooldown(s).is_none();
        let doc = json!({
            "groupId": s.group_id,
            "accessControl": access_control,
            "economicIntent": economic_intent,
            "mitigation": mitigation,
            "keep": keep,
        });
        let raw = serde_json::to_string_pretty(&doc).expect("json");
        match parse_verdict(&raw, Stage::PathFiltering) {
            Ok(Verdict::Filter(v)) => v,
            _ => unreachable!("offline filter document is always valid"),
        }
    }

    pub fn simulate(&self, s: &GroupSummary) -> SimulationVerdict {
        let vulnerable = Self::price_read(s);
        let source = if s.external_calls.is_empty() { "none".to_string() } else { s.external_calls.join(", ") };
        let mut functions = vec![s.source_function.name.clone()];
        if s.sink_function.name != s.source_function.name {
            functions.push(s.sink_function.name.clone());
        }
        let explanation = if vulnerable {
            format!(
                "{} uses the result of {} without protection; inflating that price with a flash loan inflates the value reaching {} ({}).",
                s.source_function.name,
                source,
                s.sink_function.name,
                s.sink_kinds.join(", ")
            )
        } else {
            "no manipulable price source feeds this path".to_string()
        };
        let doc = json!({
            "groupId": s.group_id,
            "verdict": vulnerable,
            "vulnerableFunctions": if vulnerable { functions } else { vec![] },
            "vulnerablePaths": if vulnerable { vec![s.representative_steps.join(" -> ")] } else { vec![] },
            "attackExplanation": explanation,
            "steps": {
                "priceSource": source,
                "attackScenario": format!("borrow, move the price read by {}, then call {}", source, s.source_function.name),
                "cashOut": format!("value leaves through {} via {}", s.sink_function.name, s.sink_kinds.join(", ")),
                "defenseCheck": "no TWAP, reentrancy guard or cooldown seen on the path",
            },
        });
        let raw = serde_json::to_string_pretty(&doc).expect("json");
        match parse_verdict(&raw, Stage::AttackSimulation) {
            Ok(Verdict::Simulation(v)) => v,
            _ => unreachable!("offline simulation document is always valid"),
        }
    }
}
