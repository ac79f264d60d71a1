//! Pulling structured verdicts out of free-form model responses.

use super::{FilterAnswers, FilterVerdict, ReasoningError, SimulationSteps, SimulationVerdict, Stage, Verdict};
use serde_json::{Map, Value};

/// Every JSON object or array embedded in `raw`, in order of appearance.
/// Prose, code fences and trailing junk around them are skipped.
pub fn extract_documents(raw: &str) -> Vec<Value> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < raw.len() {
        let c = raw.as_bytes()[i];
        if c == b'{' || c == b'[' {
            let mut stream = serde_json::Deserializer::from_str(&raw[i..]).into_iter::<Value>();
            if let Some(Ok(v)) = stream.next() {
                if v.is_object() || v.is_array() {
                    out.push(v);
                    i += stream.byte_offset();
                    continue;
                }
            }
        }
        i += 1;
    }
    out
}

/// Objects in document order; arrays contribute their object elements.
fn objects(raw: &str) -> Vec<Map<String, Value>> {
    let mut out = Vec::new();
    for d in extract_documents(raw) {
        match d {
            Value::Object(m) => out.push(m),
            Value::Array(xs) => out.extend(xs.into_iter().filter_map(|x| match x {
                Value::Object(m) => Some(m),
                _ => None,
            })),
            _ => {}
        }
    }
    out
}

fn get<'a>(m: &'a Map<String, Value>, names: &[&str]) -> Option<&'a Value> {
    for n in names {
        if let Some(v) = m.get(*n) {
            return Some(v);
        }
    }
    // tolerate snake_case and other spellings
    let squash = |s: &str| s.chars().filter(|c| c.is_ascii_alphanumeric()).collect::<String>().to_ascii_lowercase();
    let want: Vec<String> = names.iter().map(|n| squash(n)).collect();
    m.iter().find(|(k, _)| want.contains(&squash(k))).map(|(_, v)| v)
}

fn boolean(v: &Value) -> Option<bool> {
    match v {
        Value::Bool(b) => Some(*b),
        Value::Number(n) => n.as_i64().and_then(|i| match i {
            0 => Some(false),
            1 => Some(true),
            _ => None,
        }),
        Value::String(s) => match s.trim().to_ascii_lowercase().as_str() {
            "true" | "yes" | "keep" | "vulnerable" | "1" => Some(true),
            "false" | "no" | "discard" | "safe" | "not vulnerable" | "0" => Some(false),
            _ => None,
        },
        _ => None,
    }
}

fn text(v: Option<&Value>) -> Option<String> {
    match v? {
        Value::String(s) => Some(s.clone()),
        Value::Null => Some(String::new()),
        other => Some(other.to_string()),
    }
}

fn strings(v: Option<&Value>) -> Option<Vec<String>> {
    match v? {
        Value::Array(xs) => Some(
            xs.iter()
                .map(|x| match x {
                    Value::String(s) => s.clone(),
                    Value::Array(parts) => parts
                        .iter()
                        .map(|p| p.as_str().map(str::to_string).unwrap_or_else(|| p.to_string()))
                        .collect::<Vec<_>>()
                        .join(" -> "),
                    other => other.to_string(),
                })
                .collect(),
        ),
        Value::String(s) if s.is_empty() => Some(vec![]),
        Value::String(s) => Some(vec![s.clone()]),
        _ => None,
    }
}

fn filter_from(m: &Map<String, Value>, raw: &str) -> Option<FilterVerdict> {
    let keep = boolean(get(m, &["keep", "verdict", "decision"])?)?;
    let nested = get(m, &["answers"]).and_then(Value::as_object);
    let src = nested.unwrap_or(m);
    let answers = FilterAnswers {
        access_control: text(get(src, &["accessControl"]))?,
        economic_intent: text(get(src, &["economicIntent"]))?,
        mitigation: text(get(src, &["mitigation"]))?,
    };
    let named = [&answers.access_control, &answers.economic_intent, &answers.mitigation];
    if !keep && named.iter().all(|a| a.trim().is_empty()) {
        return None;
    }
    Some(FilterVerdict {
        group_id: text(get(m, &["groupId"])).unwrap_or_default(),
        keep,
        answers,
        raw_response: raw.to_string(),
        undetermined: false,
    })
}

fn simulation_from(m: &Map<String, Value>, raw: &str) -> Option<SimulationVerdict> {
    let vulnerable = boolean(get(m, &["verdict", "vulnerable"])?)?;
    let vulnerable_functions = strings(get(m, &["vulnerableFunctions"]))?;
    let attack_explanation = text(get(m, &["attackExplanation", "explanation"]))?;
    if vulnerable && (vulnerable_functions.is_empty() || attack_explanation.trim().is_empty()) {
        return None;
    }
    let steps = match get(m, &["steps"]).and_then(Value::as_object) {
        Some(s) => SimulationSteps {
            price_source: text(get(s, &["priceSource"])).unwrap_or_default(),
            attack_scenario: text(get(s, &["attackScenario"])).unwrap_or_default(),
            cash_out: text(get(s, &["cashOut"])).unwrap_or_default(),
            defense_check: text(get(s, &["defenseCheck"])).unwrap_or_default(),
        },
        None => SimulationSteps::default(),
    };
    Some(SimulationVerdict {
        group_id: text(get(m, &["groupId"])).unwrap_or_default(),
        vulnerable,
        vulnerable_functions,
        vulnerable_paths: strings(get(m, &["vulnerablePaths"])).unwrap_or_default(),
        attack_explanation,
        steps,
        raw_response: raw.to_string(),
        undetermined: false,
    })
}

/// The first document in `raw` that is a valid verdict for `stage`.
pub fn parse_verdict(raw: &str, stage: Stage) -> Result<Verdict, ReasoningError> {
    for m in objects(raw) {
        let v = match stage {
            Stage::PathFiltering => filter_from(&m, raw).map(Verdict::Filter),
            Stage::AttackSimulation => simulation_from(&m, raw).map(Verdict::Simulation),
        };
        if let Some(v) = v {
            return Ok(v);
        }
    }
    let head: String = raw.chars().take(80).collect();
    Err(ReasoningError::UnparseableResponse(format!("no valid {stage:?} document in response starting {head:?}")))
}

/// Filter verdicts for a batch, matched to `ids` by `groupId`. A batch of
/// one also accepts a document without an id. Groups with no valid
/// document get `None`.
pub fn parse_filter_batch(raw: &str, ids: &[String]) -> Vec<Option<FilterVerdict>> {
    let mut out: Vec<Option<FilterVerdict>> = vec![None; ids.len()];
    for m in objects(raw) {
        let Some(mut v) = filter_from(&m, raw) else { continue };
        let slot = match ids.iter().position(|id| *id == v.group_id) {
            Some(i) => i,
            None if ids.len() == 1 && v.group_id.is_empty() => 0,
            None => continue,
        };
        if out[slot].is_none() {
            v.group_id = ids[slot].clone();
            out[slot] = Some(v);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sim(raw: &str) -> SimulationVerdict {
        match parse_verdict(raw, Stage::AttackSimulation).unwrap() {
            Verdict::Simulation(v) => v,
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn fenced_document_with_true_verdict() {
        let raw = "Here is my analysis.\n```json\n{\"verdict\": true, \"vulnerableFunctions\": [\"burnToHolder\"], \"attackExplanation\": \"spot price\"}\n```\nDone.";
        let v = sim(raw);
        assert!(v.vulnerable);
        assert_eq!(v.vulnerable_functions, vec!["burnToHolder"]);
    }

    #[test]
    fn first_valid_document_wins() {
        let raw = r#"{"verdict": "no", "vulnerableFunctions": [], "attackExplanation": ""} then {"verdict": true, "vulnerableFunctions": ["f"], "attackExplanation": "x"}"#;
        assert!(!sim(raw).vulnerable);
        // an invalid first document is skipped
        let raw = r#"{"note": 1} {"verdict": true, "vulnerableFunctions": ["f"], "attackExplanation": "x"}"#;
        assert!(sim(raw).vulnerable);
    }

    #[test]
    fn prose_only_is_unparseable() {
        let e = parse_verdict("I think it is fine.", Stage::PathFiltering).unwrap_err();
        assert_eq!(e.code(), "unparseable-response");
    }

    #[test]
    fn booleans_are_normalized() {
        let raw = r#"{"keep": "No", "accessControl": "onlyOwner", "economicIntent": "", "mitigation": ""}"#;
        let Verdict::Filter(v) = parse_verdict(raw, Stage::PathFiltering).unwrap() else { panic!() };
        assert!(!v.keep);
        assert_eq!(v.answers.access_control, "onlyOwner");
    }

    #[test]
    fn discard_without_a_reason_is_rejected() {
        let raw = r#"{"keep": false, "accessControl": "", "economicIntent": "", "mitigation": ""}"#;
        assert!(parse_verdict(raw, Stage::PathFiltering).is_err());
    }

    #[test]
    fn vulnerable_without_functions_is_rejected() {
        let raw = r#"{"verdict": true, "vulnerableFunctions": [], "attackExplanation": "x"}"#;
        assert!(parse_verdict(raw, Stage::AttackSimulation).is_err());
    }

    #[test]
    fn batch_matches_by_id() {
        let raw = r#"[{"groupId": "G-b", "keep": true, "accessControl": "open", "economicIntent": "yes", "mitigation": "none"},
                      {"groupId": "G-x", "keep": true, "accessControl": "", "economicIntent": "", "mitigation": ""}]"#;
        let ids = vec!["G-a".to_string(), "G-b".to_string()];
        let got = parse_filter_batch(raw, &ids);
        assert!(got[0].is_none());
        assert_eq!(got[1].as_ref().unwrap().group_id, "G-b");
    }

    #[test]
    fn nested_answers_and_snake_case() {
        let raw = r#"{"group_id": "G-a", "keep": true, "answers": {"access_control": "open", "economic_intent": "credit", "mitigation": "none"}}"#;
        let got = parse_filter_batch(raw, &["G-a".to_string()]);
        assert_eq!(got[0].as_ref().unwrap().answers.economic_intent, "credit");
    }
}
