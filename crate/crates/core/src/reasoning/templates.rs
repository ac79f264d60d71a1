//! Prompt templates.
//!
//! Each template carries four placeholders that are bound from a group
//! summary. Filter instances for several groups share one header and are
//! concatenated into a single request.

use super::{FilterVerdict, PromptInstance, ReasoningError, Stage};
use crate::grouping::GroupSummary;
use std::collections::BTreeMap;

pub const PLACEHOLDERS: [&str; 4] = ["source function", "sink function", "affected states", "critical operations"];

const FILTER_HEADER: &str = "\
You are a smart contract auditor checking candidate price manipulation paths
against a flash loan attack model. The attacker borrows a large amount in one
transaction, moves an on-chain price (for example the reserves behind a DEX
quote), calls the contract so that the manipulated value reaches the sink,
takes the resulting tokens or ether out, and repays the loan.

For every path group below answer three questions:
(1) Access Control: can an arbitrary account reach the source function, or is
    it restricted to privileged accounts (onlyOwner, onlyAdmin,
    require(msg.sender == owner) and similar)?
(2) Economic Intent: does the path hand the caller something of value whose
    size depends on the manipulated data (a transfer, a balance credit, a
    reward)?
(3) Mitigation: is there a defense on the path, such as a cooldown between
    actions, a time-weighted average price or slippage bounds?
A single disqualifying answer discards the group.
";

const FILTER_INSTANCE: &str = "\
### Group {group}
Source function: <source function>
Sink function: <sink function>
Affected states: <affected states>
Critical operations (low-level external calls and state writes on the path): <critical operations>
Source kinds: {kinds}
Guards seen on the path: {guards}

Source function code:
```solidity
{source_code}
```

Sink function code:
```solidity
{sink_code}
```

Representative path:
{steps}
";

const FILTER_FOOTER: &str = "\
Respond with a JSON array holding one object per group, in any order:
[{\"groupId\": \"<id>\", \"accessControl\": \"...\", \"economicIntent\": \"...\", \"mitigation\": \"...\", \"keep\": true}]
Set keep to false when any answer disqualifies the group, and say why in that answer.
";

const SIMULATION_TEMPLATE: &str = "\
You are a security auditor analyzing a high-potential price manipulation path
that survived rule-based filtering. Work through a step-by-step flash loan
attack analysis.

Source function: <source function>
Sink function: <sink function>
Affected states: <affected states>
Critical operations: <critical operations>
Guards seen on the path: {guards}

Source function code:
```solidity
{source_code}
```

Sink function code:
```solidity
{sink_code}
```

Representative path:
{steps}

Step 1. Identify the specific on-chain price source being manipulated.
        Candidate price sources on this path: {price_hint}.
Step 2. Construct a detailed attack scenario starting from the entry point,
        including how the flash loan moves the price source.
Step 3. Examine the cash-out method: how the attacker turns the affected
        states into tokens or ether.
Step 4. Perform a final defense check: TWAP or reentrancy guards, access
        control, cooldowns or slippage limits that would stop the attack.

Respond with one JSON object:
{\"verdict\": true, \"vulnerableFunctions\": [\"...\"], \"vulnerablePaths\": [\"...\"],
 \"attackExplanation\": \"...\", \"steps\": {\"priceSource\": \"...\", \"attackScenario\": \"...\",
 \"cashOut\": \"...\", \"defenseCheck\": \"...\"}}
";

/// Rough token count (four characters per token).
pub fn estimate_tokens(text: &str) -> usize {
    text.chars().count().div_ceil(4)
}

/// Placeholder tokens still present in `text`.
pub fn unexpanded_placeholders(text: &str) -> Vec<String> {
    PLACEHOLDERS.iter().filter(|p| text.contains(&format!("<{p}>"))).map(|p| p.to_string()).collect()
}

fn bindings(s: &GroupSummary) -> Result<BTreeMap<String, String>, ReasoningError> {
    if s.source_function.name.is_empty() {
        return Err(ReasoningError::SummaryIncomplete(format!("group {} has no source function", s.group_id)));
    }
    if s.sink_function.name.is_empty() {
        return Err(ReasoningError::SummaryIncomplete(format!("group {} has no sink function", s.group_id)));
    }
    let describe = |f: &crate::grouping::FunctionExcerpt| {
        let mut t = format!("{} [{}", f.signature, f.visibility);
        for m in &f.modifiers {
            t.push(' ');
            t.push_str(m);
        }
        t.push(']');
        t
    };
    let mut b = BTreeMap::new();
    b.insert(PLACEHOLDERS[0].to_string(), describe(&s.source_function));
    b.insert(PLACEHOLDERS[1].to_string(), describe(&s.sink_function));
    b.insert(PLACEHOLDERS[2].to_string(), s.affected_states_text());
    b.insert(PLACEHOLDERS[3].to_string(), s.critical_operations.clone());
    Ok(b)
}

fn fill(template: &str, s: &GroupSummary, b: &BTreeMap<String, String>) -> String {
    let code = |f: &crate::grouping::FunctionExcerpt| {
        if f.omitted_lines > 0 {
            format!("{}\n// ... {} more lines not shown", f.excerpt, f.omitted_lines)
        } else {
            f.excerpt.clone()
        }
    };
    let guards = if s.guards.is_empty() { "none".to_string() } else { s.guards.join("; ") };
    let hint = if s.external_calls.is_empty() { "none found statically".to_string() } else { s.external_calls.join(", ") };
    // code goes in last so placeholder-looking text inside it is left alone
    let mut out = template
        .replace("{group}", &s.group_id)
        .replace("{kinds}", &s.source_kinds.join(", "))
        .replace("{guards}", &guards)
        .replace("{price_hint}", &hint)
        .replace("{steps}", &s.representative_steps.iter().map(|l| format!("  {l}")).collect::<Vec<_>>().join("\n"));
    for (k, v) in b {
        out = out.replace(&format!("<{k}>"), v);
    }
    out.replace("{source_code}", &code(&s.source_function)).replace("{sink_code}", &code(&s.sink_function))
}

pub fn render_filter_prompt(summary: &GroupSummary) -> Result<PromptInstance, ReasoningError> {
    let b = bindings(summary)?;
    Ok(PromptInstance {
        stage: Stage::PathFiltering,
        group_id: summary.group_id.clone(),
        group_key: summary.key.clone(),
        rendered_text: fill(FILTER_INSTANCE, summary, &b),
        placeholder_bindings: b,
        summary: summary.clone(),
    })
}

/// Header, the instances, then the response instructions.
pub fn render_filter_batch(instances: &[&PromptInstance]) -> String {
    let mut out = String::from(FILTER_HEADER);
    for p in instances {
        out.push('\n');
        out.push_str(&p.rendered_text);
    }
    out.push('\n');
    out.push_str(FILTER_FOOTER);
    out
}

pub fn render_simulation_prompt(summary: &GroupSummary, filter: &FilterVerdict) -> Result<PromptInstance, ReasoningError> {
    if !filter.keep {
        return Err(ReasoningError::NotFiltered(summary.group_id.clone()));
    }
    let b = bindings(summary)?;
    Ok(PromptInstance {
        stage: Stage::AttackSimulation,
        group_id: summary.group_id.clone(),
        group_key: summary.key.clone(),
        rendered_text: fill(SIMULATION_TEMPLATE, summary, &b),
        placeholder_bindings: b,
        summary: summary.clone(),
    })
}
