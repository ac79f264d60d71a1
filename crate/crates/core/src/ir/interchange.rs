//! JSON interchange for pre-lowered IR.

use super::*;
use serde_json::Value;

pub const SCHEMA_VIOLATION: &str = "schema-violation";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{code} at `{path}`: {message}")]
pub struct ImportError {
    pub code: &'static str,
    /// JSON path to the offending field, e.g. `functions[0].instructions[2].kind`.
    pub path: String,
    pub message: String,
}

fn violation(path: impl Into<String>, message: impl Into<String>) -> ImportError {
    ImportError { code: SCHEMA_VIOLATION, path: path.into(), message: message.into() }
}

pub fn export_ir_json(ir: &ContractIr) -> Value {
    serde_json::to_value(ir).expect("IR serializes")
}

pub fn import_ir_json(text: &str) -> Result<ContractIr, ImportError> {
    let mut de = serde_json::Deserializer::from_str(text);
    let ir: ContractIr = serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let path = e.path().to_string();
        violation(path, e.into_inner().to_string())
    })?;
    validate(&ir)?;
    Ok(ir)
}

pub fn import_ir_value(doc: &Value) -> Result<ContractIr, ImportError> {
    let ir: ContractIr = serde_path_to_error::deserialize(doc.clone()).map_err(|e| {
        let path = e.path().to_string();
        violation(path, e.into_inner().to_string())
    })?;
    validate(&ir)?;
    Ok(ir)
}

fn validate(ir: &ContractIr) -> Result<(), ImportError> {
    if ir.ir_version != IR_VERSION {
        return Err(violation("irVersion", format!("unsupported version {}", ir.ir_version)));
    }
    for (si, v) in ir.state_vars.iter().enumerate() {
        if ir.state_vars[..si].iter().any(|o| o.slot == v.slot) {
            return Err(violation(format!("stateVars[{si}].slot"), "duplicate slot"));
        }
    }
    for (fi, f) in ir.functions.iter().enumerate() {
        let len = f.instructions.len() as u32;
        if len == 0 {
            return Err(violation(format!("functions[{fi}].instructions"), "a function needs at least a Return"));
        }
        for (ii, inst) in f.instructions.iter().enumerate() {
            let at = |field: &str| format!("functions[{fi}].instructions[{ii}].{field}");
            if inst.id != InstId::new(fi as u32, ii as u32) {
                return Err(violation(at("id"), format!("expected {fi}:{ii}, found {}", inst.id)));
            }
            let bad_target = match &inst.kind {
                InstKind::Jump { target } => *target >= len,
                InstKind::CondJump { then, otherwise } => *then >= len || *otherwise >= len,
                _ => false,
            };
            if bad_target {
                return Err(violation(at("kind"), "jump target out of range"));
            }
            if let InstKind::InternalCall { callee, resolved: Some(r), .. } = &inst.kind {
                let ok = ir.functions.get(*r as usize).is_some_and(|g| g.name == *callee);
                if !ok {
                    return Err(violation(at("kind.resolved"), format!("`{callee}` does not name function {r}")));
                }
            }
            if let InstKind::SStore { slot } | InstKind::SLoad { slot } = &inst.kind {
                if ir.state_var_by_slot(slot.base_slot).is_none() {
                    return Err(violation(at("kind.slot.baseSlot"), format!("no state variable at slot {}", slot.base_slot)));
                }
            }
            if matches!(inst.kind, InstKind::SStore { .. }) && inst.operands.is_empty() {
                return Err(violation(at("operands"), "SStore needs a value operand"));
            }
        }
        let last = f.instructions.last().expect("non-empty");
        if !matches!(last.kind, InstKind::Return | InstKind::Revert | InstKind::Jump { .. }) {
            return Err(violation(format!("functions[{fi}].instructions[{}]", len - 1), "function falls off its end"));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn minimal() -> Value {
        json!({
            "irVersion": 1,
            "contract": "M",
            "stateVars": [],
            "functions": [{
                "name": "f", "visibility": "public", "mutability": "nonpayable", "modifiers": [], "params": [],
                "instructions": [{"id": "0:0", "kind": {"type": "return"}, "operands": [], "result": null}]
            }]
        })
    }

    #[test]
    fn minimal_document_imports() {
        let ir = import_ir_value(&minimal()).unwrap();
        assert_eq!(build_icfg(&ir).entry_points.len(), 1);
    }

    #[test]
    fn unknown_kind_names_the_field() {
        let mut doc = minimal();
        doc["functions"][0]["instructions"][0]["kind"]["type"] = json!("teleport");
        let err = import_ir_value(&doc).unwrap_err();
        assert_eq!(err.code, SCHEMA_VIOLATION);
        assert!(err.path.starts_with("functions[0].instructions[0].kind"), "{}", err.path);
    }

    #[test]
    fn wrong_version_rejected() {
        let mut doc = minimal();
        doc["irVersion"] = json!(2);
        assert_eq!(import_ir_value(&doc).unwrap_err().path, "irVersion");
    }
}
