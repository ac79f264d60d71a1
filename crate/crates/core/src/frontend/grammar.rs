//! Machine-readable description of the supported Solidity subset.

use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Category {
    Declaration,
    Type,
    Statement,
    Expression,
}

#[derive(Debug, Clone, Serialize)]
pub struct GrammarEntry {
    pub construct: &'static str,
    pub category: Category,
    pub supported: bool,
    pub note: &'static str,
}

const fn entry(construct: &'static str, category: Category, supported: bool, note: &'static str) -> GrammarEntry {
    GrammarEntry { construct, category, supported, note }
}

use Category::*;

static ENTRIES: &[GrammarEntry] = &[
    entry("pragma directive", Declaration, true, "recorded, not enforced"),
    entry("import directive", Declaration, false, "inputs must be flattened; warning `import-ignored`"),
    entry("contract declaration", Declaration, true, ""),
    entry("abstract contract declaration", Declaration, true, ""),
    entry("interface declaration", Declaration, true, "function bodies absent"),
    entry("library declaration", Declaration, true, "parsed; calls into libraries are opaque"),
    entry("inheritance list", Declaration, true, "base names recorded, bodies not merged"),
    entry("state variable declaration", Declaration, true, "visibility, constant, immutable"),
    entry("struct declaration", Declaration, true, ""),
    entry("enum declaration", Declaration, true, "skipped; enum types behave as user-defined names"),
    entry("event declaration", Declaration, true, "skipped"),
    entry("custom error declaration", Declaration, true, "skipped"),
    entry("function declaration", Declaration, true, "visibility, mutability, virtual, override"),
    entry("constructor", Declaration, true, ""),
    entry("fallback function", Declaration, true, ""),
    entry("receive function", Declaration, true, ""),
    entry("modifier declaration", Declaration, true, "inlined around `_;` during lowering"),
    entry("modifier invocation", Declaration, true, ""),
    entry("modifier with arguments", Declaration, true, ""),
    entry("using for directive", Declaration, false, "warning `unsupported-construct`; directive ignored"),
    entry("user-defined operator", Declaration, false, "warning `unsupported-construct`"),
    entry("elementary type", Type, true, "address, bool, uintN, intN, bytesN, string, bytes"),
    entry("mapping declaration", Type, true, "`mapping(K => V)`, nested allowed"),
    entry("dynamic array", Type, true, ""),
    entry("fixed-size array", Type, true, ""),
    entry("user-defined type name", Type, true, "contracts, interfaces, structs, enums"),
    entry("function type", Type, false, "enclosing item excluded"),
    entry("local variable declaration", Statement, true, "with data location"),
    entry("tuple declaration", Statement, true, "`(uint a, , uint b) = f();`"),
    entry("assignment", Statement, true, ""),
    entry("compound assignment", Statement, true, "+=, -=, *=, /=, %= and bitwise forms"),
    entry("if statement", Statement, true, "with optional else"),
    entry("for loop", Statement, true, ""),
    entry("while loop", Statement, true, ""),
    entry("do-while loop", Statement, false, "enclosing function excluded"),
    entry("require", Statement, true, ""),
    entry("assert", Statement, true, "treated as require"),
    entry("revert", Statement, true, "`revert()`, `revert(\"msg\")`, `revert Err()`"),
    entry("return statement", Statement, true, ""),
    entry("emit statement", Statement, true, "ignored semantically"),
    entry("break", Statement, true, ""),
    entry("continue", Statement, true, ""),
    entry("unchecked block", Statement, true, ""),
    entry("modifier placeholder", Statement, true, "`_;`"),
    entry("inline assembly", Statement, false, "enclosing function excluded"),
    entry("try catch", Statement, false, "enclosing function excluded"),
    entry("arithmetic operators", Expression, true, "+ - * / % **"),
    entry("comparison operators", Expression, true, ""),
    entry("logical operators", Expression, true, "&& || !"),
    entry("bitwise operators", Expression, true, "lowered as opaque binary operations"),
    entry("member access", Expression, true, ""),
    entry("index access", Expression, true, ""),
    entry("array slice", Expression, false, "enclosing function excluded"),
    entry("internal function call", Expression, true, ""),
    entry("external function call", Expression, true, "member call on an interface- or address-typed expression"),
    entry("call options", Expression, true, "`x.call{value: v}(...)`"),
    entry("named call arguments", Expression, false, "enclosing function excluded"),
    entry("new array expression", Expression, true, "`new address[](n)`"),
    entry("inline array literal", Expression, true, ""),
    entry("conditional expression", Expression, true, ""),
    entry("tuple expression", Expression, true, ""),
    entry("type conversion", Expression, true, "`address(x)`, `uint256(x)`, `IERC20(x)`"),
    entry("payable conversion", Expression, true, "`payable(x)`"),
    entry("msg.sender", Expression, true, ""),
    entry("msg.value", Expression, true, ""),
    entry("msg.data", Expression, true, ""),
    entry("block.timestamp", Expression, true, ""),
    entry("address balance", Expression, true, "`address(...).balance`"),
    entry("value transfer", Expression, true, "`.transfer(v)`, `.send(v)`, `.call{value: v}`"),
    entry("delegatecall", Expression, true, "recorded as an opaque external call"),
    entry("ether and time units", Expression, true, "`1 ether`, `2 days`"),
];

pub fn subset_grammar() -> &'static [GrammarEntry] {
    ENTRIES
}

/// `Some(supported)` for a known construct name (case-insensitive), `None` otherwise.
pub fn is_supported(construct: &str) -> Option<bool> {
    let q = construct.trim().to_ascii_lowercase();
    ENTRIES.iter().find(|e| e.construct == q).map(|e| e.supported)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn queries() {
        assert_eq!(is_supported("mapping declaration"), Some(true));
        assert_eq!(is_supported("Inline Assembly"), Some(false));
        assert_eq!(is_supported("modifier with arguments"), Some(true));
        assert_eq!(is_supported("quantum teleport"), None);
    }

    #[test]
    fn names_are_unique() {
        let mut names: Vec<_> = ENTRIES.iter().map(|e| e.construct).collect();
        names.sort();
        names.dedup();
        assert_eq!(names.len(), ENTRIES.len());
    }
}
