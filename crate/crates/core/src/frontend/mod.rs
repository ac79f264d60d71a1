//! Solidity subset frontend: lexer, parser, printer and the subset description.

pub mod ast;
pub mod grammar;
pub mod lexer;
pub mod parser;
pub mod printer;

pub use ast::*;
pub use grammar::{is_supported, subset_grammar, GrammarEntry};
pub use parser::{codes, parse_expression, parse_source, parse_statement};
pub use printer::{print_expr, print_source_unit, print_stmt};

use serde::Serialize;
use serde_json::{json, Value};

/// JSON of `value` with every `span` field removed, for structural comparison.
pub fn structural_json<T: Serialize>(value: &T) -> Value {
    fn strip(v: &mut Value) {
        match v {
            Value::Object(map) => {
                map.remove("span");
                map.values_mut().for_each(strip);
            }
            Value::Array(items) => items.iter_mut().for_each(strip),
            _ => {}
        }
    }
    let mut v = serde_json::to_value(value).unwrap_or(Value::Null);
    strip(&mut v);
    v
}

fn node(kind: &str, span: Span, label: Option<String>, children: Vec<Value>) -> Value {
    let mut n = json!({ "kind": kind, "span": [span.start, span.end], "children": children });
    if let Some(l) = label {
        n["label"] = Value::String(l);
    }
    n
}

fn dump_type(t: &TypeName) -> Value {
    node("type", t.span(), Some(t.render()), Vec::new())
}

fn dump_expr(e: &Expr) -> Value {
    let (label, children): (Option<String>, Vec<Value>) = match &e.kind {
        ExprKind::Number(n) => (Some(n.clone()), vec![]),
        ExprKind::Bool(b) => (Some(b.to_string()), vec![]),
        ExprKind::Str(s) => (Some(s.clone()), vec![]),
        ExprKind::Ident(n) | ExprKind::ElementaryType(n) => (Some(n.clone()), vec![]),
        ExprKind::Member { base, member } => (Some(member.name.clone()), vec![dump_expr(base)]),
        ExprKind::Index { base, index } => (None, std::iter::once(base).chain(index).map(|e| dump_expr(e)).collect()),
        ExprKind::Call { callee, options, args } => {
            let mut c = vec![dump_expr(callee)];
            c.extend(options.iter().map(|o| node("callOption", o.name.span, Some(o.name.name.clone()), vec![dump_expr(&o.value)])));
            c.extend(args.iter().map(dump_expr));
            (None, c)
        }
        ExprKind::New(t) => (None, vec![dump_type(t)]),
        ExprKind::Binary { op, lhs, rhs } => (Some(op.as_str().into()), vec![dump_expr(lhs), dump_expr(rhs)]),
        ExprKind::Unary { op, operand } => (Some(op.as_str().into()), vec![dump_expr(operand)]),
        ExprKind::Conditional { cond, then_expr, else_expr } => (None, vec![dump_expr(cond), dump_expr(then_expr), dump_expr(else_expr)]),
        ExprKind::Tuple { elements, .. } => (None, elements.iter().flatten().map(dump_expr).collect()),
    };
    node(e.kind.name(), e.span, label, children)
}

fn dump_block(b: &Block) -> Value {
    node("block", b.span, None, b.stmts.iter().map(dump_stmt).collect())
}

fn dump_stmt(s: &Stmt) -> Value {
    let (label, children): (Option<String>, Vec<Value>) = match &s.kind {
        StmtKind::Block(b) => (None, vec![dump_block(b)]),
        StmtKind::VarDecl { decl, init } => {
            let mut c = vec![dump_type(&decl.ty)];
            c.extend(init.iter().map(dump_expr));
            (Some(decl.name.name.clone()), c)
        }
        StmtKind::TupleDecl { decls, init } => {
            let mut c: Vec<Value> =
                decls.iter().flatten().map(|d| node("varDecl", d.name.span, Some(d.name.name.clone()), vec![dump_type(&d.ty)])).collect();
            c.push(dump_expr(init));
            (None, c)
        }
        StmtKind::Assign { target, op, value } => (Some(op.as_str().into()), vec![dump_expr(target), dump_expr(value)]),
        StmtKind::If { cond, then_branch, else_branch } => {
            let mut c = vec![dump_expr(cond), dump_stmt(then_branch)];
            c.extend(else_branch.iter().map(|e| dump_stmt(e)));
            (None, c)
        }
        StmtKind::For { init, cond, update, body } => {
            let mut c = Vec::new();
            c.extend(init.iter().map(|s| dump_stmt(s)));
            c.extend(cond.iter().map(dump_expr));
            c.extend(update.iter().map(|s| dump_stmt(s)));
            c.push(dump_stmt(body));
            (None, c)
        }
        StmtKind::While { cond, body } => (None, vec![dump_expr(cond), dump_stmt(body)]),
        StmtKind::Return(v) => (None, v.iter().map(dump_expr).collect()),
        StmtKind::RevertError { error } | StmtKind::Emit(error) | StmtKind::Expr(error) => (None, vec![dump_expr(error)]),
        StmtKind::Break | StmtKind::Continue | StmtKind::Placeholder => (None, vec![]),
    };
    node(s.kind.name(), s.span, label, children)
}

fn dump_params(kind: &str, ps: &[Param]) -> Vec<Value> {
    ps.iter().map(|p| node(kind, p.span, p.name.as_ref().map(|n| n.name.clone()), vec![dump_type(&p.ty)])).collect()
}

/// Debug dump: every node as `{kind, span, label?, children}`.
pub fn ast_dump(unit: &SourceUnit) -> Value {
    let contracts: Vec<Value> = unit
        .contracts
        .iter()
        .map(|c| {
            let mut children = Vec::new();
            for v in &c.state_vars {
                let mut ch = vec![dump_type(&v.ty)];
                ch.extend(v.init.iter().map(dump_expr));
                children.push(node("stateVar", v.span, Some(v.name.name.clone()), ch));
            }
            for s in &c.structs {
                children.push(node("struct", s.span, Some(s.name.name.clone()), dump_params("field", &s.fields)));
            }
            for m in &c.modifiers {
                let mut ch = dump_params("param", &m.params);
                ch.extend(m.body.iter().map(dump_block));
                children.push(node("modifier", m.span, Some(m.name.name.clone()), ch));
            }
            for f in &c.functions {
                let mut ch = dump_params("param", &f.params);
                ch.extend(dump_params("return", &f.returns));
                for m in &f.modifiers {
                    let args = m.args.iter().flatten().map(dump_expr).collect();
                    ch.push(node("modifierInvocation", m.span, Some(m.name.name.clone()), args));
                }
                ch.extend(f.body.iter().map(dump_block));
                children.push(node("function", f.span, Some(f.name.name.clone()), ch));
            }
            node(c.kind.keyword(), c.span, Some(c.name.name.clone()), children)
        })
        .collect();
    json!({
        "kind": "sourceUnit",
        "path": unit.path,
        "pragmas": unit.pragmas,
        "children": contracts,
        "diagnostics": unit.diagnostics,
    })
}
