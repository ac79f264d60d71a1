//! Canonical pretty-printer. Output re-parses to the same tree (modulo spans).
//! Binary, unary and conditional expressions are always parenthesised.

use super::ast::*;
use std::fmt::Write;

pub fn print_expr(e: &Expr) -> String {
    let mut out = String::new();
    write_expr(&mut out, e);
    out
}

fn write_list(out: &mut String, items: &[Expr]) {
    for (i, a) in items.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        write_expr(out, a);
    }
}

fn write_str_literal(out: &mut String, s: &str) {
    let (prefix, body) = match s.split_once(':') {
        Some((p, b)) if p == "hex" || p == "unicode" => (p, b),
        _ => ("", s),
    };
    // the content is kept raw; choose a quote it does not contain unescaped
    let quote = if has_bare(body, '"') { '\'' } else { '"' };
    let _ = write!(out, "{prefix}{quote}{body}{quote}");
}

fn has_bare(s: &str, q: char) -> bool {
    let mut escaped = false;
    for c in s.chars() {
        if escaped {
            escaped = false;
        } else if c == '\\' {
            escaped = true;
        } else if c == q {
            return true;
        }
    }
    false
}

fn write_expr(out: &mut String, e: &Expr) {
    match &e.kind {
        ExprKind::Number(n) => out.push_str(n),
        ExprKind::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        ExprKind::Str(s) => write_str_literal(out, s),
        ExprKind::Ident(n) | ExprKind::ElementaryType(n) => out.push_str(n),
        ExprKind::Member { base, member } => {
            write_expr(out, base);
            out.push('.');
            out.push_str(&member.name);
        }
        ExprKind::Index { base, index } => {
            write_expr(out, base);
            out.push('[');
            if let Some(i) = index {
                write_expr(out, i);
            }
            out.push(']');
        }
        ExprKind::Call { callee, options, args } => {
            write_expr(out, callee);
            if !options.is_empty() {
                out.push('{');
                for (i, o) in options.iter().enumerate() {
                    if i > 0 {
                        out.push_str(", ");
                    }
                    out.push_str(&o.name.name);
                    out.push_str(": ");
                    write_expr(out, &o.value);
                }
                out.push('}');
            }
            out.push('(');
            write_list(out, args);
            out.push(')');
        }
        ExprKind::New(ty) => {
            out.push_str("new ");
            out.push_str(&ty.render());
        }
        ExprKind::Binary { op, lhs, rhs } => {
            out.push('(');
            write_expr(out, lhs);
            let _ = write!(out, " {} ", op.as_str());
            write_expr(out, rhs);
            out.push(')');
        }
        ExprKind::Unary { op, operand } => {
            out.push('(');
            if op.is_postfix() {
                write_expr(out, operand);
                out.push_str(op.as_str());
            } else {
                out.push_str(op.as_str());
                if *op == UnaryOp::Delete {
                    out.push(' ');
                }
                write_expr(out, operand);
            }
            out.push(')');
        }
        ExprKind::Conditional { cond, then_expr, else_expr } => {
            out.push('(');
            write_expr(out, cond);
            out.push_str(" ? ");
            write_expr(out, then_expr);
            out.push_str(" : ");
            write_expr(out, else_expr);
            out.push(')');
        }
        ExprKind::Tuple { elements, inline_array } => {
            out.push(if *inline_array { '[' } else { '(' });
            for (i, el) in elements.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                if let Some(el) = el {
                    write_expr(out, el);
                }
            }
            out.push(if *inline_array { ']' } else { ')' });
        }
    }
}

fn var_decl(d: &VarDecl) -> String {
    match &d.location {
        Some(loc) => format!("{} {} {}", d.ty.render(), loc, d.name.name),
        None => format!("{} {}", d.ty.render(), d.name.name),
    }
}

fn param(p: &Param) -> String {
    let mut s = p.ty.render();
    if let Some(loc) = &p.location {
        s.push(' ');
        s.push_str(loc);
    }
    if let Some(n) = &p.name {
        s.push(' ');
        s.push_str(&n.name);
    }
    s
}

fn params(ps: &[Param]) -> String {
    ps.iter().map(param).collect::<Vec<_>>().join(", ")
}

fn indent(out: &mut String, level: usize) {
    for _ in 0..level {
        out.push_str("    ");
    }
}

fn write_block(out: &mut String, b: &Block, level: usize) {
    if b.unchecked {
        out.push_str("unchecked ");
    }
    out.push_str("{\n");
    for s in &b.stmts {
        indent(out, level + 1);
        write_stmt(out, s, level + 1);
        out.push('\n');
    }
    indent(out, level);
    out.push('}');
}

/// Statement without the trailing `;` (for `for` updates).
fn simple_stmt(s: &Stmt) -> String {
    match &s.kind {
        StmtKind::Assign { target, op, value } => format!("{} {} {}", print_expr(target), op.as_str(), print_expr(value)),
        StmtKind::Expr(e) => print_expr(e),
        _ => {
            let mut out = String::new();
            write_stmt(&mut out, s, 0);
            out.trim_end_matches(';').to_string()
        }
    }
}

pub fn print_stmt(s: &Stmt) -> String {
    let mut out = String::new();
    write_stmt(&mut out, s, 0);
    out
}

fn write_stmt(out: &mut String, s: &Stmt, level: usize) {
    match &s.kind {
        StmtKind::Block(b) => write_block(out, b, level),
        StmtKind::VarDecl { decl, init } => {
            out.push_str(&var_decl(decl));
            if let Some(i) = init {
                out.push_str(" = ");
                write_expr(out, i);
            }
            out.push(';');
        }
        StmtKind::TupleDecl { decls, init } => {
            let parts: Vec<String> = decls.iter().map(|d| d.as_ref().map(var_decl).unwrap_or_default()).collect();
            let _ = write!(out, "({}) = {};", parts.join(", "), print_expr(init));
        }
        StmtKind::Assign { .. } | StmtKind::Expr(_) => {
            out.push_str(&simple_stmt(s));
            out.push(';');
        }
        StmtKind::If { cond, then_branch, else_branch } => {
            let _ = write!(out, "if ({}) ", print_expr(cond));
            write_stmt(out, then_branch, level);
            if let Some(e) = else_branch {
                out.push_str(" else ");
                write_stmt(out, e, level);
            }
        }
        StmtKind::For { init, cond, update, body } => {
            out.push_str("for (");
            match init {
                Some(i) => write_stmt(out, i, level),
                None => out.push(';'),
            }
            if let Some(c) = cond {
                out.push(' ');
                write_expr(out, c);
            }
            out.push(';');
            if let Some(u) = update {
                out.push(' ');
                out.push_str(&simple_stmt(u));
            }
            out.push_str(") ");
            write_stmt(out, body, level);
        }
        StmtKind::While { cond, body } => {
            let _ = write!(out, "while ({}) ", print_expr(cond));
            write_stmt(out, body, level);
        }
        StmtKind::Return(v) => match v {
            Some(v) => {
                let _ = write!(out, "return {};", print_expr(v));
            }
            None => out.push_str("return;"),
        },
        StmtKind::RevertError { error } => {
            let _ = write!(out, "revert {};", print_expr(error));
        }
        StmtKind::Emit(e) => {
            let _ = write!(out, "emit {};", print_expr(e));
        }
        StmtKind::Break => out.push_str("break;"),
        StmtKind::Continue => out.push_str("continue;"),
        StmtKind::Placeholder => out.push_str("_;"),
    }
}

fn write_function(out: &mut String, f: &FunctionDecl) {
    indent(out, 1);
    match f.kind {
        FunctionKind::Constructor if f.name.name == "constructor" => out.push_str("constructor"),
        FunctionKind::Fallback => out.push_str("fallback"),
        FunctionKind::Receive => out.push_str("receive"),
        _ => {
            let _ = write!(out, "function {}", f.name.name);
        }
    }
    let _ = write!(out, "({}) {}", params(&f.params), f.visibility.as_str());
    if f.mutability != Mutability::Default {
        let _ = write!(out, " {}", f.mutability.as_str());
    }
    if f.is_virtual {
        out.push_str(" virtual");
    }
    if f.is_override {
        out.push_str(" override");
    }
    for m in &f.modifiers {
        let _ = write!(out, " {}", m.name.name);
        if let Some(args) = &m.args {
            out.push('(');
            write_list(out, args);
            out.push(')');
        }
    }
    if !f.returns.is_empty() {
        let _ = write!(out, " returns ({})", params(&f.returns));
    }
    match &f.body {
        Some(b) => {
            out.push(' ');
            write_block(out, b, 1);
        }
        None => out.push(';'),
    }
    out.push('\n');
}

pub fn print_contract(c: &ContractDecl) -> String {
    let mut out = String::new();
    let _ = write!(out, "{} {}", c.kind.keyword(), c.name.name);
    if !c.base_contracts.is_empty() {
        let names: Vec<&str> = c.base_contracts.iter().map(|b| b.name.as_str()).collect();
        let _ = write!(out, " is {}", names.join(", "));
    }
    out.push_str(" {\n");
    for s in &c.structs {
        indent(&mut out, 1);
        let _ = writeln!(out, "struct {} {{", s.name.name);
        for f in &s.fields {
            indent(&mut out, 2);
            let _ = writeln!(out, "{};", param(f));
        }
        indent(&mut out, 1);
        out.push_str("}\n");
    }
    for v in &c.state_vars {
        indent(&mut out, 1);
        out.push_str(&v.ty.render());
        if let Some(vis) = v.visibility {
            let _ = write!(out, " {}", vis.as_str());
        }
        match v.mutability {
            VarMutability::Constant => out.push_str(" constant"),
            VarMutability::Immutable => out.push_str(" immutable"),
            VarMutability::Mutable => {}
        }
        let _ = write!(out, " {}", v.name.name);
        if let Some(init) = &v.init {
            let _ = write!(out, " = {}", print_expr(init));
        }
        out.push_str(";\n");
    }
    for m in &c.modifiers {
        indent(&mut out, 1);
        let _ = write!(out, "modifier {}({})", m.name.name, params(&m.params));
        match &m.body {
            Some(b) => {
                out.push(' ');
                write_block(&mut out, b, 1);
            }
            None => out.push(';'),
        }
        out.push('\n');
    }
    for f in &c.functions {
        write_function(&mut out, f);
    }
    out.push_str("}\n");
    out
}

pub fn print_source_unit(u: &SourceUnit) -> String {
    let mut out = String::new();
    for p in &u.pragmas {
        let _ = writeln!(out, "pragma {p};");
    }
    for c in &u.contracts {
        out.push('\n');
        out.push_str(&print_contract(c));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::parser::parse_expression;

    #[test]
    fn binary_is_parenthesised() {
        let e = parse_expression("a + b * c").unwrap();
        assert_eq!(print_expr(&e), "(a + (b * c))");
    }

    #[test]
    fn call_options_round_trip() {
        let e = parse_expression("to.call{value: amt}(\"\")").unwrap();
        assert_eq!(print_expr(&e), "to.call{value: amt}(\"\")");
    }

    #[test]
    fn tuple_holes() {
        let e = parse_expression("(a, , b)").unwrap();
        assert_eq!(print_expr(&e), "(a, , b)");
    }
}
