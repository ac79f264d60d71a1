//! AST to IR lowering.

use super::*;
use crate::frontend::{
    AssignOp, BinaryOp, Block, ContractDecl, ContractKind, Diagnostic, Expr, ExprKind, FunctionDecl, FunctionKind, ModifierDecl,
    SourceUnit, Span, Stmt, StmtKind, TypeName, UnaryOp, VarMutability,
};
use std::collections::{BTreeMap, BTreeSet, HashMap};

pub const LOWERING_UNSUPPORTED: &str = "lowering-unsupported";

const PATCH: u32 = u32::MAX - 2;

#[derive(Debug)]
struct Unsupported {
    span: Span,
    what: String,
}

type LResult<T> = Result<T, Unsupported>;

fn unsupported<T>(span: Span, what: impl Into<String>) -> LResult<T> {
    Err(Unsupported { span, what: what.into() })
}

/// Declarations visible to the lowering of one contract.
struct Scope<'a> {
    unit: Option<&'a SourceUnit>,
    contract: &'a ContractDecl,
    /// name -> (slot, declared type) for storage variables
    slots: HashMap<String, (u32, TypeName)>,
    constants: HashMap<String, Option<Expr>>,
    /// function name -> (index, arity), excluding functions that failed to lower
    functions: HashMap<String, Vec<(u32, usize)>>,
}

impl<'a> Scope<'a> {
    fn type_decl(&self, name: &str) -> Option<&'a ContractDecl> {
        if self.contract.name.name == name {
            return Some(self.contract);
        }
        self.unit.and_then(|u| u.contract(name))
    }

    fn is_type_name(&self, name: &str) -> bool {
        self.type_decl(name).is_some()
            || self.contract.structs.iter().any(|s| s.name.name == name)
            || name.chars().next().is_some_and(|c| c.is_ascii_uppercase())
    }

    fn is_library(&self, name: &str) -> bool {
        self.type_decl(name).is_some_and(|c| c.kind == ContractKind::Library)
    }

    fn struct_field(&self, struct_name: &str, field: &str) -> Option<TypeName> {
        let s = self.contract.structs.iter().find(|s| s.name.name == struct_name)?;
        s.fields.iter().find(|f| f.name.as_ref().is_some_and(|n| n.name == field)).map(|f| f.ty.clone())
    }

    fn resolve(&self, name: &str, arity: usize) -> Option<u32> {
        let cands = self.functions.get(name)?;
        cands.iter().find(|(_, a)| *a == arity).or(cands.first()).map(|(i, _)| *i)
    }
}

#[derive(Clone)]
struct Place {
    slot: SlotId,
    keys: Vec<ValueRef>,
    ty: Option<TypeName>,
}

type Env = BTreeMap<String, ValueRef>;

struct LoopCtx {
    breaks: Vec<(u32, Env)>,
    continues: Vec<(u32, Env)>,
}

struct FnLowerer<'s, 'a> {
    scope: &'s Scope<'a>,
    fidx: u32,
    insts: Vec<Instruction>,
    env: Env,
    versions: HashMap<String, u32>,
    types: HashMap<String, TypeName>,
    storage_ptrs: HashMap<String, Place>,
    tx_temps: HashMap<ValueRef, TxProp>,
    temps: u32,
    loops: Vec<LoopCtx>,
    terminated: bool,
    modifiers: Vec<(Option<&'a ModifierDecl>, Option<Vec<Expr>>)>,
    placeholder_level: Vec<usize>,
    body: Option<&'a Block>,
    named_returns: Vec<Option<String>>,
}

fn binop(op: BinaryOp) -> Option<BinOpKind> {
    Some(match op {
        BinaryOp::Add => BinOpKind::Add,
        BinaryOp::Sub => BinOpKind::Sub,
        BinaryOp::Mul => BinOpKind::Mul,
        BinaryOp::Div => BinOpKind::Div,
        BinaryOp::Rem => BinOpKind::Rem,
        BinaryOp::Lt => BinOpKind::Lt,
        BinaryOp::Le => BinOpKind::Le,
        BinaryOp::Gt => BinOpKind::Gt,
        BinaryOp::Ge => BinOpKind::Ge,
        BinaryOp::Eq => BinOpKind::Eq,
        BinaryOp::Ne => BinOpKind::Ne,
        BinaryOp::And => BinOpKind::And,
        BinaryOp::Or => BinOpKind::Or,
        _ => return None,
    })
}

fn wrapper_op(name: &str) -> Option<BinOpKind> {
    Some(match name {
        "add" => BinOpKind::Add,
        "sub" => BinOpKind::Sub,
        "mul" => BinOpKind::Mul,
        "div" => BinOpKind::Div,
        "mod" => BinOpKind::Rem,
        _ => return None,
    })
}

const BUILTIN_FUNCTIONS: &[&str] =
    &["keccak256", "sha256", "ripemd160", "ecrecover", "addmod", "mulmod", "blockhash", "gasleft", "type", "selfdestruct"];

fn is_int_type(t: &TypeName) -> bool {
    matches!(t, TypeName::Elementary { name, .. } if name.starts_with("uint") || name.starts_with("int"))
}

impl<'s, 'a> FnLowerer<'s, 'a> {
    fn emit(&mut self, kind: InstKind, operands: Vec<ValueRef>, result: Option<ValueRef>, span: Span) -> u32 {
        let idx = self.insts.len() as u32;
        self.insts.push(Instruction { id: InstId::new(self.fidx, idx), kind, operands, result, span });
        idx
    }

    fn temp(&mut self) -> ValueRef {
        self.temps += 1;
        ValueRef::Local { func: self.fidx, name: format!("$t{}", self.temps), version: 0 }
    }

    fn fresh(&mut self, name: &str) -> ValueRef {
        let v = self.versions.entry(name.to_string()).or_insert(0);
        *v += 1;
        ValueRef::Local { func: self.fidx, name: name.to_string(), version: *v }
    }

    fn emit_value(&mut self, kind: InstKind, operands: Vec<ValueRef>, span: Span) -> ValueRef {
        let t = self.temp();
        self.emit(kind, operands, Some(t.clone()), span);
        t
    }

    /// Bind `name` to `value`; a temp produced by the last instruction is renamed instead of copied.
    fn define(&mut self, name: &str, value: ValueRef, span: Span) {
        let target = self.fresh(name);
        let is_temp = matches!(&value, ValueRef::Local { name, .. } if name.starts_with("$t"));
        match self.insts.last_mut() {
            Some(last) if is_temp && last.result.as_ref() == Some(&value) => last.result = Some(target.clone()),
            _ => {
                self.emit(InstKind::Assign(AssignForm::Copy), vec![value], Some(target.clone()), span);
            }
        }
        self.env.insert(name.to_string(), target);
    }

    fn abs_key(&self, v: &ValueRef) -> AbsKey {
        match v {
            ValueRef::Const { value } => AbsKey::Const(value.clone()),
            ValueRef::TxProperty { prop } => AbsKey::Tx(*prop),
            other => match self.tx_temps.get(other) {
                Some(p) => AbsKey::Tx(*p),
                None => AbsKey::Any,
            },
        }
    }

    fn is_local(&self, name: &str) -> bool {
        self.env.contains_key(name) || self.storage_ptrs.contains_key(name)
    }

    // ---- types ----

    fn type_of(&self, e: &Expr) -> Option<TypeName> {
        match &e.kind {
            ExprKind::Ident(n) => {
                if let Some(p) = self.storage_ptrs.get(n) {
                    return p.ty.clone();
                }
                if self.env.contains_key(n) {
                    return self.types.get(n).cloned();
                }
                self.scope.slots.get(n).map(|(_, t)| t.clone())
            }
            ExprKind::Index { base, .. } => match self.type_of(base)? {
                TypeName::Mapping { value, .. } => Some(*value),
                TypeName::Array { element, .. } => Some(*element),
                _ => None,
            },
            ExprKind::Member { base, member } => {
                let bt = self.type_of(base)?;
                let sname = bt.user_defined()?;
                self.scope.struct_field(sname, &member.name)
            }
            ExprKind::Call { callee, args, .. } if args.len() == 1 => match &callee.kind {
                ExprKind::ElementaryType(n) => Some(TypeName::Elementary { name: n.clone(), span: callee.span }),
                ExprKind::Ident(n) if self.scope.is_type_name(n) && !self.scope.functions.contains_key(n) => {
                    Some(TypeName::UserDefined { name: n.clone(), span: callee.span })
                }
                _ => None,
            },
            _ => None,
        }
    }

    // ---- storage places ----

    fn place(&mut self, e: &Expr) -> LResult<Option<Place>> {
        match &e.kind {
            ExprKind::Ident(n) => {
                if let Some(p) = self.storage_ptrs.get(n) {
                    return Ok(Some(p.clone()));
                }
                if self.env.contains_key(n) {
                    return Ok(None);
                }
                Ok(self.scope.slots.get(n).map(|(slot, ty)| Place {
                    slot: SlotId::base(*slot, ty.is_mapping()),
                    keys: Vec::new(),
                    ty: Some(ty.clone()),
                }))
            }
            ExprKind::Index { base, index: Some(index) } => {
                let Some(mut p) = self.place(base)? else { return Ok(None) };
                let k = self.expr(index)?;
                let abs = self.abs_key(&k);
                let (elem, ty) = match p.ty.take() {
                    Some(TypeName::Mapping { value, .. }) => (PathElem::MappingKey(abs), Some(*value)),
                    Some(TypeName::Array { element, .. }) => (PathElem::ArrayIndex(abs), Some(*element)),
                    _ => (PathElem::ArrayIndex(abs), None),
                };
                p.slot.access_path.push(elem);
                p.keys.push(k);
                p.ty = ty;
                Ok(Some(p))
            }
            ExprKind::Member { base, member } => {
                let Some(mut p) = self.place(base)? else { return Ok(None) };
                let field_ty = p.ty.as_ref().and_then(|t| t.user_defined()).and_then(|s| self.scope.struct_field(s, &member.name));
                if member.name != "length" && field_ty.is_none() {
                    // e.g. `token.balanceOf` on a storage contract reference: not a place
                    if p.ty.as_ref().is_some_and(|t| matches!(t, TypeName::Elementary { .. }))
                        || p.ty
                            .as_ref()
                            .and_then(|t| t.user_defined())
                            .is_some_and(|s| self.scope.contract.structs.iter().all(|st| st.name.name != s))
                    {
                        return Ok(None);
                    }
                }
                p.slot.access_path.push(PathElem::Member(member.name.clone()));
                p.ty = field_ty;
                Ok(Some(p))
            }
            _ => Ok(None),
        }
    }

    fn sload(&mut self, p: Place, span: Span) -> ValueRef {
        self.emit_value(InstKind::SLoad { slot: p.slot }, p.keys, span)
    }

    fn sstore(&mut self, p: Place, value: ValueRef, span: Span) {
        let mut ops = vec![value];
        ops.extend(p.keys);
        self.emit(InstKind::SStore { slot: p.slot }, ops, None, span);
    }

    /// Does this expression denote storage (without lowering anything)?
    fn is_storage_expr(&self, e: &Expr) -> bool {
        match &e.kind {
            ExprKind::Ident(n) => self.storage_ptrs.contains_key(n) || (!self.env.contains_key(n) && self.scope.slots.contains_key(n)),
            ExprKind::Index { base, index: Some(_) } => self.is_storage_expr(base),
            ExprKind::Member { base, member } => {
                if !self.is_storage_expr(base) {
                    return false;
                }
                let bt = self.type_of(base);
                member.name == "length"
                    || bt.as_ref().and_then(|t| t.user_defined()).is_some_and(|s| self.scope.struct_field(s, &member.name).is_some())
            }
            _ => false,
        }
    }

    // ---- expressions ----

    fn expr(&mut self, e: &Expr) -> LResult<ValueRef> {
        let span = e.span;
        match &e.kind {
            ExprKind::Number(n) => Ok(ValueRef::constant(n.clone())),
            ExprKind::Bool(b) => Ok(ValueRef::constant(b.to_string())),
            ExprKind::Str(s) => Ok(ValueRef::constant(format!("\"{s}\""))),
            ExprKind::ElementaryType(n) => Ok(ValueRef::constant(n.clone())),
            ExprKind::Ident(n) => {
                if let Some(v) = self.env.get(n) {
                    return Ok(v.clone());
                }
                if n == "now" {
                    return Ok(self.tx(TxProp::Timestamp, span));
                }
                if self.is_storage_expr(e) {
                    let p = self.place(e)?.expect("storage ident");
                    return Ok(self.sload(p, span));
                }
                if let Some(init) = self.scope.constants.get(n) {
                    return match init.as_ref().map(|i| &i.kind) {
                        Some(ExprKind::Number(v)) => Ok(ValueRef::constant(v.clone())),
                        Some(ExprKind::Bool(b)) => Ok(ValueRef::constant(b.to_string())),
                        Some(ExprKind::Str(s)) => Ok(ValueRef::constant(format!("\"{s}\""))),
                        _ => Ok(ValueRef::constant(n.clone())),
                    };
                }
                Ok(ValueRef::constant(n.clone()))
            }
            ExprKind::Member { base, member } => {
                if let ExprKind::Ident(b) = &base.kind {
                    if !self.is_local(b) {
                        if let Some(p) = TxProp::from_member(b, &member.name) {
                            return Ok(self.tx(p, span));
                        }
                    }
                }
                if self.is_storage_expr(e) {
                    let p = self.place(e)?.expect("storage member");
                    return Ok(self.sload(p, span));
                }
                let b = self.expr(base)?;
                Ok(self.emit_value(InstKind::Assign(AssignForm::Member { name: member.name.clone() }), vec![b], span))
            }
            ExprKind::Index { base, index } => {
                let Some(index) = index else { return unsupported(span, "index expression without index") };
                if self.is_storage_expr(e) {
                    let p = self.place(e)?.expect("storage index");
                    return Ok(self.sload(p, span));
                }
                let b = self.expr(base)?;
                let i = self.expr(index)?;
                Ok(self.emit_value(InstKind::Assign(AssignForm::Index), vec![b, i], span))
            }
            ExprKind::Call { .. } => {
                let rets = self.call(e)?;
                Ok(rets.into_iter().next().unwrap_or_else(|| ValueRef::constant("()")))
            }
            ExprKind::New(ty) => Ok(ValueRef::constant(format!("new {}", ty.render()))),
            ExprKind::Binary { op, lhs, rhs } => {
                let l = self.expr(lhs)?;
                let r = self.expr(rhs)?;
                match binop(*op) {
                    Some(k) => Ok(self.emit_value(InstKind::BinOp { op: k }, vec![l, r], span)),
                    None => Ok(self.emit_value(InstKind::Assign(AssignForm::Builtin { name: op.as_str().to_string() }), vec![l, r], span)),
                }
            }
            ExprKind::Unary { op, operand } => match op {
                UnaryOp::Not | UnaryOp::Neg | UnaryOp::BitNot => {
                    let v = self.expr(operand)?;
                    Ok(self.emit_value(InstKind::Assign(AssignForm::Unary { op: op.as_str().to_string() }), vec![v], span))
                }
                UnaryOp::PreInc | UnaryOp::PreDec | UnaryOp::PostInc | UnaryOp::PostDec => {
                    let k = if matches!(op, UnaryOp::PreInc | UnaryOp::PostInc) { BinOpKind::Add } else { BinOpKind::Sub };
                    let (old, new) = self.update(operand, k, ValueRef::constant("1"), span)?;
                    Ok(if op.is_postfix() { old } else { new })
                }
                UnaryOp::Delete => {
                    self.assign_to(operand, ValueRef::constant("0"), span)?;
                    Ok(ValueRef::constant("()"))
                }
            },
            ExprKind::Conditional { cond, then_expr, else_expr } => {
                let c = self.expr(cond)?;
                let t = self.expr(then_expr)?;
                let f = self.expr(else_expr)?;
                Ok(self.emit_value(InstKind::Assign(AssignForm::Builtin { name: "?:".into() }), vec![c, t, f], span))
            }
            ExprKind::Tuple { elements, inline_array } => {
                if *inline_array {
                    let mut ops = Vec::new();
                    for el in elements.iter().flatten() {
                        ops.push(self.expr(el)?);
                    }
                    Ok(self.emit_value(InstKind::Assign(AssignForm::Builtin { name: "[]".into() }), ops, span))
                } else {
                    unsupported(span, "tuple used as a single value")
                }
            }
        }
    }

    fn tx(&mut self, p: TxProp, span: Span) -> ValueRef {
        let t = self.emit_value(InstKind::Assign(AssignForm::Copy), vec![ValueRef::TxProperty { prop: p }], span);
        self.tx_temps.insert(t.clone(), p);
        t
    }

    /// `x op= v` / `x++`: returns (old, new).
    fn update(&mut self, target: &Expr, op: BinOpKind, v: ValueRef, span: Span) -> LResult<(ValueRef, ValueRef)> {
        if self.is_storage_expr(target) {
            let p = self.place(target)?.expect("storage target");
            let old = self.sload(p.clone(), span);
            let new = self.emit_value(InstKind::BinOp { op }, vec![old.clone(), v], span);
            self.sstore(p, new.clone(), span);
            return Ok((old, new));
        }
        let old = self.expr(target)?;
        let new = self.emit_value(InstKind::BinOp { op }, vec![old.clone(), v], span);
        self.assign_to(target, new.clone(), span)?;
        Ok((old, new))
    }

    fn assign_to(&mut self, target: &Expr, value: ValueRef, span: Span) -> LResult<()> {
        if self.is_storage_expr(target) {
            let p = self.place(target)?.expect("storage target");
            self.sstore(p, value, span);
            return Ok(());
        }
        match &target.kind {
            ExprKind::Ident(n) => {
                self.define(n, value, span);
                Ok(())
            }
            ExprKind::Index { .. } | ExprKind::Member { .. } => {
                // memory aggregate update: rebuild the root local
                let mut chain = Vec::new();
                let mut cur = target;
                loop {
                    match &cur.kind {
                        ExprKind::Index { base, index } => {
                            if let Some(i) = index {
                                chain.push(i.as_ref());
                            }
                            cur = base;
                        }
                        ExprKind::Member { base, .. } => cur = base,
                        _ => break,
                    }
                }
                let ExprKind::Ident(root) = &cur.kind else {
                    return unsupported(span, "assignment to a computed location");
                };
                let form = match &target.kind {
                    ExprKind::Member { member, .. } => AssignForm::MemberStore { name: member.name.clone() },
                    _ => AssignForm::IndexStore,
                };
                let old = self.expr(cur)?;
                let mut ops = vec![old];
                for i in chain.into_iter().rev() {
                    ops.push(self.expr(i)?);
                }
                ops.push(value);
                let t = self.emit_value(InstKind::Assign(form), ops, span);
                self.define(root, t, span);
                Ok(())
            }
            ExprKind::Tuple { .. } => unsupported(span, "nested tuple assignment"),
            _ => unsupported(span, "assignment target"),
        }
    }

    fn call_args(&mut self, args: &[Expr]) -> LResult<Vec<ValueRef>> {
        args.iter().map(|a| self.expr(a)).collect()
    }

    /// Lower a call expression; returns its result values.
    fn call(&mut self, e: &Expr) -> LResult<Vec<ValueRef>> {
        let ExprKind::Call { callee, options, args } = &e.kind else { unreachable!() };
        let span = e.span;
        match &callee.kind {
            ExprKind::Ident(name) if name == "require" || name == "assert" => {
                let Some(cond) = args.first() else { return unsupported(span, "require without condition") };
                let c = self.expr(cond)?;
                self.emit(InstKind::Require, vec![c], None, span);
                Ok(vec![])
            }
            ExprKind::Ident(name) if name == "revert" => {
                let ops = self.call_args(args)?;
                self.emit(InstKind::Revert, ops, None, span);
                self.terminated = true;
                Ok(vec![])
            }
            ExprKind::ElementaryType(ty) => {
                let ops = self.call_args(args)?;
                Ok(vec![self.emit_value(InstKind::Assign(AssignForm::Convert { ty: ty.clone() }), ops, span)])
            }
            ExprKind::New(ty) => {
                let ops = self.call_args(args)?;
                let name = format!("new {}", ty.render());
                Ok(vec![self.emit_value(InstKind::Assign(AssignForm::Builtin { name }), ops, span)])
            }
            ExprKind::Ident(name) if BUILTIN_FUNCTIONS.contains(&name.as_str()) => {
                let ops = self.call_args(args)?;
                Ok(vec![self.emit_value(InstKind::Assign(AssignForm::Builtin { name: name.clone() }), ops, span)])
            }
            ExprKind::Ident(name) if !self.is_local(name) && self.scope.functions.contains_key(name) => {
                self.internal_call(name, args, span)
            }
            ExprKind::Ident(name) if !self.is_local(name) && self.scope.is_type_name(name) && args.len() == 1 => {
                let ops = self.call_args(args)?;
                Ok(vec![self.emit_value(InstKind::Assign(AssignForm::Convert { ty: name.clone() }), ops, span)])
            }
            ExprKind::Ident(name) if !self.is_local(name) => self.internal_call(name, args, span),
            ExprKind::Member { base, member } => self.member_call(e, base, &member.name, options, args, span),
            _ => unsupported(span, format!("call through {}", callee.kind.name())),
        }
    }

    fn internal_call(&mut self, name: &str, args: &[Expr], span: Span) -> LResult<Vec<ValueRef>> {
        let ops = self.call_args(args)?;
        let resolved = self.scope.resolve(name, args.len());
        let returns = match resolved {
            Some(i) => self.scope.contract.functions[i as usize].returns.len() as u32,
            None => 1,
        };
        let idx = self.emit(InstKind::InternalCall { callee: name.to_string(), resolved, returns }, ops, None, span);
        Ok(self.call_returns(idx, returns))
    }

    fn call_returns(&self, idx: u32, n: u32) -> Vec<ValueRef> {
        (0..n).map(|k| ValueRef::CallReturn { inst: InstId::new(self.fidx, idx), index: k }).collect()
    }

    fn member_call(
        &mut self,
        e: &Expr,
        base: &Expr,
        method: &str,
        options: &[crate::frontend::NamedArg],
        args: &[Expr],
        span: Span,
    ) -> LResult<Vec<ValueRef>> {
        let base_name = match &base.kind {
            ExprKind::Ident(n) if !self.is_local(n) && !self.scope.slots.contains_key(n) => Some(n.as_str()),
            _ => None,
        };
        if let Some(b) = base_name {
            if b == "abi" || b == "bytes" || b == "string" {
                let ops = self.call_args(args)?;
                let name = format!("{b}.{method}");
                return Ok(vec![self.emit_value(InstKind::Assign(AssignForm::Builtin { name }), ops, span)]);
            }
            if b == "super" {
                return self.internal_call(method, args, span);
            }
            if self.scope.is_library(b) {
                let ops = self.call_args(args)?;
                let idx =
                    self.emit(InstKind::InternalCall { callee: format!("{b}.{method}"), resolved: None, returns: 1 }, ops, None, span);
                return Ok(self.call_returns(idx, 1));
            }
        }
        let base_ty = self.type_of(base);
        // SafeMath-style wrappers on integers
        if let Some(op) = wrapper_op(method) {
            let external = base_ty.as_ref().is_some_and(|t| t.user_defined().is_some());
            if args.len() == 1 && !external && base_ty.as_ref().is_none_or(is_int_type) {
                let l = self.expr(base)?;
                let r = self.expr(&args[0])?;
                return Ok(vec![self.emit_value(InstKind::BinOp { op }, vec![l, r], span)]);
            }
        }
        // array push/pop
        if (method == "push" || method == "pop") && base_ty.as_ref().is_some_and(|t| matches!(t, TypeName::Array { .. })) {
            let value = match args.first() {
                Some(a) => self.expr(a)?,
                None => ValueRef::constant("0"),
            };
            if self.is_storage_expr(base) {
                let mut p = self.place(base)?.expect("storage array");
                p.slot.access_path.push(PathElem::ArrayIndex(AbsKey::Any));
                self.sstore(p, value, span);
            } else if let ExprKind::Ident(root) = &base.kind {
                let old = self.expr(base)?;
                let t = self.emit_value(InstKind::Assign(AssignForm::IndexStore), vec![old, value], span);
                self.define(root, t, span);
            }
            return Ok(vec![]);
        }
        let is_contract_ref = base_ty
            .as_ref()
            .and_then(|t| t.user_defined())
            .is_some_and(|n| self.scope.type_decl(n).is_some_and(|c| c.kind != ContractKind::Library) || n.starts_with('I'));
        let value_opt = options.iter().find(|o| o.name.name == "value");
        let low_level = match method {
            "transfer" | "send" if args.len() == 1 && !is_contract_ref => {
                Some(if method == "transfer" { LowLevelKind::Transfer } else { LowLevelKind::Send })
            }
            "call" if !is_contract_ref => Some(LowLevelKind::Call),
            _ => None,
        };
        let receiver = if matches!(base.kind, ExprKind::Ident(ref n) if n == "this" && !self.is_local(n)) {
            ValueRef::constant("this")
        } else {
            self.expr(base)?
        };
        if let Some(kind) = low_level {
            let value = match (kind, value_opt) {
                (LowLevelKind::Call, Some(v)) => self.expr(&v.value)?,
                (LowLevelKind::Call, None) => ValueRef::constant("0"),
                _ => self.expr(&args[0])?,
            };
            let mut ops = vec![receiver, value];
            if kind == LowLevelKind::Call {
                ops.extend(self.call_args(args)?);
            }
            let idx = self.emit(InstKind::LowLevelCall { call: kind }, ops, None, span);
            return Ok(self.call_returns(idx, 1));
        }
        let mut ops = vec![receiver];
        ops.extend(self.call_args(args)?);
        let this_call = matches!(&base.kind, ExprKind::Ident(n) if n == "this");
        let interface = if this_call {
            Some(self.scope.contract.name.name.clone())
        } else {
            match &base_ty {
                Some(TypeName::UserDefined { name, .. }) => Some(name.clone()),
                Some(TypeName::Elementary { name, .. }) => Some(name.clone()),
                _ => None,
            }
        };
        let decl_fn = interface
            .as_deref()
            .and_then(|i| self.scope.type_decl(i))
            .and_then(|c| c.functions.iter().find(|f| f.name.name == method && f.params.len() == args.len()));
        let mutability = decl_fn.map(|f| f.mutability);
        let returns = decl_fn.map(|f| f.returns.len() as u32).unwrap_or(1);
        let _ = e;
        let idx = self.emit(InstKind::ExternalCall { interface, function: method.to_string(), mutability, returns }, ops, None, span);
        Ok(self.call_returns(idx, returns.max(1)))
    }

    /// Values of a possibly multi-valued expression (tuple or call).
    fn values(&mut self, e: &Expr) -> LResult<Vec<Option<ValueRef>>> {
        match &e.kind {
            ExprKind::Tuple { elements, inline_array: false } => {
                let mut out = Vec::new();
                for el in elements {
                    out.push(match el {
                        Some(x) => Some(self.expr(x)?),
                        None => None,
                    });
                }
                Ok(out)
            }
            ExprKind::Call { .. } => Ok(self.call(e)?.into_iter().map(Some).collect()),
            _ => Ok(vec![Some(self.expr(e)?)]),
        }
    }

    // ---- statements ----

    fn block(&mut self, b: &'a Block) -> LResult<()> {
        for s in &b.stmts {
            if self.terminated {
                break;
            }
            self.stmt(s)?;
        }
        Ok(())
    }

    fn patch(&mut self, idx: u32, target: u32) {
        match &mut self.insts[idx as usize].kind {
            InstKind::Jump { target: t } => *t = target,
            _ => unreachable!("patching a non-jump"),
        }
    }

    /// Merge incoming environments at the current position, emitting phis.
    fn merge(&mut self, envs: Vec<Env>, span: Span) -> Env {
        if envs.is_empty() {
            return self.env.clone();
        }
        if envs.len() == 1 {
            return envs.into_iter().next().unwrap();
        }
        let mut out = Env::new();
        let names: BTreeSet<&String> = envs[0].keys().collect();
        for name in names {
            if !envs.iter().all(|e| e.contains_key(name)) {
                continue;
            }
            let vals: Vec<ValueRef> = envs.iter().map(|e| e[name].clone()).collect();
            if vals.iter().all(|v| *v == vals[0]) {
                out.insert(name.clone(), vals[0].clone());
            } else {
                let r = self.fresh(name);
                self.emit(InstKind::Phi, vals, Some(r.clone()), span);
                out.insert(name.clone(), r);
            }
        }
        out
    }

    fn assigned_names(s: &Stmt, out: &mut BTreeSet<String>) {
        fn root(e: &Expr) -> Option<&str> {
            match &e.kind {
                ExprKind::Ident(n) => Some(n),
                ExprKind::Index { base, .. } | ExprKind::Member { base, .. } => root(base),
                _ => None,
            }
        }
        fn in_expr(e: &Expr, out: &mut BTreeSet<String>) {
            match &e.kind {
                ExprKind::Unary { op, operand } => {
                    if !matches!(op, UnaryOp::Not | UnaryOp::Neg | UnaryOp::BitNot) {
                        if let Some(r) = root(operand) {
                            out.insert(r.to_string());
                        }
                    }
                    in_expr(operand, out);
                }
                ExprKind::Binary { lhs, rhs, .. } => {
                    in_expr(lhs, out);
                    in_expr(rhs, out);
                }
                ExprKind::Call { callee, args, .. } => {
                    if let ExprKind::Member { base, member } = &callee.kind {
                        if member.name == "push" || member.name == "pop" {
                            if let Some(r) = root(base) {
                                out.insert(r.to_string());
                            }
                        }
                    }
                    args.iter().for_each(|a| in_expr(a, out));
                }
                _ => {}
            }
        }
        match &s.kind {
            StmtKind::Assign { target, value, .. } => {
                match &target.kind {
                    ExprKind::Tuple { elements, .. } => {
                        for el in elements.iter().flatten() {
                            if let Some(r) = root(el) {
                                out.insert(r.to_string());
                            }
                        }
                    }
                    _ => {
                        if let Some(r) = root(target) {
                            out.insert(r.to_string());
                        }
                    }
                }
                in_expr(value, out);
            }
            StmtKind::Expr(e) => in_expr(e, out),
            StmtKind::VarDecl { init: Some(e), .. } => in_expr(e, out),
            StmtKind::Block(b) => b.stmts.iter().for_each(|s| Self::assigned_names(s, out)),
            StmtKind::If { then_branch, else_branch, .. } => {
                Self::assigned_names(then_branch, out);
                if let Some(e) = else_branch {
                    Self::assigned_names(e, out);
                }
            }
            StmtKind::For { init, update, body, .. } => {
                for s in init.iter().chain(update.iter()) {
                    Self::assigned_names(s, out);
                }
                Self::assigned_names(body, out);
            }
            StmtKind::While { body, .. } => Self::assigned_names(body, out),
            _ => {}
        }
    }

    fn lower_loop(&mut self, cond: Option<&'a Expr>, body: &'a Stmt, update: Option<&'a Stmt>, span: Span) -> LResult<()> {
        let mut names = BTreeSet::new();
        Self::assigned_names(body, &mut names);
        if let Some(u) = update {
            Self::assigned_names(u, &mut names);
        }
        // header phis for loop-carried locals
        let header = self.insts.len() as u32;
        let mut phis = Vec::new();
        for name in names {
            if let Some(pre) = self.env.get(&name).cloned() {
                if self.storage_ptrs.contains_key(&name) {
                    continue;
                }
                let r = self.fresh(&name);
                let idx = self.emit(InstKind::Phi, vec![pre], Some(r.clone()), span);
                self.env.insert(name.clone(), r);
                phis.push((idx, name));
            }
        }
        let cj = match cond {
            Some(c) => {
                let v = self.expr(c)?;
                Some(self.emit(InstKind::CondJump { then: PATCH, otherwise: PATCH }, vec![v], None, c.span))
            }
            None => None,
        };
        let exit_env_from_cond = self.env.clone();
        if let Some(cj) = cj {
            let body_start = self.insts.len() as u32;
            if let InstKind::CondJump { then, .. } = &mut self.insts[cj as usize].kind {
                *then = body_start;
            }
        }
        self.loops.push(LoopCtx { breaks: Vec::new(), continues: Vec::new() });
        self.stmt(body)?;
        let ctx = self.loops.pop().expect("loop ctx");
        // continue point
        let mut incoming = Vec::new();
        if !self.terminated {
            incoming.push(self.env.clone());
        }
        let cont_target = self.insts.len() as u32;
        for (j, env) in &ctx.continues {
            self.patch(*j, cont_target);
            incoming.push(env.clone());
        }
        let live = !incoming.is_empty();
        if live {
            self.env = self.merge(incoming, span);
            self.terminated = false;
            if let Some(u) = update {
                self.stmt(u)?;
            }
            for (idx, name) in &phis {
                let v = self.env.get(name).cloned().unwrap_or_else(|| ValueRef::constant("0"));
                self.insts[*idx as usize].operands.push(v);
            }
            self.emit(InstKind::Jump { target: header }, vec![], None, span);
        }
        // exit
        let exit = self.insts.len() as u32;
        if let Some(cj) = cj {
            if let InstKind::CondJump { otherwise, .. } = &mut self.insts[cj as usize].kind {
                *otherwise = exit;
            }
        }
        let mut outs = Vec::new();
        if cj.is_some() {
            outs.push(exit_env_from_cond);
        }
        for (j, env) in &ctx.breaks {
            self.patch(*j, exit);
            outs.push(env.clone());
        }
        if outs.is_empty() {
            // `for (;;)` without break never exits
            self.terminated = true;
            return Ok(());
        }
        self.env = self.merge(outs, span);
        self.terminated = false;
        Ok(())
    }

    fn stmt(&mut self, s: &'a Stmt) -> LResult<()> {
        let span = s.span;
        match &s.kind {
            StmtKind::Block(b) => self.block(b),
            StmtKind::VarDecl { decl, init } => {
                let name = decl.name.name.clone();
                self.types.insert(name.clone(), decl.ty.clone());
                if decl.location.as_deref() == Some("storage") {
                    if let Some(init) = init {
                        if let Some(p) = self.place(init)? {
                            let keys = p.keys.clone();
                            let r = self.fresh(&name);
                            self.emit(InstKind::Assign(AssignForm::Builtin { name: "storageRef".into() }), keys, Some(r), span);
                            self.storage_ptrs.insert(name, p);
                            return Ok(());
                        }
                    }
                }
                let v = match init {
                    Some(i) => self.expr(i)?,
                    None => ValueRef::constant("0"),
                };
                self.storage_ptrs.remove(&name);
                self.define(&name, v, span);
                Ok(())
            }
            StmtKind::TupleDecl { decls, init } => {
                let vals = self.values(init)?;
                for (i, d) in decls.iter().enumerate() {
                    if let Some(d) = d {
                        self.types.insert(d.name.name.clone(), d.ty.clone());
                        let v = vals.get(i).cloned().flatten().unwrap_or_else(|| ValueRef::constant("0"));
                        let target = self.fresh(&d.name.name);
                        self.emit(InstKind::Assign(AssignForm::Copy), vec![v], Some(target.clone()), span);
                        self.env.insert(d.name.name.clone(), target);
                    }
                }
                Ok(())
            }
            StmtKind::Assign { target, op, value } => {
                if let ExprKind::Tuple { elements, inline_array: false } = &target.kind {
                    if *op != AssignOp::Assign {
                        return unsupported(span, "compound tuple assignment");
                    }
                    let vals = self.values(value)?;
                    for (i, el) in elements.iter().enumerate() {
                        if let Some(el) = el {
                            let v = vals.get(i).cloned().flatten().unwrap_or_else(|| ValueRef::constant("0"));
                            self.assign_to(el, v, span)?;
                        }
                    }
                    return Ok(());
                }
                let v = self.expr(value)?;
                match op.binary().and_then(binop) {
                    Some(k) => {
                        self.update(target, k, v, span)?;
                    }
                    None if *op == AssignOp::Assign => self.assign_to(target, v, span)?,
                    None => {
                        let old = self.expr(target)?;
                        let t = self.emit_value(
                            InstKind::Assign(AssignForm::Builtin { name: op.as_str().trim_end_matches('=').to_string() }),
                            vec![old, v],
                            span,
                        );
                        self.assign_to(target, t, span)?;
                    }
                }
                Ok(())
            }
            StmtKind::If { cond, then_branch, else_branch } => {
                let c = self.expr(cond)?;
                let cj = self.emit(InstKind::CondJump { then: PATCH, otherwise: PATCH }, vec![c], None, cond.span);
                let pre = self.env.clone();
                let then_start = self.insts.len() as u32;
                self.stmt(then_branch)?;
                let mut incoming = Vec::new();
                let mut jumps = Vec::new();
                let then_live = !self.terminated;
                if then_live {
                    incoming.push(self.env.clone());
                    if else_branch.is_some() {
                        jumps.push(self.emit(InstKind::Jump { target: PATCH }, vec![], None, span));
                    }
                }
                self.terminated = false;
                self.env = pre.clone();
                let else_start = self.insts.len() as u32;
                if let Some(e) = else_branch {
                    self.stmt(e)?;
                    if !self.terminated {
                        incoming.push(self.env.clone());
                    }
                } else {
                    incoming.push(pre);
                }
                if let InstKind::CondJump { then, otherwise } = &mut self.insts[cj as usize].kind {
                    *then = then_start;
                    *otherwise = else_start;
                }
                if incoming.is_empty() {
                    self.terminated = true;
                    return Ok(());
                }
                self.terminated = false;
                let join = self.insts.len() as u32;
                for j in jumps {
                    self.patch(j, join);
                }
                self.env = self.merge(incoming, span);
                Ok(())
            }
            StmtKind::For { init, cond, update, body } => {
                if let Some(i) = init {
                    self.stmt(i)?;
                }
                self.lower_loop(cond.as_ref(), body, update.as_deref(), span)
            }
            StmtKind::While { cond, body } => self.lower_loop(Some(cond), body, None, span),
            StmtKind::Return(v) => {
                let ops = match v {
                    Some(e) => self.values(e)?.into_iter().map(|v| v.unwrap_or_else(|| ValueRef::constant("0"))).collect(),
                    None => self.named_return_values(),
                };
                self.emit(InstKind::Return, ops, None, span);
                self.terminated = true;
                Ok(())
            }
            StmtKind::RevertError { error } => {
                let ops = match &error.kind {
                    ExprKind::Call { args, .. } => self.call_args(args)?,
                    _ => vec![],
                };
                self.emit(InstKind::Revert, ops, None, span);
                self.terminated = true;
                Ok(())
            }
            StmtKind::Emit(e) => {
                let (event, args) = match &e.kind {
                    ExprKind::Call { callee, args, .. } => (crate::frontend::print_expr(callee), args.as_slice()),
                    _ => (crate::frontend::print_expr(e), &[][..]),
                };
                let ops = self.call_args(args)?;
                self.emit(InstKind::Assign(AssignForm::Emit { event }), ops, None, span);
                Ok(())
            }
            StmtKind::Expr(e) => {
                let before = self.insts.len();
                let v = self.expr(e)?;
                if self.insts.len() == before {
                    self.emit(InstKind::Assign(AssignForm::Copy), vec![v], None, span);
                }
                Ok(())
            }
            StmtKind::Break | StmtKind::Continue => {
                if self.loops.is_empty() {
                    return unsupported(span, "break/continue outside a loop");
                }
                let j = self.emit(InstKind::Jump { target: PATCH }, vec![], None, span);
                let env = self.env.clone();
                let ctx = self.loops.last_mut().expect("loop");
                if matches!(s.kind, StmtKind::Break) {
                    ctx.breaks.push((j, env));
                } else {
                    ctx.continues.push((j, env));
                }
                self.terminated = true;
                Ok(())
            }
            StmtKind::Placeholder => {
                let Some(level) = self.placeholder_level.last().copied() else {
                    return unsupported(span, "`_;` outside a modifier");
                };
                self.with_modifiers(level + 1)
            }
        }
    }

    fn named_return_values(&self) -> Vec<ValueRef> {
        self.named_returns
            .iter()
            .map(|n| n.as_ref().and_then(|n| self.env.get(n).cloned()).unwrap_or_else(|| ValueRef::constant("0")))
            .collect()
    }

    /// Lower modifier `level` (binding its parameters) or, past the last one, the body.
    fn with_modifiers(&mut self, level: usize) -> LResult<()> {
        if level >= self.modifiers.len() {
            if let Some(b) = self.body {
                self.block(b)?;
            }
            return Ok(());
        }
        let (decl, args) = self.modifiers[level].clone();
        let Some(decl) = decl else { return self.with_modifiers(level + 1) };
        let args = args.unwrap_or_default();
        for (p, a) in decl.params.iter().zip(&args) {
            if let Some(n) = &p.name {
                let v = self.expr(a)?;
                self.types.insert(n.name.clone(), p.ty.clone());
                let t = self.fresh(&n.name);
                self.emit(InstKind::Assign(AssignForm::Copy), vec![v], Some(t.clone()), a.span);
                self.env.insert(n.name.clone(), t);
            }
        }
        let Some(body) = &decl.body else { return self.with_modifiers(level + 1) };
        self.placeholder_level.push(level);
        let r = self.block(body);
        self.placeholder_level.pop();
        r
    }
}

fn lower_function<'a>(scope: &Scope<'a>, fidx: u32, f: &'a FunctionDecl, text: Option<&str>) -> LResult<FunctionIr> {
    let mut l = FnLowerer {
        scope,
        fidx,
        insts: Vec::new(),
        env: Env::new(),
        versions: HashMap::new(),
        types: HashMap::new(),
        storage_ptrs: HashMap::new(),
        tx_temps: HashMap::new(),
        temps: 0,
        loops: Vec::new(),
        terminated: false,
        modifiers: f.modifiers.iter().map(|m| (scope.contract.modifier(&m.name.name), m.args.clone())).collect(),
        placeholder_level: Vec::new(),
        body: f.body.as_ref(),
        named_returns: f.returns.iter().map(|r| r.name.as_ref().map(|n| n.name.clone())).collect(),
    };
    for (i, p) in f.params.iter().enumerate() {
        if let Some(n) = &p.name {
            l.env.insert(n.name.clone(), ValueRef::Param { func: fidx, index: i as u32 });
            l.types.insert(n.name.clone(), p.ty.clone());
        }
    }
    for r in &f.returns {
        if let Some(n) = &r.name {
            l.env.insert(n.name.clone(), ValueRef::constant("0"));
            l.types.insert(n.name.clone(), r.ty.clone());
        }
    }
    if f.body.is_some() {
        l.with_modifiers(0)?;
    }
    let len = l.insts.len() as u32;
    let dangling = l.insts.iter().any(|i| match &i.kind {
        InstKind::Jump { target } => *target >= len,
        InstKind::CondJump { then, otherwise } => *then >= len || *otherwise >= len,
        _ => false,
    });
    let ends_open = l.insts.last().is_none_or(|i| !matches!(i.kind, InstKind::Return | InstKind::Revert | InstKind::Jump { .. }));
    if dangling || ends_open {
        let ops = l.named_return_values();
        let span = Span::new(f.span.end.saturating_sub(1), f.span.end);
        l.emit(InstKind::Return, ops, None, span);
    }
    debug_assert!(l.insts.iter().all(|i| !matches!(i.kind, InstKind::Jump { target } if target == PATCH)));
    Ok(FunctionIr {
        name: f.name.name.clone(),
        kind: f.kind,
        visibility: f.visibility,
        mutability: f.mutability,
        modifiers: f.modifiers.iter().map(|m| m.name.name.clone()).collect(),
        params: f
            .params
            .iter()
            .enumerate()
            .map(|(i, p)| ParamIr { name: p.name.as_ref().map(|n| n.name.clone()).unwrap_or_else(|| format!("_{i}")), ty: p.ty.render() })
            .collect(),
        returns: f.returns.iter().map(|r| r.ty.render()).collect(),
        instructions: l.insts,
        source: text.and_then(|t| t.get(f.span.start..f.span.end)).map(str::to_string),
        span: f.span,
    })
}

/// Lower one contract. `unit` supplies sibling interface declarations and
/// `text` the original source (kept as function excerpts).
pub fn lower_contract(decl: &ContractDecl, unit: Option<&SourceUnit>, text: Option<&str>) -> ContractIr {
    let mut slots = HashMap::new();
    let mut constants = HashMap::new();
    let mut state_vars = Vec::new();
    let mut next = 0u32;
    for v in &decl.state_vars {
        if v.mutability == VarMutability::Constant {
            constants.insert(v.name.name.clone(), v.init.clone());
            continue;
        }
        slots.insert(v.name.name.clone(), (next, v.ty.clone()));
        state_vars.push(StateVarIr { name: v.name.name.clone(), ty: v.ty.render(), slot: next });
        next += 1;
    }
    let mut excluded: BTreeSet<usize> = BTreeSet::new();
    let mut diagnostics = Vec::new();
    // Lowering failures remove functions; repeat so call resolution never targets them.
    loop {
        let mut functions: HashMap<String, Vec<(u32, usize)>> = HashMap::new();
        let kept: Vec<usize> = (0..decl.functions.len()).filter(|i| !excluded.contains(i)).collect();
        for (new_idx, &orig) in kept.iter().enumerate() {
            let f = &decl.functions[orig];
            if f.kind == FunctionKind::Function {
                functions.entry(f.name.name.clone()).or_default().push((new_idx as u32, f.params.len()));
            }
        }
        let mut remap_contract = decl.clone();
        remap_contract.functions = kept.iter().map(|&i| decl.functions[i].clone()).collect();
        let scope = Scope { unit, contract: &remap_contract, slots: slots.clone(), constants: constants.clone(), functions };
        let mut out = Vec::new();
        let mut failed = None;
        for (new_idx, f) in remap_contract.functions.iter().enumerate() {
            match lower_function(&scope, new_idx as u32, f, text) {
                Ok(fir) => out.push(fir),
                Err(u) => {
                    failed = Some((kept[new_idx], u, f.name.name.clone()));
                    break;
                }
            }
        }
        match failed {
            Some((orig, u, name)) => {
                diagnostics.push(Diagnostic::warning(
                    LOWERING_UNSUPPORTED,
                    u.span,
                    format!("function `{name}` excluded from lowering: {}", u.what),
                ));
                excluded.insert(orig);
            }
            None => {
                return ContractIr { ir_version: IR_VERSION, contract: decl.name.name.clone(), state_vars, functions: out, diagnostics };
            }
        }
    }
}

/// Lower every non-interface, non-library contract of a unit.
pub fn lower_unit(unit: &SourceUnit, text: &str) -> Vec<ContractIr> {
    unit.contracts
        .iter()
        .filter(|c| matches!(c.kind, ContractKind::Contract | ContractKind::Abstract))
        .map(|c| lower_contract(c, Some(unit), Some(text)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::parse_source;

    fn lower(src: &str) -> ContractIr {
        let u = parse_source(src, "t.sol");
        assert_eq!(u.errors().count(), 0, "{:?}", u.diagnostics);
        lower_unit(&u, src).pop().expect("a contract")
    }

    fn kinds(f: &FunctionIr) -> Vec<&'static str> {
        f.instructions.iter().map(|i| i.kind.name()).collect()
    }

    #[test]
    fn empty_body_is_a_single_return() {
        let ir = lower("contract A { function f() public {} }");
        assert_eq!(kinds(&ir.functions[0]), vec!["Return"]);
    }

    #[test]
    fn slots_follow_declaration_order_skipping_constants() {
        let ir = lower("contract A { uint a; uint constant K = 1; mapping(address => uint) m; uint[] xs; }");
        let slots: Vec<(&str, u32)> = ir.state_vars.iter().map(|v| (v.name.as_str(), v.slot)).collect();
        assert_eq!(slots, vec![("a", 0), ("m", 1), ("xs", 2)]);
        assert!(ir.state_vars[1].is_mapping());
    }

    #[test]
    fn safemath_add_is_a_binop_between_load_and_store() {
        let ir = lower("contract A { mapping(address => uint) m; function f(address k, uint v) public { m[k] = m[k].add(v); } }");
        let f = &ir.functions[0];
        assert_eq!(kinds(f), vec!["SLoad", "BinOp", "SStore", "Return"]);
        let (InstKind::SLoad { slot: a }, InstKind::SStore { slot: b }) = (&f.instructions[0].kind, &f.instructions[2].kind) else {
            panic!()
        };
        assert_eq!(a, b);
        assert!(a.is_mapping_base);
        assert_eq!(f.instructions[1].kind, InstKind::BinOp { op: BinOpKind::Add });
    }

    #[test]
    fn msg_sender_key_is_abstracted() {
        let ir = lower("contract A { mapping(address => uint) m; function f() public { m[msg.sender] = 1; } }");
        let InstKind::SStore { slot } = &ir.functions[0].instructions[1].kind else { panic!() };
        assert_eq!(slot.access_path, vec![PathElem::MappingKey(AbsKey::Tx(TxProp::Sender))]);
    }

    #[test]
    fn if_else_joins_with_phi() {
        let ir =
            lower("contract A { function f(uint c) public returns (uint) { uint y; if (c > 1) { y = 1; } else { y = 2; } return y; } }");
        let f = &ir.functions[0];
        let cj = f.instructions.iter().find(|i| matches!(i.kind, InstKind::CondJump { .. })).unwrap();
        let InstKind::CondJump { then, otherwise } = cj.kind else { unreachable!() };
        assert_ne!(then, otherwise);
        let phi = f.instructions.iter().find(|i| i.kind == InstKind::Phi).unwrap();
        assert_eq!(phi.operands.len(), 2);
        let ret = f.instructions.last().unwrap();
        assert_eq!(ret.operands[0], *phi.result.as_ref().unwrap());
    }

    #[test]
    fn loops_get_header_phis_and_back_edges() {
        let ir = lower("contract A { function f(uint n) public returns (uint s) { for (uint i = 0; i < n; i++) { s += i; } } }");
        let f = &ir.functions[0];
        let phis: Vec<_> = f.instructions.iter().filter(|i| i.kind == InstKind::Phi).collect();
        assert_eq!(phis.len(), 2);
        assert!(phis.iter().all(|p| p.operands.len() == 2));
        let header = phis[0].id.idx;
        assert!(f.instructions.iter().any(|i| i.kind == InstKind::Jump { target: header }));
    }

    #[test]
    fn value_transfers_are_low_level_calls() {
        let ir = lower(
            "contract A { function f(address payable to, uint v) public { to.transfer(v); to.send(v); (bool ok, ) = to.call{value: v}(\"\"); require(ok); } }",
        );
        let lows: Vec<_> = ir.functions[0]
            .instructions
            .iter()
            .filter_map(|i| match i.kind {
                InstKind::LowLevelCall { call } => Some(call),
                _ => None,
            })
            .collect();
        assert_eq!(lows, vec![LowLevelKind::Transfer, LowLevelKind::Send, LowLevelKind::Call]);
    }

    #[test]
    fn interface_calls_record_mutability() {
        let src = "interface IOracle { function price() external view returns (uint); }
                   contract A { IOracle o; function f() public returns (uint) { return o.price() * 2; } }";
        let ir = lower(src);
        let ec = ir.functions[0].instructions.iter().find(|i| matches!(i.kind, InstKind::ExternalCall { .. })).unwrap();
        let InstKind::ExternalCall { interface, function, mutability, .. } = &ec.kind else { unreachable!() };
        assert_eq!(interface.as_deref(), Some("IOracle"));
        assert_eq!(function, "price");
        assert_eq!(*mutability, Some(crate::frontend::Mutability::View));
    }

    #[test]
    fn modifiers_are_inlined() {
        let ir = lower(
            "contract A { address owner; uint x; modifier onlyOwner() { require(msg.sender == owner); _; } function f() public onlyOwner { x = 1; } }",
        );
        let f = &ir.functions[0];
        assert_eq!(f.modifiers, vec!["onlyOwner"]);
        assert_eq!(kinds(f), vec!["Assign", "SLoad", "BinOp", "Require", "SStore", "Return"]);
    }

    #[test]
    fn unresolved_calls_stay_opaque() {
        let ir = lower("contract A { function f(uint v) public { _transfer(address(this), msg.sender, v); } }");
        let call = ir.functions[0].instructions.iter().find(|i| matches!(i.kind, InstKind::InternalCall { .. })).unwrap();
        assert!(matches!(&call.kind, InstKind::InternalCall { resolved: None, callee, .. } if callee == "_transfer"));
        assert_eq!(call.operands.len(), 3);
    }
}
