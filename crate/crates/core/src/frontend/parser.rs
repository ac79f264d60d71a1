//! Recursive-descent parser for the supported Solidity subset.
//!
//! Failures never abort the parse. A syntax error or an unsupported
//! construct inside a function body drops that one function and records a
//! diagnostic; errors at contract level skip to the next item boundary.

use super::ast::*;
use super::lexer::{tokenize, Token, TokenKind};

const MAX_DEPTH: usize = 200;

pub mod codes {
    pub const SYNTAX_ERROR: &str = "syntax-error";
    pub const UNSUPPORTED: &str = "unsupported-construct";
    pub const DUPLICATE_CONTRACT: &str = "duplicate-contract";
    pub const VIEW_STATE_WRITE: &str = "view-state-write";
    pub const UNTERMINATED: &str = "unterminated-literal";
    pub const UNEXPECTED_CHAR: &str = "unexpected-character";
    pub const IMPORT_IGNORED: &str = "import-ignored";
    pub const NESTING: &str = "nesting-too-deep";
}

#[derive(Debug)]
pub(crate) struct Failure(Diagnostic);

pub(crate) type PResult<T> = Result<T, Failure>;

pub(crate) struct Parser<'a> {
    text: &'a str,
    tokens: Vec<Token>,
    pos: usize,
    depth: usize,
    pub(crate) diagnostics: Vec<Diagnostic>,
}

fn is_elementary(name: &str) -> bool {
    matches!(name, "address" | "bool" | "string" | "bytes" | "byte" | "uint" | "int" | "payable")
        || numbered(name, "uint", 8, 256)
        || numbered(name, "int", 8, 256)
        || numbered(name, "bytes", 1, 32)
}

fn numbered(name: &str, prefix: &str, lo: u32, hi: u32) -> bool {
    name.strip_prefix(prefix)
        .and_then(|rest| if rest.starts_with('0') { None } else { rest.parse::<u32>().ok() })
        .is_some_and(|n| n >= lo && n <= hi)
}

fn is_location(name: &str) -> bool {
    matches!(name, "memory" | "storage" | "calldata")
}

fn is_reserved(name: &str) -> bool {
    matches!(
        name,
        "contract"
            | "interface"
            | "library"
            | "function"
            | "modifier"
            | "returns"
            | "return"
            | "if"
            | "else"
            | "for"
            | "while"
            | "do"
            | "emit"
            | "event"
            | "struct"
            | "enum"
            | "mapping"
            | "public"
            | "private"
            | "internal"
            | "external"
            | "view"
            | "pure"
            | "constant"
            | "immutable"
            | "new"
            | "delete"
            | "true"
            | "false"
            | "break"
            | "continue"
            | "assembly"
            | "try"
            | "catch"
            | "using"
            | "import"
            | "pragma"
            | "override"
            | "virtual"
            | "memory"
            | "storage"
            | "calldata"
    )
}

impl<'a> Parser<'a> {
    pub(crate) fn new(text: &'a str) -> Self {
        Parser { text, tokens: tokenize(text), pos: 0, depth: 0, diagnostics: Vec::new() }
    }

    // ---- token helpers ----

    fn peek(&self) -> &Token {
        &self.tokens[self.pos.min(self.tokens.len() - 1)]
    }

    fn peek_at(&self, n: usize) -> &Token {
        &self.tokens[(self.pos + n).min(self.tokens.len() - 1)]
    }

    fn at_eof(&self) -> bool {
        matches!(self.peek().kind, TokenKind::Eof)
    }

    fn bump(&mut self) -> Token {
        let tok = self.peek().clone();
        if !self.at_eof() {
            self.pos += 1;
        }
        tok
    }

    fn prev_end(&self) -> usize {
        if self.pos == 0 {
            0
        } else {
            self.tokens[self.pos - 1].span.end
        }
    }

    fn check(&self, p: &str) -> bool {
        self.peek().is_punct(p)
    }

    fn check_ident(&self, name: &str) -> bool {
        self.peek().is_ident(name)
    }

    fn eat(&mut self, p: &str) -> bool {
        if self.check(p) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn eat_ident(&mut self, name: &str) -> bool {
        if self.check_ident(name) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn error_here(&self, message: impl Into<String>) -> Failure {
        let tok = self.peek();
        let (code, msg) = match &tok.kind {
            TokenKind::UnterminatedStr | TokenKind::UnterminatedComment => {
                (codes::UNTERMINATED, format!("{}: {}", tok.describe(), message.into()))
            }
            TokenKind::Unknown(_) => (codes::UNEXPECTED_CHAR, format!("unexpected {}", tok.describe())),
            _ => (codes::SYNTAX_ERROR, format!("{}, found {}", message.into(), tok.describe())),
        };
        Failure(Diagnostic::error(code, tok.span, msg))
    }

    fn expect(&mut self, p: &str) -> PResult<Span> {
        if self.check(p) {
            Ok(self.bump().span)
        } else {
            Err(self.error_here(format!("expected `{p}`")))
        }
    }

    fn expect_ident(&mut self) -> PResult<Ident> {
        match &self.peek().kind {
            TokenKind::Ident(name) if !is_reserved(name) => {
                let name = name.clone();
                let span = self.bump().span;
                Ok(Ident { name, span })
            }
            _ => Err(self.error_here("expected identifier")),
        }
    }

    fn unsupported(&self, what: &str, span: Span) -> Failure {
        Failure(Diagnostic::warning(codes::UNSUPPORTED, span, format!("{what} is outside the supported subset")))
    }

    fn enter(&mut self) -> PResult<()> {
        self.depth += 1;
        if self.depth > MAX_DEPTH {
            let span = self.peek().span;
            return Err(Failure(Diagnostic::error(codes::NESTING, span, "nesting depth limit exceeded")));
        }
        Ok(())
    }

    fn leave(&mut self) {
        self.depth = self.depth.saturating_sub(1);
    }

    /// Index of the token matching the opening brace at `open`, or the EOF index.
    fn matching_close(&self, open: usize) -> usize {
        let mut depth = 0usize;
        let mut i = open;
        while i < self.tokens.len() {
            let t = &self.tokens[i];
            if t.is_punct("{") {
                depth += 1;
            } else if t.is_punct("}") {
                depth = depth.saturating_sub(1);
                if depth == 0 {
                    return i;
                }
            } else if matches!(t.kind, TokenKind::Eof) {
                return i;
            }
            i += 1;
        }
        self.tokens.len() - 1
    }

    /// Skip to just past the next `;` or balanced `{...}` at the current nesting level.
    fn recover_item(&mut self) {
        let start = self.pos;
        loop {
            if self.at_eof() {
                break;
            }
            if self.check("}") {
                if self.pos == start {
                    self.bump();
                }
                break;
            }
            if self.check(";") {
                self.bump();
                break;
            }
            if self.check("{") {
                let close = self.matching_close(self.pos);
                self.pos = close;
                self.bump();
                break;
            }
            self.bump();
        }
    }

    // ---- source unit ----

    pub(crate) fn parse_source_unit(mut self, path: &str) -> SourceUnit {
        let mut pragmas = Vec::new();
        let mut contracts: Vec<ContractDecl> = Vec::new();
        while !self.at_eof() {
            let before = self.pos;
            let tok = self.peek().clone();
            match &tok.kind {
                TokenKind::Ident(w) if w == "pragma" => {
                    self.bump();
                    let start = self.peek().span.start;
                    while !self.at_eof() && !self.check(";") {
                        self.bump();
                    }
                    let end = self.prev_end().max(start);
                    pragmas.push(self.text[start..end].trim().to_string());
                    self.eat(";");
                }
                TokenKind::Ident(w) if w == "import" => {
                    self.diagnostics.push(Diagnostic::warning(
                        codes::IMPORT_IGNORED,
                        tok.span,
                        "imports are not resolved; inputs must be flattened",
                    ));
                    self.recover_item();
                }
                TokenKind::Ident(w) if matches!(w.as_str(), "contract" | "interface" | "library" | "abstract") => {
                    match self.parse_contract() {
                        Ok(c) => {
                            if contracts.iter().any(|o| o.name.name == c.name.name) {
                                self.diagnostics.push(Diagnostic::error(
                                    codes::DUPLICATE_CONTRACT,
                                    c.name.span,
                                    format!("contract `{}` is declared more than once", c.name.name),
                                ));
                            } else {
                                contracts.push(c);
                            }
                        }
                        Err(Failure(d)) => {
                            self.diagnostics.push(d);
                            self.recover_item();
                        }
                    }
                }
                TokenKind::Ident(w) if matches!(w.as_str(), "struct" | "enum" | "error" | "event" | "using" | "function" | "type") => {
                    self.diagnostics.push(Diagnostic::warning(
                        codes::UNSUPPORTED,
                        tok.span,
                        format!("file-level `{w}` declarations are ignored"),
                    ));
                    self.recover_item();
                }
                TokenKind::Ident(w) if is_elementary(w) || w == "uint256" => {
                    // file-level constant
                    self.diagnostics.push(Diagnostic::warning(codes::UNSUPPORTED, tok.span, "file-level constants are ignored"));
                    self.recover_item();
                }
                _ => {
                    let Failure(d) = self.error_here("expected contract, interface, library or pragma");
                    self.diagnostics.push(d);
                    self.recover_item();
                }
            }
            if self.pos == before {
                self.bump();
            }
        }
        SourceUnit { path: path.to_string(), pragmas, contracts, diagnostics: self.diagnostics }
    }

    fn parse_contract(&mut self) -> PResult<ContractDecl> {
        let start = self.peek().span.start;
        let kind = if self.eat_ident("abstract") {
            if !self.eat_ident("contract") {
                return Err(self.error_here("expected `contract` after `abstract`"));
            }
            ContractKind::Abstract
        } else if self.eat_ident("contract") {
            ContractKind::Contract
        } else if self.eat_ident("interface") {
            ContractKind::Interface
        } else {
            self.bump();
            ContractKind::Library
        };
        let name = self.expect_ident()?;
        let mut base_contracts = Vec::new();
        if self.eat_ident("is") {
            loop {
                let base = self.expect_ident()?;
                if self.check("(") {
                    // base constructor arguments are not needed
                    self.skip_balanced("(", ")")?;
                }
                base_contracts.push(base);
                if !self.eat(",") {
                    break;
                }
            }
        }
        let open = self.pos;
        self.expect("{")?;
        let mut decl = ContractDecl {
            kind,
            name,
            base_contracts,
            state_vars: Vec::new(),
            structs: Vec::new(),
            functions: Vec::new(),
            modifiers: Vec::new(),
            excluded_functions: Vec::new(),
            span: Span::default(),
        };
        while !self.at_eof() && !self.check("}") {
            let before = self.pos;
            if let Err(Failure(d)) = self.parse_contract_item(&mut decl) {
                self.diagnostics.push(d);
                self.recover_item();
            }
            if self.pos == before {
                self.bump();
            }
        }
        if self.at_eof() {
            let close = self.matching_close(open);
            let span = self.tokens[close].span;
            self.diagnostics.push(Diagnostic::error(codes::SYNTAX_ERROR, span, "unterminated contract body"));
        } else {
            self.bump();
        }
        decl.span = Span::new(start, self.prev_end().max(start + 1));
        self.check_read_only_functions(&mut decl);
        Ok(decl)
    }

    fn skip_balanced(&mut self, open: &str, close: &str) -> PResult<()> {
        self.expect(open)?;
        let mut depth = 1usize;
        while depth > 0 {
            if self.at_eof() {
                return Err(self.error_here(format!("expected `{close}`")));
            }
            if self.check(open) {
                depth += 1;
            } else if self.check(close) {
                depth -= 1;
            }
            self.bump();
        }
        Ok(())
    }

    fn parse_contract_item(&mut self, decl: &mut ContractDecl) -> PResult<()> {
        let tok = self.peek().clone();
        let word = match &tok.kind {
            TokenKind::Ident(w) => w.clone(),
            _ => return Err(self.error_here("expected contract member")),
        };
        match word.as_str() {
            "function" | "constructor" | "fallback" | "receive" => self.parse_function_item(decl),
            "modifier" => {
                let m = self.parse_modifier()?;
                if let Some(m) = m {
                    decl.modifiers.push(m);
                }
                Ok(())
            }
            "event" | "error" | "enum" => {
                self.recover_item();
                Ok(())
            }
            "struct" => {
                let s = self.parse_struct()?;
                decl.structs.push(s);
                Ok(())
            }
            "using" => {
                self.diagnostics.push(Diagnostic::warning(
                    codes::UNSUPPORTED,
                    tok.span,
                    "`using ... for` directives are outside the supported subset and are ignored",
                ));
                self.recover_item();
                Ok(())
            }
            _ => {
                let v = self.parse_state_var()?;
                decl.state_vars.push(v);
                Ok(())
            }
        }
    }

    fn parse_struct(&mut self) -> PResult<StructDecl> {
        let start = self.bump().span.start;
        let name = self.expect_ident()?;
        self.expect("{")?;
        let mut fields = Vec::new();
        while !self.check("}") {
            let fstart = self.peek().span.start;
            let ty = self.parse_type()?;
            let fname = self.expect_ident()?;
            self.expect(";")?;
            fields.push(Param { ty, location: None, name: Some(fname), span: Span::new(fstart, self.prev_end()) });
        }
        self.bump();
        Ok(StructDecl { name, fields, span: Span::new(start, self.prev_end()) })
    }

    fn parse_state_var(&mut self) -> PResult<StateVarDecl> {
        let start = self.peek().span.start;
        if self.check_ident("function") {
            return Err(self.unsupported("function-typed variable", self.peek().span));
        }
        let ty = self.parse_type()?;
        let mut visibility = None;
        let mut mutability = VarMutability::Mutable;
        while let TokenKind::Ident(w) = &self.peek().kind {
            match w.as_str() {
                "public" => visibility = Some(Visibility::Public),
                "private" => visibility = Some(Visibility::Private),
                "internal" => visibility = Some(Visibility::Internal),
                "constant" => mutability = VarMutability::Constant,
                "immutable" => mutability = VarMutability::Immutable,
                "override" => {
                    self.bump();
                    if self.check("(") {
                        self.skip_balanced("(", ")")?;
                    }
                    continue;
                }
                _ => break,
            }
            self.bump();
        }
        let name = self.expect_ident()?;
        let init = if self.eat("=") { Some(self.parse_expr()?) } else { None };
        self.expect(";")?;
        Ok(StateVarDecl { ty, visibility, mutability, name, init, span: Span::new(start, self.prev_end()) })
    }

    fn parse_params(&mut self) -> PResult<Vec<Param>> {
        self.expect("(")?;
        let mut params = Vec::new();
        if self.eat(")") {
            return Ok(params);
        }
        loop {
            let start = self.peek().span.start;
            let ty = self.parse_type()?;
            let mut location = None;
            if let TokenKind::Ident(w) = &self.peek().kind {
                if is_location(w) {
                    location = Some(w.clone());
                    self.bump();
                }
            }
            // `indexed` only appears in events, which are skipped
            let name = match &self.peek().kind {
                TokenKind::Ident(w) if !is_reserved(w) => Some(self.expect_ident()?),
                _ => None,
            };
            params.push(Param { ty, location, name, span: Span::new(start, self.prev_end()) });
            if self.eat(")") {
                break;
            }
            self.expect(",")?;
        }
        Ok(params)
    }

    fn parse_function_item(&mut self, decl: &mut ContractDecl) -> PResult<()> {
        let start = self.peek().span.start;
        let kw = self.bump();
        let word = match &kw.kind {
            TokenKind::Ident(w) => w.clone(),
            _ => unreachable!(),
        };
        let (kind, name) = match word.as_str() {
            "constructor" => (FunctionKind::Constructor, Ident { name: "constructor".into(), span: kw.span }),
            "fallback" => (FunctionKind::Fallback, Ident { name: "fallback".into(), span: kw.span }),
            "receive" => (FunctionKind::Receive, Ident { name: "receive".into(), span: kw.span }),
            _ => {
                if self.check("(") {
                    (FunctionKind::Fallback, Ident { name: "fallback".into(), span: kw.span })
                } else {
                    let name = self.expect_ident()?;
                    if name.name == decl.name.name {
                        (FunctionKind::Constructor, name)
                    } else {
                        (FunctionKind::Function, name)
                    }
                }
            }
        };
        let params = self.parse_params()?;
        let mut visibility = None;
        let mut mutability = Mutability::Default;
        let mut is_virtual = false;
        let mut is_override = false;
        let mut modifiers = Vec::new();
        let mut returns = Vec::new();
        loop {
            let tok = self.peek().clone();
            let TokenKind::Ident(w) = &tok.kind else { break };
            match w.as_str() {
                "public" => visibility = Some(Visibility::Public),
                "external" => visibility = Some(Visibility::External),
                "internal" => visibility = Some(Visibility::Internal),
                "private" => visibility = Some(Visibility::Private),
                "view" | "constant" => mutability = Mutability::View,
                "pure" => mutability = Mutability::Pure,
                "payable" => mutability = Mutability::Payable,
                "virtual" => is_virtual = true,
                "override" => {
                    is_override = true;
                    self.bump();
                    if self.check("(") {
                        self.skip_balanced("(", ")")?;
                    }
                    continue;
                }
                "returns" => {
                    self.bump();
                    returns = self.parse_params()?;
                    continue;
                }
                _ if is_reserved(w) => break,
                _ => {
                    let mname = self.expect_ident()?;
                    let mstart = mname.span.start;
                    let args = if self.check("(") { Some(self.parse_call_args()?) } else { None };
                    modifiers.push(ModifierInvocation { name: mname, args, span: Span::new(mstart, self.prev_end()) });
                    continue;
                }
            }
            self.bump();
        }
        let default_vis = if decl.kind == ContractKind::Interface || kind == FunctionKind::Fallback || kind == FunctionKind::Receive {
            Visibility::External
        } else {
            Visibility::Public
        };
        let visibility = visibility.unwrap_or(default_vis);
        let body = if self.eat(";") {
            None
        } else if self.check("{") {
            let open = self.pos;
            match self.parse_block() {
                Ok(b) => Some(b),
                Err(Failure(d)) => {
                    self.diagnostics.push(d);
                    let close = self.matching_close(open);
                    self.pos = close;
                    self.bump();
                    decl.excluded_functions.push(name);
                    return Ok(());
                }
            }
        } else {
            return Err(self.error_here("expected function body or `;`"));
        };
        decl.functions.push(FunctionDecl {
            kind,
            name,
            params,
            returns,
            visibility,
            mutability,
            is_virtual,
            is_override,
            modifiers,
            body,
            span: Span::new(start, self.prev_end()),
        });
        Ok(())
    }

    fn parse_modifier(&mut self) -> PResult<Option<ModifierDecl>> {
        let start = self.bump().span.start;
        let name = self.expect_ident()?;
        let params = if self.check("(") { self.parse_params()? } else { Vec::new() };
        while self.eat_ident("virtual") || self.eat_ident("override") {}
        let body = if self.eat(";") {
            None
        } else {
            let open = self.pos;
            if !self.check("{") {
                return Err(self.error_here("expected modifier body"));
            }
            match self.parse_block() {
                Ok(b) => Some(b),
                Err(Failure(d)) => {
                    self.diagnostics.push(d);
                    let close = self.matching_close(open);
                    self.pos = close;
                    self.bump();
                    return Ok(None);
                }
            }
        };
        Ok(Some(ModifierDecl { name, params, body, span: Span::new(start, self.prev_end()) }))
    }

    // ---- types ----

    pub(crate) fn parse_type(&mut self) -> PResult<TypeName> {
        self.enter()?;
        let r = self.parse_type_inner();
        self.leave();
        r
    }

    fn parse_type_inner(&mut self) -> PResult<TypeName> {
        let tok = self.peek().clone();
        let start = tok.span.start;
        let mut ty = match &tok.kind {
            TokenKind::Ident(w) if w == "mapping" => {
                self.bump();
                self.expect("(")?;
                let key = self.parse_type()?;
                if matches!(&self.peek().kind, TokenKind::Ident(w) if !is_reserved(w)) {
                    self.bump();
                }
                self.expect("=>")?;
                let value = self.parse_type()?;
                if matches!(&self.peek().kind, TokenKind::Ident(w) if !is_reserved(w)) {
                    self.bump();
                }
                self.expect(")")?;
                TypeName::Mapping { key: Box::new(key), value: Box::new(value), span: Span::new(start, self.prev_end()) }
            }
            TokenKind::Ident(w) if w == "function" => return Err(self.unsupported("function type", tok.span)),
            TokenKind::Ident(w) if is_elementary(w) => {
                self.bump();
                let mut name = w.clone();
                if name == "address" && self.check_ident("payable") {
                    self.bump();
                    name = "address payable".into();
                }
                TypeName::Elementary { name, span: Span::new(start, self.prev_end()) }
            }
            TokenKind::Ident(w) if !is_reserved(w) => {
                self.bump();
                let mut name = w.clone();
                while self.check(".") && matches!(&self.peek_at(1).kind, TokenKind::Ident(_)) {
                    self.bump();
                    let part = self.expect_ident()?;
                    name.push('.');
                    name.push_str(&part.name);
                }
                TypeName::UserDefined { name, span: Span::new(start, self.prev_end()) }
            }
            _ => return Err(self.error_here("expected type name")),
        };
        while self.check("[") {
            self.bump();
            let length = if self.check("]") { None } else { Some(Box::new(self.parse_expr()?)) };
            self.expect("]")?;
            ty = TypeName::Array { element: Box::new(ty), length, span: Span::new(start, self.prev_end()) };
        }
        Ok(ty)
    }

    // ---- statements ----

    pub(crate) fn parse_block(&mut self) -> PResult<Block> {
        self.enter()?;
        let r = self.parse_block_inner();
        self.leave();
        r
    }

    fn parse_block_inner(&mut self) -> PResult<Block> {
        let start = self.peek().span.start;
        let unchecked = self.eat_ident("unchecked");
        self.expect("{")?;
        let mut stmts = Vec::new();
        while !self.check("}") {
            if self.at_eof() {
                return Err(self.error_here("expected `}`"));
            }
            stmts.push(self.parse_stmt()?);
        }
        self.bump();
        Ok(Block { unchecked, stmts, span: Span::new(start, self.prev_end()) })
    }

    pub(crate) fn parse_stmt(&mut self) -> PResult<Stmt> {
        self.enter()?;
        let r = self.parse_stmt_inner();
        self.leave();
        r
    }

    fn finish(&self, kind: StmtKind, start: usize) -> Stmt {
        Stmt { kind, span: Span::new(start, self.prev_end()) }
    }

    fn parse_stmt_inner(&mut self) -> PResult<Stmt> {
        let tok = self.peek().clone();
        let start = tok.span.start;
        if tok.is_punct("{") {
            let b = self.parse_block()?;
            return Ok(self.finish(StmtKind::Block(b), start));
        }
        let TokenKind::Ident(word) = &tok.kind else {
            return self.parse_simple_stmt(start);
        };
        match word.as_str() {
            "unchecked" if self.peek_at(1).is_punct("{") => {
                let b = self.parse_block()?;
                Ok(self.finish(StmtKind::Block(b), start))
            }
            "if" => {
                self.bump();
                self.expect("(")?;
                let cond = self.parse_expr()?;
                self.expect(")")?;
                let then_branch = Box::new(self.parse_stmt()?);
                let else_branch = if self.eat_ident("else") { Some(Box::new(self.parse_stmt()?)) } else { None };
                Ok(self.finish(StmtKind::If { cond, then_branch, else_branch }, start))
            }
            "for" => {
                self.bump();
                self.expect("(")?;
                let init = if self.eat(";") { None } else { Some(Box::new(self.parse_simple_stmt(self.peek().span.start)?)) };
                let cond = if self.check(";") { None } else { Some(self.parse_expr()?) };
                self.expect(";")?;
                let update = if self.check(")") {
                    None
                } else {
                    let ustart = self.peek().span.start;
                    let kind = self.parse_expr_or_assign()?;
                    Some(Box::new(self.finish(kind, ustart)))
                };
                self.expect(")")?;
                let body = Box::new(self.parse_stmt()?);
                Ok(self.finish(StmtKind::For { init, cond, update, body }, start))
            }
            "while" => {
                self.bump();
                self.expect("(")?;
                let cond = self.parse_expr()?;
                self.expect(")")?;
                let body = Box::new(self.parse_stmt()?);
                Ok(self.finish(StmtKind::While { cond, body }, start))
            }
            "do" => Err(self.unsupported("do-while loop", tok.span)),
            "assembly" => Err(self.unsupported("inline assembly", tok.span)),
            "try" => Err(self.unsupported("try/catch", tok.span)),
            "return" => {
                self.bump();
                let value = if self.check(";") { None } else { Some(self.parse_expr()?) };
                self.expect(";")?;
                Ok(self.finish(StmtKind::Return(value), start))
            }
            "emit" => {
                self.bump();
                let e = self.parse_expr()?;
                self.expect(";")?;
                Ok(self.finish(StmtKind::Emit(e), start))
            }
            "break" => {
                self.bump();
                self.expect(";")?;
                Ok(self.finish(StmtKind::Break, start))
            }
            "continue" => {
                self.bump();
                self.expect(";")?;
                Ok(self.finish(StmtKind::Continue, start))
            }
            "_" if self.peek_at(1).is_punct(";") => {
                self.bump();
                self.bump();
                Ok(self.finish(StmtKind::Placeholder, start))
            }
            "revert" if matches!(&self.peek_at(1).kind, TokenKind::Ident(_)) => {
                self.bump();
                let error = self.parse_expr()?;
                self.expect(";")?;
                Ok(self.finish(StmtKind::RevertError { error }, start))
            }
            _ => self.parse_simple_stmt(start),
        }
    }

    /// Variable declaration, tuple declaration, assignment or expression statement, with `;`.
    fn parse_simple_stmt(&mut self, start: usize) -> PResult<Stmt> {
        if self.looks_like_var_decl() {
            let decl = self.parse_var_decl()?;
            let init = if self.eat("=") { Some(self.parse_expr()?) } else { None };
            self.expect(";")?;
            return Ok(self.finish(StmtKind::VarDecl { decl, init }, start));
        }
        if self.check("(") {
            let save = self.pos;
            let saved_diags = self.diagnostics.len();
            if let Ok(decls) = self.try_tuple_decl() {
                let init = self.parse_expr()?;
                self.expect(";")?;
                return Ok(self.finish(StmtKind::TupleDecl { decls, init }, start));
            }
            self.pos = save;
            self.diagnostics.truncate(saved_diags);
        }
        let kind = self.parse_expr_or_assign()?;
        self.expect(";")?;
        Ok(self.finish(kind, start))
    }

    fn try_tuple_decl(&mut self) -> PResult<Vec<Option<VarDecl>>> {
        self.expect("(")?;
        let mut decls = Vec::new();
        let mut any = false;
        loop {
            if self.check(",") {
                decls.push(None);
                self.bump();
                continue;
            }
            if self.check(")") {
                if decls.is_empty() || self.tokens[self.pos - 1].is_punct(",") {
                    decls.push(None);
                }
                self.bump();
                break;
            }
            if !self.looks_like_var_decl() {
                return Err(self.error_here("not a declaration"));
            }
            decls.push(Some(self.parse_var_decl()?));
            any = true;
            if self.eat(")") {
                break;
            }
            self.expect(",")?;
        }
        if !any || !self.check("=") {
            return Err(self.error_here("not a tuple declaration"));
        }
        self.bump();
        Ok(decls)
    }

    fn parse_var_decl(&mut self) -> PResult<VarDecl> {
        let ty = self.parse_type()?;
        let mut location = None;
        if let TokenKind::Ident(w) = &self.peek().kind {
            if is_location(w) {
                location = Some(w.clone());
                self.bump();
            }
        }
        let name = self.expect_ident()?;
        Ok(VarDecl { ty, location, name })
    }

    /// Lookahead: does a type followed by a declared name start here?
    fn looks_like_var_decl(&self) -> bool {
        let mut i = self.pos;
        let tok = |i: usize| &self.tokens[i.min(self.tokens.len() - 1)];
        match &tok(i).kind {
            TokenKind::Ident(w) if w == "mapping" => return true,
            TokenKind::Ident(w) if is_elementary(w) => {
                if w == "payable" {
                    return false;
                }
                i += 1;
                if tok(i).is_ident("payable") {
                    i += 1;
                }
            }
            TokenKind::Ident(w) if !is_reserved(w) => {
                i += 1;
                while tok(i).is_punct(".") && matches!(tok(i + 1).kind, TokenKind::Ident(_)) {
                    i += 2;
                }
            }
            _ => return false,
        }
        // array suffixes: only `[]` or `[number]` count as a type
        while tok(i).is_punct("[") {
            if tok(i + 1).is_punct("]") {
                i += 2;
            } else if matches!(tok(i + 1).kind, TokenKind::Number(_)) && tok(i + 2).is_punct("]") {
                i += 3;
            } else {
                return false;
            }
        }
        match &tok(i).kind {
            TokenKind::Ident(w) if is_location(w) => true,
            TokenKind::Ident(w) => !is_reserved(w),
            _ => false,
        }
    }

    fn parse_expr_or_assign(&mut self) -> PResult<StmtKind> {
        let target = self.parse_expr()?;
        let op = match &self.peek().kind {
            TokenKind::Punct(p) => match *p {
                "=" => Some(AssignOp::Assign),
                "+=" => Some(AssignOp::Add),
                "-=" => Some(AssignOp::Sub),
                "*=" => Some(AssignOp::Mul),
                "/=" => Some(AssignOp::Div),
                "%=" => Some(AssignOp::Rem),
                "|=" => Some(AssignOp::BitOr),
                "&=" => Some(AssignOp::BitAnd),
                "^=" => Some(AssignOp::BitXor),
                "<<=" => Some(AssignOp::Shl),
                ">>=" => Some(AssignOp::Shr),
                _ => None,
            },
            _ => None,
        };
        match op {
            Some(op) => {
                self.bump();
                let value = self.parse_expr()?;
                Ok(StmtKind::Assign { target, op, value })
            }
            None => Ok(StmtKind::Expr(target)),
        }
    }

    // ---- expressions ----

    pub(crate) fn parse_expr(&mut self) -> PResult<Expr> {
        self.enter()?;
        let r = self.parse_conditional();
        self.leave();
        r
    }

    fn parse_conditional(&mut self) -> PResult<Expr> {
        let cond = self.parse_binary(1)?;
        if self.eat("?") {
            let then_expr = self.parse_expr()?;
            self.expect(":")?;
            let else_expr = self.parse_expr()?;
            let span = cond.span.to(else_expr.span);
            return Ok(Expr {
                kind: ExprKind::Conditional { cond: Box::new(cond), then_expr: Box::new(then_expr), else_expr: Box::new(else_expr) },
                span,
            });
        }
        Ok(cond)
    }

    fn peek_binop(&self) -> Option<BinaryOp> {
        let TokenKind::Punct(p) = &self.peek().kind else { return None };
        Some(match *p {
            "+" => BinaryOp::Add,
            "-" => BinaryOp::Sub,
            "*" => BinaryOp::Mul,
            "/" => BinaryOp::Div,
            "%" => BinaryOp::Rem,
            "**" => BinaryOp::Pow,
            "<" => BinaryOp::Lt,
            "<=" => BinaryOp::Le,
            ">" => BinaryOp::Gt,
            ">=" => BinaryOp::Ge,
            "==" => BinaryOp::Eq,
            "!=" => BinaryOp::Ne,
            "&&" => BinaryOp::And,
            "||" => BinaryOp::Or,
            "&" => BinaryOp::BitAnd,
            "|" => BinaryOp::BitOr,
            "^" => BinaryOp::BitXor,
            "<<" => BinaryOp::Shl,
            ">>" => BinaryOp::Shr,
            _ => return None,
        })
    }

    fn parse_binary(&mut self, min_prec: u8) -> PResult<Expr> {
        self.enter()?;
        let result = (|| {
            let mut lhs = self.parse_unary()?;
            while let Some(op) = self.peek_binop() {
                let prec = op.precedence();
                if prec < min_prec {
                    break;
                }
                self.bump();
                // `**` is right associative
                let next = if op == BinaryOp::Pow { prec } else { prec + 1 };
                let rhs = self.parse_binary(next)?;
                let span = lhs.span.to(rhs.span);
                lhs = Expr { kind: ExprKind::Binary { op, lhs: Box::new(lhs), rhs: Box::new(rhs) }, span };
            }
            Ok(lhs)
        })();
        self.leave();
        result
    }

    fn parse_unary(&mut self) -> PResult<Expr> {
        let tok = self.peek().clone();
        let op = match &tok.kind {
            TokenKind::Punct("!") => Some(UnaryOp::Not),
            TokenKind::Punct("-") => Some(UnaryOp::Neg),
            TokenKind::Punct("~") => Some(UnaryOp::BitNot),
            TokenKind::Punct("++") => Some(UnaryOp::PreInc),
            TokenKind::Punct("--") => Some(UnaryOp::PreDec),
            TokenKind::Ident(w) if w == "delete" => Some(UnaryOp::Delete),
            _ => None,
        };
        if let Some(op) = op {
            self.bump();
            self.enter()?;
            let operand = self.parse_unary();
            self.leave();
            let operand = operand?;
            let span = tok.span.to(operand.span);
            return Ok(Expr { kind: ExprKind::Unary { op, operand: Box::new(operand) }, span });
        }
        self.parse_postfix()
    }

    fn parse_call_args(&mut self) -> PResult<Vec<Expr>> {
        self.expect("(")?;
        let mut args = Vec::new();
        if self.eat(")") {
            return Ok(args);
        }
        if self.check("{") {
            return Err(self.unsupported("named call arguments", self.peek().span));
        }
        loop {
            args.push(self.parse_expr()?);
            if self.eat(")") {
                break;
            }
            self.expect(",")?;
        }
        Ok(args)
    }

    fn parse_postfix(&mut self) -> PResult<Expr> {
        let mut e = self.parse_primary()?;
        let mut steps = 0usize;
        loop {
            steps += 1;
            if steps > MAX_DEPTH {
                return Err(Failure(Diagnostic::error(codes::NESTING, self.peek().span, "expression chain too long")));
            }
            let start = e.span.start;
            if self.eat(".") {
                let member = match &self.peek().kind {
                    TokenKind::Ident(name) => {
                        let name = name.clone();
                        let span = self.bump().span;
                        Ident { name, span }
                    }
                    _ => return Err(self.error_here("expected member name")),
                };
                let span = Span::new(start, member.span.end);
                e = Expr { kind: ExprKind::Member { base: Box::new(e), member }, span };
            } else if self.check("[") {
                self.bump();
                let index = if self.check("]") { None } else { Some(Box::new(self.parse_expr()?)) };
                if self.check(":") {
                    return Err(self.unsupported("array slice", self.peek().span));
                }
                self.expect("]")?;
                e = Expr { kind: ExprKind::Index { base: Box::new(e), index }, span: Span::new(start, self.prev_end()) };
            } else if self.check("{") && matches!(&self.peek_at(1).kind, TokenKind::Ident(_)) && self.peek_at(2).is_punct(":") {
                // call options: x.call{value: v}(...)
                self.bump();
                let mut options = Vec::new();
                loop {
                    let name = self.expect_ident()?;
                    self.expect(":")?;
                    let value = self.parse_expr()?;
                    options.push(NamedArg { name, value });
                    if self.eat("}") {
                        break;
                    }
                    self.expect(",")?;
                }
                let args = self.parse_call_args()?;
                e = Expr { kind: ExprKind::Call { callee: Box::new(e), options, args }, span: Span::new(start, self.prev_end()) };
            } else if self.check("(") {
                let args = self.parse_call_args()?;
                e = Expr {
                    kind: ExprKind::Call { callee: Box::new(e), options: Vec::new(), args },
                    span: Span::new(start, self.prev_end()),
                };
            } else if self.check("++") || self.check("--") {
                let op = if self.check("++") { UnaryOp::PostInc } else { UnaryOp::PostDec };
                self.bump();
                e = Expr { kind: ExprKind::Unary { op, operand: Box::new(e) }, span: Span::new(start, self.prev_end()) };
            } else {
                break;
            }
        }
        Ok(e)
    }

    fn parse_primary(&mut self) -> PResult<Expr> {
        let tok = self.peek().clone();
        let start = tok.span.start;
        match &tok.kind {
            TokenKind::Number(n) => {
                self.bump();
                Ok(Expr { kind: ExprKind::Number(n.clone()), span: tok.span })
            }
            TokenKind::Str(s) => {
                self.bump();
                let mut s = s.clone();
                // adjacent literals concatenate
                let mut end = tok.span.end;
                while let TokenKind::Str(more) = &self.peek().kind {
                    s.push_str(more);
                    end = self.bump().span.end;
                }
                Ok(Expr { kind: ExprKind::Str(s), span: Span::new(start, end) })
            }
            TokenKind::Ident(w) if w == "true" || w == "false" => {
                self.bump();
                Ok(Expr { kind: ExprKind::Bool(w == "true"), span: tok.span })
            }
            TokenKind::Ident(w) if w == "new" => {
                self.bump();
                let ty = self.parse_type()?;
                Ok(Expr { kind: ExprKind::New(ty), span: Span::new(start, self.prev_end()) })
            }
            TokenKind::Ident(w) if is_elementary(w) => {
                self.bump();
                let mut name = w.clone();
                if name == "address" && self.check_ident("payable") {
                    self.bump();
                    name = "address payable".into();
                }
                Ok(Expr { kind: ExprKind::ElementaryType(name), span: Span::new(start, self.prev_end()) })
            }
            TokenKind::Ident(w) if w == "type" || w == "this" || w == "super" || !is_reserved(w) => {
                self.bump();
                Ok(Expr { kind: ExprKind::Ident(w.clone()), span: tok.span })
            }
            TokenKind::Punct("(") => {
                self.bump();
                let mut elements: Vec<Option<Expr>> = Vec::new();
                loop {
                    if self.check(",") {
                        elements.push(None);
                        self.bump();
                        continue;
                    }
                    if self.check(")") {
                        if elements.is_empty() || self.tokens[self.pos - 1].is_punct(",") {
                            elements.push(None);
                        }
                        break;
                    }
                    elements.push(Some(self.parse_expr()?));
                    if self.check(")") {
                        break;
                    }
                    self.expect(",")?;
                }
                self.expect(")")?;
                let span = Span::new(start, self.prev_end());
                if elements.len() == 1 {
                    if let Some(Some(mut inner)) = elements.pop() {
                        inner.span = span;
                        return Ok(inner);
                    }
                    return Err(Failure(Diagnostic::error(codes::SYNTAX_ERROR, span, "empty parentheses")));
                }
                Ok(Expr { kind: ExprKind::Tuple { elements, inline_array: false }, span })
            }
            TokenKind::Punct("[") => {
                self.bump();
                let mut elements = Vec::new();
                if !self.check("]") {
                    loop {
                        elements.push(Some(self.parse_expr()?));
                        if self.check("]") {
                            break;
                        }
                        self.expect(",")?;
                    }
                }
                self.expect("]")?;
                Ok(Expr { kind: ExprKind::Tuple { elements, inline_array: true }, span: Span::new(start, self.prev_end()) })
            }
            _ => Err(self.error_here("expected expression")),
        }
    }

    // ---- post-parse checks ----

    /// View/pure functions must not assign state variables; offenders are excluded.
    fn check_read_only_functions(&mut self, decl: &mut ContractDecl) {
        let state: Vec<String> =
            decl.state_vars.iter().filter(|v| v.mutability == VarMutability::Mutable).map(|v| v.name.name.clone()).collect();
        let mut keep = Vec::with_capacity(decl.functions.len());
        for f in std::mem::take(&mut decl.functions) {
            if f.mutability.is_read_only() {
                if let Some(body) = &f.body {
                    let mut locals: Vec<String> =
                        f.params.iter().chain(&f.returns).filter_map(|p| p.name.as_ref().map(|n| n.name.clone())).collect();
                    if let Some(span) = find_state_write(&body.stmts, &state, &mut locals) {
                        self.diagnostics.push(Diagnostic::error(
                            codes::VIEW_STATE_WRITE,
                            span,
                            format!("{} function `{}` assigns a state variable", f.mutability.as_str(), f.name.name),
                        ));
                        decl.excluded_functions.push(f.name.clone());
                        continue;
                    }
                }
            }
            keep.push(f);
        }
        decl.functions = keep;
    }
}

fn root_ident(e: &Expr) -> Option<&str> {
    match &e.kind {
        ExprKind::Ident(n) => Some(n),
        ExprKind::Member { base, .. } | ExprKind::Index { base, .. } => root_ident(base),
        _ => None,
    }
}

fn find_state_write(stmts: &[Stmt], state: &[String], locals: &mut Vec<String>) -> Option<Span> {
    for s in stmts {
        if let Some(span) = stmt_state_write(s, state, locals) {
            return Some(span);
        }
    }
    None
}

fn expr_state_write(e: &Expr, state: &[String], locals: &[String]) -> Option<Span> {
    let is_state = |t: &Expr| root_ident(t).is_some_and(|r| state.iter().any(|s| s == r) && !locals.iter().any(|l| l == r));
    match &e.kind {
        ExprKind::Unary { op, operand } => {
            if matches!(op, UnaryOp::PreInc | UnaryOp::PreDec | UnaryOp::PostInc | UnaryOp::PostDec | UnaryOp::Delete) && is_state(operand)
            {
                Some(e.span)
            } else {
                expr_state_write(operand, state, locals)
            }
        }
        ExprKind::Binary { lhs, rhs, .. } => expr_state_write(lhs, state, locals).or_else(|| expr_state_write(rhs, state, locals)),
        ExprKind::Call { callee, args, .. } => {
            expr_state_write(callee, state, locals).or_else(|| args.iter().find_map(|a| expr_state_write(a, state, locals)))
        }
        _ => None,
    }
}

fn stmt_state_write(s: &Stmt, state: &[String], locals: &mut Vec<String>) -> Option<Span> {
    let is_state =
        |t: &Expr, locals: &[String]| root_ident(t).is_some_and(|r| state.iter().any(|s| s == r) && !locals.iter().any(|l| l == r));
    match &s.kind {
        StmtKind::Assign { target, .. } => {
            let targets: Vec<&Expr> = match &target.kind {
                ExprKind::Tuple { elements, .. } => elements.iter().flatten().collect(),
                _ => vec![target],
            };
            if targets.iter().any(|t| is_state(t, locals)) {
                Some(s.span)
            } else {
                None
            }
        }
        StmtKind::VarDecl { decl, .. } => {
            locals.push(decl.name.name.clone());
            None
        }
        StmtKind::TupleDecl { decls, .. } => {
            locals.extend(decls.iter().flatten().map(|d| d.name.name.clone()));
            None
        }
        StmtKind::Block(b) => find_state_write(&b.stmts, state, locals),
        StmtKind::If { then_branch, else_branch, .. } => {
            stmt_state_write(then_branch, state, locals).or_else(|| else_branch.as_ref().and_then(|e| stmt_state_write(e, state, locals)))
        }
        StmtKind::For { init, update, body, .. } => init
            .as_ref()
            .and_then(|i| stmt_state_write(i, state, locals))
            .or_else(|| update.as_ref().and_then(|u| stmt_state_write(u, state, locals)))
            .or_else(|| stmt_state_write(body, state, locals)),
        StmtKind::While { body, .. } => stmt_state_write(body, state, locals),
        StmtKind::Expr(e) => expr_state_write(e, state, locals),
        _ => None,
    }
}

/// Parse a whole file. Never panics; all problems become diagnostics.
pub fn parse_source(text: &str, path: &str) -> SourceUnit {
    Parser::new(text).parse_source_unit(path)
}

fn trailing_garbage(p: &Parser<'_>) -> Option<Diagnostic> {
    if p.at_eof() {
        None
    } else {
        Some(Diagnostic::error(codes::SYNTAX_ERROR, p.peek().span, format!("unexpected {}", p.peek().describe())))
    }
}

/// Parse a single expression, e.g. a span sliced out of a larger file.
pub fn parse_expression(text: &str) -> Result<Expr, Diagnostic> {
    let mut p = Parser::new(text);
    let e = p.parse_expr().map_err(|Failure(d)| d)?;
    match trailing_garbage(&p) {
        Some(d) => Err(d),
        None => Ok(e),
    }
}

/// Parse a single statement.
pub fn parse_statement(text: &str) -> Result<Stmt, Diagnostic> {
    let mut p = Parser::new(text);
    let s = p.parse_stmt().map_err(|Failure(d)| d)?;
    match trailing_garbage(&p) {
        Some(d) => Err(d),
        None => Ok(s),
    }
}
