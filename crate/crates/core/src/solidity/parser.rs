//! Declaration-level parser over the token stream.
//!
//! Produces per-file raw records (contracts, functions, modifiers, state
//! variables, call sites). Name resolution happens later in
//! [`super::project`] once every file is known.

use super::lexer::{self, LexError, Token, TokenKind};
use super::model::{ContractKind, Param, Visibility};
use super::version::VersionReq;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SyntaxError {
    pub line: usize,
    pub column: usize,
    pub message: String,
}

impl From<LexError> for SyntaxError {
    fn from(e: LexError) -> Self {
        SyntaxError {
            line: e.line,
            column: e.column,
            message: e.message,
        }
    }
}

/// How a call site names its target.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Qualifier {
    /// `f(...)`
    None,
    /// `this.f(...)`
    This,
    /// `super.f(...)`
    Super,
    /// `x.f(...)` where `x` is a plain identifier
    Ident(String),
    /// `expr.f(...)` for any other receiver
    Expr,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CallSite {
    pub qualifier: Qualifier,
    pub name: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawSpan {
    pub start_byte: usize,
    pub end_byte: usize,
    pub start_line: usize,
    pub end_line: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawFunction {
    pub name: String,
    pub visibility: Option<Visibility>,
    pub mutability: Option<String>,
    pub params: Vec<Param>,
    pub returns: Vec<Param>,
    /// Every `ident(...)`-style invocation in the header; may include base
    /// constructor calls, which are filtered during resolution.
    pub invocations: Vec<String>,
    pub span: RawSpan,
    pub calls: Vec<CallSite>,
    pub is_constructor: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawModifier {
    pub name: String,
    pub params: Vec<Param>,
    pub span: RawSpan,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawStateVar {
    pub name: String,
    pub ty: String,
    pub visibility: Visibility,
    pub constant: bool,
    pub decl_text: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawContract {
    pub name: String,
    pub kind: ContractKind,
    pub bases: Vec<String>,
    pub span: RawSpan,
    pub functions: Vec<RawFunction>,
    pub modifiers: Vec<RawModifier>,
    pub state_vars: Vec<RawStateVar>,
    pub structs: Vec<String>,
    pub enums: Vec<String>,
    pub using_libraries: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ParsedFile {
    pub pragma: Option<VersionReq>,
    pub contracts: Vec<RawContract>,
    pub free_functions: Vec<RawFunction>,
    pub structs: Vec<String>,
    pub enums: Vec<String>,
}

const CALL_EXCLUDED_PREV: &[&str] = &["emit", "new", "revert", "function", "event", "error", "modifier"];
const LOW_LEVEL: &[&str] = &["call", "delegatecall", "staticcall", "send"];

pub fn parse_file(src: &str) -> Result<ParsedFile, SyntaxError> {
    let tokens = lexer::tokenize(src)?;
    let mut p = Parser {
        src,
        toks: &tokens,
        pos: 0,
        line_starts: lexer::line_starts(src),
    };
    p.file()
}

struct Parser<'a> {
    src: &'a str,
    toks: &'a [Token],
    pos: usize,
    line_starts: Vec<usize>,
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<&'a Token> {
        self.toks.get(self.pos)
    }

    fn peek_at(&self, off: usize) -> Option<&'a Token> {
        self.toks.get(self.pos + off)
    }

    fn text(&self, t: &Token) -> &'a str {
        t.text(self.src)
    }

    fn peek_word(&self) -> Option<&'a str> {
        self.peek().filter(|t| t.kind == TokenKind::Ident).map(|t| self.text(t))
    }

    fn bump(&mut self) -> Option<&'a Token> {
        let t = self.toks.get(self.pos);
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn error_at(&self, byte: usize, message: impl Into<String>) -> SyntaxError {
        let line = lexer::line_of(&self.line_starts, byte);
        SyntaxError {
            line,
            column: byte - self.line_starts[line - 1] + 1,
            message: message.into(),
        }
    }

    fn error_here(&self, message: impl Into<String>) -> SyntaxError {
        let byte = self.peek().map_or(self.src.len(), |t| t.start);
        self.error_at(byte, message)
    }

    fn expect_ident(&mut self, what: &str) -> Result<&'a Token, SyntaxError> {
        match self.peek() {
            Some(t) if t.kind == TokenKind::Ident => {
                self.pos += 1;
                Ok(t)
            }
            _ => Err(self.error_here(format!("expected {what}"))),
        }
    }

    fn expect_punct(&mut self, c: char) -> Result<&'a Token, SyntaxError> {
        match self.peek() {
            Some(t) if t.is_punct(c) => {
                self.pos += 1;
                Ok(t)
            }
            _ => Err(self.error_here(format!("expected `{c}`"))),
        }
    }

    /// With the cursor on an opening bracket, returns the index of its
    /// matching closer and leaves the cursor just past it.
    fn skip_balanced(&mut self) -> Result<usize, SyntaxError> {
        let open_tok = self.peek().ok_or_else(|| self.error_here("unexpected end of input"))?;
        let mut stack = Vec::new();
        loop {
            let t = self
                .bump()
                .ok_or_else(|| self.error_at(open_tok.start, "unbalanced brackets"))?;
            match t.kind {
                TokenKind::Punct(c @ ('(' | '[' | '{')) => stack.push(c),
                TokenKind::Punct(c @ (')' | ']' | '}')) => {
                    let want = match c {
                        ')' => '(',
                        ']' => '[',
                        _ => '{',
                    };
                    if stack.pop() != Some(want) {
                        return Err(self.error_at(t.start, format!("mismatched `{c}`")));
                    }
                    if stack.is_empty() {
                        return Ok(self.pos - 1);
                    }
                }
                _ => {}
            }
        }
    }

    /// Advances past the next `;` at bracket depth zero.
    fn skip_statement(&mut self) -> Result<(), SyntaxError> {
        while let Some(t) = self.peek() {
            match t.kind {
                TokenKind::Punct(';') => {
                    self.pos += 1;
                    return Ok(());
                }
                TokenKind::Punct('(' | '[' | '{') => {
                    self.skip_balanced()?;
                }
                TokenKind::Punct('}') => return Err(self.error_here("unexpected `}`")),
                _ => self.pos += 1,
            }
        }
        Err(self.error_here("unexpected end of input, expected `;`"))
    }

    fn span(&self, start: &Token, end: &Token) -> RawSpan {
        RawSpan {
            start_byte: start.start,
            end_byte: end.end,
            start_line: start.line,
            end_line: lexer::line_of(&self.line_starts, end.end - 1),
        }
    }

    fn file(&mut self) -> Result<ParsedFile, SyntaxError> {
        let mut out = ParsedFile::default();
        while let Some(t) = self.peek() {
            let word = if t.kind == TokenKind::Ident { self.text(t) } else { "" };
            match word {
                "pragma" => {
                    let start = self.pos;
                    self.skip_statement()?;
                    if out.pragma.is_none() && self.toks.get(start + 1).map(|t| self.text(t)) == Some("solidity") {
                        let from = self.toks[start + 1].end;
                        let to = self.toks[self.pos - 1].start;
                        out.pragma = Some(VersionReq(self.src[from..to].trim().to_string()));
                    }
                }
                "abstract" | "contract" | "interface" | "library" => out.contracts.push(self.contract()?),
                "function" => {
                    if let Some(f) = self.function(None)? {
                        out.free_functions.push(f);
                    }
                }
                "struct" | "enum" => {
                    self.pos += 1;
                    let name = self.expect_ident("type name")?.text(self.src).to_string();
                    if word == "struct" {
                        out.structs.push(name);
                    } else {
                        out.enums.push(name);
                    }
                    self.skip_balanced()?;
                }
                _ if t.is_punct(';') => self.pos += 1,
                _ => self.skip_statement()?,
            }
        }
        Ok(out)
    }

    fn contract(&mut self) -> Result<RawContract, SyntaxError> {
        let start_tok = self.bump().expect("caller peeked");
        let mut kind_word = self.text(start_tok);
        if kind_word == "abstract" {
            kind_word = self.expect_ident("`contract`")?.text(self.src);
        }
        let kind = match (self.text(start_tok), kind_word) {
            ("abstract", _) => ContractKind::Abstract,
            (_, "interface") => ContractKind::Interface,
            (_, "library") => ContractKind::Library,
            _ => ContractKind::Contract,
        };
        let name = self.expect_ident("contract name")?.text(self.src).to_string();
        let mut bases = Vec::new();
        if self.peek_word() == Some("is") {
            self.pos += 1;
            loop {
                let mut base = self.expect_ident("base contract")?.text(self.src).to_string();
                while self.peek().is_some_and(|t| t.is_punct('.')) {
                    self.pos += 1;
                    base = self.expect_ident("base contract")?.text(self.src).to_string();
                }
                bases.push(base);
                if self.peek().is_some_and(|t| t.is_punct('(')) {
                    self.skip_balanced()?;
                }
                if self.peek().is_some_and(|t| t.is_punct(',')) {
                    self.pos += 1;
                } else {
                    break;
                }
            }
        }
        self.expect_punct('{')?;
        let mut c = RawContract {
            name,
            kind,
            bases,
            span: self.span(start_tok, start_tok),
            functions: Vec::new(),
            modifiers: Vec::new(),
            state_vars: Vec::new(),
            structs: Vec::new(),
            enums: Vec::new(),
            using_libraries: Vec::new(),
        };
        loop {
            let t = self.peek().ok_or_else(|| self.error_at(start_tok.start, "unterminated contract body"))?;
            if t.is_punct('}') {
                self.pos += 1;
                c.span = self.span(start_tok, t);
                return Ok(c);
            }
            let word = if t.kind == TokenKind::Ident { self.text(t) } else { "" };
            let next_is_paren = self.peek_at(1).is_some_and(|n| n.is_punct('('));
            match word {
                "function" => {
                    if let Some(f) = self.function(Some(&c.name))? {
                        c.functions.push(f);
                    }
                }
                "constructor" => {
                    if let Some(f) = self.function(Some(&c.name))? {
                        c.functions.push(f);
                    }
                }
                "fallback" | "receive" if next_is_paren => {
                    if let Some(f) = self.function(Some(&c.name))? {
                        c.functions.push(f);
                    }
                }
                "modifier" => {
                    if let Some(m) = self.modifier()? {
                        c.modifiers.push(m);
                    }
                }
                "struct" | "enum" => {
                    self.pos += 1;
                    let name = self.expect_ident("type name")?.text(self.src).to_string();
                    if word == "struct" {
                        c.structs.push(name);
                    } else {
                        c.enums.push(name);
                    }
                    self.skip_balanced()?;
                }
                "using" => {
                    self.pos += 1;
                    if let Some(t) = self.peek().filter(|t| t.kind == TokenKind::Ident) {
                        let mut lib = self.text(t).to_string();
                        let mut i = 1;
                        while self.peek_at(i).is_some_and(|t| t.is_punct('.')) {
                            if let Some(n) = self.peek_at(i + 1) {
                                lib = self.text(n).to_string();
                            }
                            i += 2;
                        }
                        c.using_libraries.push(lib);
                    }
                    self.skip_statement()?;
                }
                "event" | "error" | "type" => self.skip_statement()?,
                _ if t.is_punct(';') => self.pos += 1,
                _ => {
                    let from = self.pos;
                    self.skip_statement()?;
                    if let Some(v) = self.state_var(from, self.pos - 1) {
                        c.state_vars.push(v);
                    }
                }
            }
        }
    }

    /// Parses a type starting at token `i`, returning the index one past it.
    fn type_end(&self, mut i: usize, end: usize) -> Option<usize> {
        let t = self.toks.get(i).filter(|_| i < end)?;
        if t.kind != TokenKind::Ident {
            return None;
        }
        let word = self.text(t);
        if word == "mapping" {
            let open = i + 1;
            if !self.toks.get(open)?.is_punct('(') {
                return None;
            }
            let mut depth = 0usize;
            i = open;
            while i < end {
                let t = &self.toks[i];
                if t.is_punct('(') {
                    depth += 1;
                } else if t.is_punct(')') {
                    depth -= 1;
                    if depth == 0 {
                        break;
                    }
                }
                i += 1;
            }
            i += 1;
        } else {
            i += 1;
            while i + 1 < end && self.toks[i].is_punct('.') && self.toks[i + 1].kind == TokenKind::Ident {
                i += 2;
            }
            if word == "address" && i < end && self.text(&self.toks[i]) == "payable" {
                i += 1;
            }
        }
        while i < end && self.toks[i].is_punct('[') {
            while i < end && !self.toks[i].is_punct(']') {
                i += 1;
            }
            i += 1;
        }
        (i <= end).then_some(i)
    }

    /// `tokens[from..semi]` is a declaration ending in `;` at index `semi`.
    fn state_var(&self, from: usize, semi: usize) -> Option<RawStateVar> {
        let eq = (from..semi).find(|&i| self.toks[i].is_punct('=')).unwrap_or(semi);
        let ty_end = self.type_end(from, eq)?;
        let name_tok = &self.toks[eq.checked_sub(1)?];
        if name_tok.kind != TokenKind::Ident || eq - 1 < ty_end {
            return None;
        }
        let mut visibility = Visibility::Internal;
        let mut constant = false;
        let mut i = ty_end;
        while i < eq - 1 {
            let t = &self.toks[i];
            match self.text(t) {
                w if Visibility::from_keyword(w).is_some() => visibility = Visibility::from_keyword(w)?,
                "constant" | "immutable" => constant = true,
                "override" | "transient" => {}
                _ if t.is_punct('(') || t.is_punct(')') || t.is_punct(',') || t.kind == TokenKind::Ident => {}
                _ => return None,
            }
            i += 1;
        }
        let first = &self.toks[from];
        Some(RawStateVar {
            name: self.text(name_tok).to_string(),
            ty: self.src[first.start..self.toks[ty_end - 1].end].to_string(),
            visibility,
            constant,
            decl_text: self.src[first.start..self.toks[semi].end].to_string(),
        })
    }

    /// Parses the parameter list whose `(` is at the cursor.
    fn params(&mut self) -> Result<Vec<Param>, SyntaxError> {
        let open = self.pos;
        let close = self.skip_balanced()?;
        let mut out = Vec::new();
        let mut start = open + 1;
        let mut depth = 0i32;
        for i in open + 1..=close {
            let t = &self.toks[i];
            match t.kind {
                TokenKind::Punct('(' | '[') => depth += 1,
                TokenKind::Punct(')' | ']') if i != close => depth -= 1,
                _ => {}
            }
            if (i == close || (t.is_punct(',') && depth == 0)) && i > start {
                out.push(self.param(start, i));
                start = i + 1;
            }
        }
        Ok(out)
    }

    fn param(&self, from: usize, to: usize) -> Param {
        let ty_end = self.type_end(from, to).unwrap_or(to);
        let ty = self.src[self.toks[from].start..self.toks[ty_end.max(from + 1) - 1].end].to_string();
        let name = (ty_end..to)
            .map(|i| self.text(&self.toks[i]))
            .rfind(|w| !matches!(*w, "memory" | "storage" | "calldata" | "indexed" | "payable"))
            .unwrap_or("")
            .to_string();
        Param { name, ty }
    }

    /// Parses `function`/`constructor`/`fallback`/`receive` at the cursor.
    /// Returns `None` for declarations without a body.
    fn function(&mut self, contract: Option<&str>) -> Result<Option<RawFunction>, SyntaxError> {
        let start_tok = self.bump().expect("caller peeked");
        let kw = self.text(start_tok);
        let name = if kw == "function" {
            match self.peek() {
                Some(t) if t.kind == TokenKind::Ident => {
                    self.pos += 1;
                    self.text(t).to_string()
                }
                // pre-0.6 unnamed fallback
                _ => "fallback".to_string(),
            }
        } else {
            kw.to_string()
        };
        let is_constructor = kw == "constructor" || contract == Some(name.as_str());
        let name = if is_constructor { "constructor".to_string() } else { name };
        if !self.peek().is_some_and(|t| t.is_punct('(')) {
            return Err(self.error_here("expected parameter list"));
        }
        let params = self.params()?;
        let mut visibility = None;
        let mut mutability = None;
        let mut returns = Vec::new();
        let mut invocations = Vec::new();
        loop {
            let t = self.peek().ok_or_else(|| self.error_here("unexpected end of function header"))?;
            if t.is_punct('{') || t.is_punct(';') {
                break;
            }
            if t.kind != TokenKind::Ident {
                return Err(self.error_here("unexpected token in function header"));
            }
            let word = self.text(t);
            self.pos += 1;
            match word {
                w if Visibility::from_keyword(w).is_some() => visibility = Visibility::from_keyword(w),
                "pure" | "view" | "payable" | "constant" => mutability = Some(word.to_string()),
                "virtual" => {}
                "override" => {
                    if self.peek().is_some_and(|t| t.is_punct('(')) {
                        self.skip_balanced()?;
                    }
                }
                "returns" => returns = self.params()?,
                _ => {
                    let mut name = word.to_string();
                    while self.peek().is_some_and(|t| t.is_punct('.')) {
                        self.pos += 1;
                        name = self.expect_ident("modifier name")?.text(self.src).to_string();
                    }
                    if self.peek().is_some_and(|t| t.is_punct('(')) {
                        self.skip_balanced()?;
                    }
                    invocations.push(name);
                }
            }
        }
        let body_open = self.pos;
        if self.peek().is_some_and(|t| t.is_punct(';')) {
            self.pos += 1;
            return Ok(None);
        }
        let close = self.skip_balanced()?;
        let calls = self.call_sites(body_open + 1, close);
        Ok(Some(RawFunction {
            name,
            visibility,
            mutability,
            params,
            returns,
            invocations,
            span: self.span(start_tok, &self.toks[close]),
            calls,
            is_constructor,
        }))
    }

    fn modifier(&mut self) -> Result<Option<RawModifier>, SyntaxError> {
        let start_tok = self.bump().expect("caller peeked");
        let name = self.expect_ident("modifier name")?.text(self.src).to_string();
        let params = if self.peek().is_some_and(|t| t.is_punct('(')) {
            self.params()?
        } else {
            Vec::new()
        };
        loop {
            let t = self.peek().ok_or_else(|| self.error_here("unexpected end of modifier header"))?;
            if t.is_punct('{') {
                break;
            }
            if t.is_punct(';') {
                self.pos += 1;
                return Ok(None);
            }
            if t.is_punct('(') {
                self.skip_balanced()?;
            } else {
                self.pos += 1;
            }
        }
        let close = self.skip_balanced()?;
        Ok(Some(RawModifier {
            name,
            params,
            span: self.span(start_tok, &self.toks[close]),
        }))
    }

    /// Identifier-followed-by-argument-list occurrences in `toks[from..to]`,
    /// skipping inline assembly.
    fn call_sites(&self, from: usize, to: usize) -> Vec<CallSite> {
        let mut out = Vec::new();
        let mut i = from;
        while i < to {
            let t = &self.toks[i];
            if t.kind == TokenKind::Ident && self.text(t) == "assembly" {
                // assembly ["dialect"] [(flags)] { ... }
                let mut j = i + 1;
                while j < to && !self.toks[j].is_punct('{') {
                    j += 1;
                }
                let mut depth = 0usize;
                while j < to {
                    if self.toks[j].is_punct('{') {
                        depth += 1;
                    } else if self.toks[j].is_punct('}') {
                        depth -= 1;
                        if depth == 0 {
                            break;
                        }
                    }
                    j += 1;
                }
                i = j + 1;
                continue;
            }
            if t.kind == TokenKind::Ident && self.toks.get(i + 1).is_some_and(|n| n.is_punct('(')) {
                let name = self.text(t);
                let prev = i.checked_sub(1).filter(|&p| p >= from).map(|p| &self.toks[p]);
                let excluded = prev.is_some_and(|p| p.kind == TokenKind::Ident && CALL_EXCLUDED_PREV.contains(&self.text(p)));
                if !excluded {
                    let qualifier = match prev {
                        Some(p) if p.is_punct('.') => {
                            match i.checked_sub(2).filter(|&q| q >= from).map(|q| &self.toks[q]) {
                                Some(q) if q.kind == TokenKind::Ident => match self.text(q) {
                                    "this" => Qualifier::This,
                                    "super" => Qualifier::Super,
                                    w => Qualifier::Ident(w.to_string()),
                                },
                                _ => Qualifier::Expr,
                            }
                        }
                        _ => Qualifier::None,
                    };
                    let low_level = qualifier != Qualifier::None && LOW_LEVEL.contains(&name);
                    if !low_level {
                        out.push(CallSite {
                            qualifier,
                            name: name.to_string(),
                        });
                    }
                }
            }
            i += 1;
        }
        out
    }
}
