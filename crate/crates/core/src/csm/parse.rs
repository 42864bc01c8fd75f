use std::collections::BTreeSet;

use super::ast::*;
use super::diag::{DiagCode, Diagnostic};
use crate::geometry::Vec2;

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Num(f64),
    Str(String),
    LBrace,
    RBrace,
    LParen,
    RParen,
    Semi,
    Comma,
    Arrow,
    Assign,
    EqEq,
    NotEq,
    Lt,
    Le,
    Gt,
    Ge,
    Plus,
    Minus,
    Star,
    Slash,
    Dot,
    Bang,
    AndAnd,
    OrOr,
    Eof,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("identifier `{s}`"),
            Tok::Num(n) => format!("number `{n}`"),
            Tok::Str(s) => format!("string \"{s}\""),
            Tok::Eof => "end of input".to_string(),
            other => format!("`{}`", other.symbol()),
        }
    }

    fn symbol(&self) -> &'static str {
        match self {
            Tok::LBrace => "{",
            Tok::RBrace => "}",
            Tok::LParen => "(",
            Tok::RParen => ")",
            Tok::Semi => ";",
            Tok::Comma => ",",
            Tok::Arrow => "->",
            Tok::Assign => "=",
            Tok::EqEq => "==",
            Tok::NotEq => "!=",
            Tok::Lt => "<",
            Tok::Le => "<=",
            Tok::Gt => ">",
            Tok::Ge => ">=",
            Tok::Plus => "+",
            Tok::Minus => "-",
            Tok::Star => "*",
            Tok::Slash => "/",
            Tok::Dot => ".",
            Tok::Bang => "!",
            Tok::AndAnd => "&&",
            Tok::OrOr => "||",
            _ => "?",
        }
    }
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    span: Span,
}

fn syntax(span: Span, message: impl Into<String>) -> Diagnostic {
    Diagnostic::error(DiagCode::Syntax, span, message)
}

fn lex(text: &str) -> Result<Vec<Token>, Diagnostic> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1u32, 1u32);

    while i < chars.len() {
        let c = chars[i];
        let span = Span { line, col };
        let bump = |i: &mut usize, col: &mut u32, n: usize| {
            *i += n;
            *col += n as u32;
        };
        if c == '\n' {
            i += 1;
            line += 1;
            col = 1;
            continue;
        }
        if c.is_whitespace() {
            bump(&mut i, &mut col, 1);
            continue;
        }
        if c == '#' {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
            }
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            col += (i - start) as u32;
            out.push(Token {
                tok: Tok::Ident(chars[start..i].iter().collect()),
                span,
            });
            continue;
        }
        if c.is_ascii_digit() {
            let start = i;
            while i < chars.len() && chars[i].is_ascii_digit() {
                i += 1;
            }
            // A dot belongs to the number only when a digit follows, so `1.x` stays a field access.
            if i + 1 < chars.len() && chars[i] == '.' && chars[i + 1].is_ascii_digit() {
                i += 1;
                while i < chars.len() && chars[i].is_ascii_digit() {
                    i += 1;
                }
            }
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let mut j = i + 1;
                if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                    j += 1;
                }
                if j < chars.len() && chars[j].is_ascii_digit() {
                    while j < chars.len() && chars[j].is_ascii_digit() {
                        j += 1;
                    }
                    i = j;
                }
            }
            let literal: String = chars[start..i].iter().collect();
            col += (i - start) as u32;
            let value: f64 = literal
                .parse()
                .map_err(|_| syntax(span, format!("malformed number `{literal}`")))?;
            if !value.is_finite() {
                return Err(syntax(span, format!("number `{literal}` is out of range")));
            }
            out.push(Token {
                tok: Tok::Num(value),
                span,
            });
            continue;
        }
        if c == '"' {
            let start = i + 1;
            let mut j = start;
            while j < chars.len() && chars[j] != '"' && chars[j] != '\n' {
                j += 1;
            }
            if j >= chars.len() || chars[j] != '"' {
                return Err(syntax(span, "unterminated string"));
            }
            out.push(Token {
                tok: Tok::Str(chars[start..j].iter().collect()),
                span,
            });
            col += (j + 1 - i) as u32;
            i = j + 1;
            continue;
        }
        let next = chars.get(i + 1).copied();
        let (tok, len) = match (c, next) {
            ('-', Some('>')) => (Tok::Arrow, 2),
            ('=', Some('=')) => (Tok::EqEq, 2),
            ('!', Some('=')) => (Tok::NotEq, 2),
            ('<', Some('=')) => (Tok::Le, 2),
            ('>', Some('=')) => (Tok::Ge, 2),
            ('&', Some('&')) => (Tok::AndAnd, 2),
            ('|', Some('|')) => (Tok::OrOr, 2),
            ('{', _) => (Tok::LBrace, 1),
            ('}', _) => (Tok::RBrace, 1),
            ('(', _) => (Tok::LParen, 1),
            (')', _) => (Tok::RParen, 1),
            (';', _) => (Tok::Semi, 1),
            (',', _) => (Tok::Comma, 1),
            ('=', _) => (Tok::Assign, 1),
            ('<', _) => (Tok::Lt, 1),
            ('>', _) => (Tok::Gt, 1),
            ('+', _) => (Tok::Plus, 1),
            ('-', _) => (Tok::Minus, 1),
            ('*', _) => (Tok::Star, 1),
            ('/', _) => (Tok::Slash, 1),
            ('.', _) => (Tok::Dot, 1),
            ('!', _) => (Tok::Bang, 1),
            _ => return Err(syntax(span, format!("unexpected character `{c}`"))),
        };
        out.push(Token { tok, span });
        bump(&mut i, &mut col, len);
    }
    out.push(Token {
        tok: Tok::Eof,
        span: Span { line, col },
    });
    Ok(out)
}

const KEYWORDS: &[&str] = &[
    "machine",
    "initial",
    "state",
    "on",
    "if",
    "do",
    "input",
    "var",
    "pos",
    "and",
    "or",
    "not",
    "true",
    "false",
    "payload",
    "pi",
    "set_wheels",
    "emit",
    "send",
    "pick",
    "drop",
    ANY,
];

pub fn is_keyword(name: &str) -> bool {
    KEYWORDS.contains(&name) || Func::from_name(name).is_some()
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
}

type PResult<T> = Result<T, Diagnostic>;

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn span(&self) -> Span {
        self.toks[self.pos].span
    }

    fn advance(&mut self) -> Token {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn unexpected<T>(&self, wanted: &str) -> PResult<T> {
        Err(syntax(
            self.span(),
            format!("expected {wanted}, found {}", self.peek().describe()),
        ))
    }

    fn expect(&mut self, tok: Tok) -> PResult<Span> {
        if *self.peek() == tok {
            Ok(self.advance().span)
        } else {
            self.unexpected(&format!("`{}`", tok.symbol()))
        }
    }

    fn eat(&mut self, tok: &Tok) -> bool {
        if self.peek() == tok {
            self.advance();
            true
        } else {
            false
        }
    }

    fn is_word(&self, word: &str) -> bool {
        matches!(self.peek(), Tok::Ident(s) if s == word)
    }

    fn eat_word(&mut self, word: &str) -> bool {
        if self.is_word(word) {
            self.advance();
            true
        } else {
            false
        }
    }

    fn expect_word(&mut self, word: &str) -> PResult<Span> {
        if self.is_word(word) {
            Ok(self.advance().span)
        } else {
            self.unexpected(&format!("`{word}`"))
        }
    }

    /// A user-chosen name: any identifier that is not reserved.
    fn name(&mut self, what: &str) -> PResult<(String, Span)> {
        match self.peek().clone() {
            Tok::Ident(s) if !is_keyword(&s) => {
                let span = self.advance().span;
                Ok((s, span))
            }
            _ => self.unexpected(what),
        }
    }

    fn signed_number(&mut self) -> PResult<f64> {
        let negative = self.eat(&Tok::Minus);
        match *self.peek() {
            Tok::Num(n) => {
                self.advance();
                Ok(if negative { -n } else { n })
            }
            _ => self.unexpected("a number"),
        }
    }

    fn document(&mut self) -> PResult<CsmDocument> {
        let mut doc = CsmDocument::default();
        loop {
            match self.peek() {
                Tok::Eof => return Ok(doc),
                Tok::Ident(w) if w == "machine" => doc.machines.push(self.machine()?),
                Tok::Ident(w) if w == "input" => {
                    self.advance();
                    loop {
                        let (name, _) = self.name("an event name")?;
                        doc.inputs.push(name);
                        if !self.eat(&Tok::Comma) {
                            break;
                        }
                    }
                    self.expect(Tok::Semi)?;
                }
                Tok::Ident(w) if w == "var" => {
                    self.advance();
                    let (name, span) = self.name("a variable name")?;
                    self.expect(Tok::Assign)?;
                    let value = self.signed_number()?;
                    self.expect(Tok::Semi)?;
                    doc.vars.push(VarDecl {
                        name,
                        init: VarInit::Scalar(value),
                        span,
                    });
                }
                Tok::Ident(w) if w == "pos" => {
                    self.advance();
                    let (name, span) = self.name("a variable name")?;
                    self.expect(Tok::Assign)?;
                    self.expect(Tok::LParen)?;
                    let x = self.signed_number()?;
                    self.expect(Tok::Comma)?;
                    let y = self.signed_number()?;
                    self.expect(Tok::RParen)?;
                    self.expect(Tok::Semi)?;
                    doc.vars.push(VarDecl {
                        name,
                        init: VarInit::Position(Vec2::new(x, y)),
                        span,
                    });
                }
                _ => return self.unexpected("`machine`, `input`, `var` or `pos`"),
            }
        }
    }

    fn machine(&mut self) -> PResult<Machine> {
        let span = self.expect_word("machine")?;
        let (name, _) = self.name("a machine name")?;
        self.expect(Tok::LBrace)?;
        let mut initial: Option<(String, Span)> = None;
        let mut states = Vec::new();
        loop {
            match self.peek() {
                Tok::RBrace => {
                    self.advance();
                    break;
                }
                Tok::Ident(w) if w == "initial" => {
                    let at = self.advance().span;
                    let (s, _) = self.name("a state name")?;
                    self.expect(Tok::Semi)?;
                    if initial.is_some() {
                        return Err(syntax(at, "initial state declared twice"));
                    }
                    initial = Some((s, at));
                }
                Tok::Ident(w) if w == "state" => states.push(self.state()?),
                _ => return self.unexpected("`initial`, `state` or `}`"),
            }
        }
        let (initial, initial_span) = match initial {
            Some(found) => found,
            None => {
                return Err(Diagnostic::error(
                    DiagCode::MissingInitial,
                    span,
                    format!("machine `{name}` has no initial state"),
                ))
            }
        };
        Ok(Machine {
            name,
            initial,
            states,
            span,
            initial_span,
        })
    }

    fn state(&mut self) -> PResult<State> {
        self.expect_word("state")?;
        let (name, span) = self.name("a state name")?;
        self.expect(Tok::LBrace)?;
        let mut transitions = Vec::new();
        loop {
            if self.eat(&Tok::RBrace) {
                break;
            }
            transitions.push(self.transition()?);
            if !self.eat(&Tok::Semi) && *self.peek() != Tok::RBrace {
                return self.unexpected("`;` or `}`");
            }
        }
        Ok(State {
            name,
            transitions,
            span,
        })
    }

    fn transition(&mut self) -> PResult<Transition> {
        let span = self.expect_word("on")?;
        let trigger = if self.eat_word(ANY) {
            Trigger::Any
        } else {
            Trigger::Event(self.name("an event name or `ANY`")?.0)
        };
        let guard = if self.eat_word("if") { Some(self.expr()?) } else { None };
        self.expect(Tok::Arrow)?;
        let (target, _) = self.name("a target state")?;
        let mut actions = Vec::new();
        if self.eat_word("do") {
            loop {
                actions.push(self.action()?);
                if !self.eat(&Tok::Comma) {
                    break;
                }
            }
        }
        Ok(Transition {
            trigger,
            guard,
            target,
            actions,
            span,
        })
    }

    fn action(&mut self) -> PResult<Action> {
        match self.peek().clone() {
            Tok::Ident(w) if w == "set_wheels" => {
                self.advance();
                self.expect(Tok::LParen)?;
                let l = self.expr()?;
                self.expect(Tok::Comma)?;
                let r = self.expr()?;
                self.expect(Tok::RParen)?;
                Ok(Action::SetWheels(l, r))
            }
            Tok::Ident(w) if w == "emit" => {
                self.advance();
                self.expect(Tok::LParen)?;
                let (event, _) = self.name("an event name")?;
                let payload = if self.eat(&Tok::Comma) {
                    Some(self.expr()?)
                } else {
                    None
                };
                self.expect(Tok::RParen)?;
                Ok(Action::Emit(event, payload))
            }
            Tok::Ident(w) if w == "send" => {
                self.advance();
                self.expect(Tok::LParen)?;
                let dest = match self.peek().clone() {
                    Tok::Str(s) if !s.is_empty() => {
                        self.advance();
                        s
                    }
                    _ => return self.unexpected("a quoted destination"),
                };
                let payload = if self.eat(&Tok::Comma) {
                    Some(self.expr()?)
                } else {
                    None
                };
                self.expect(Tok::RParen)?;
                Ok(Action::Send(dest, payload))
            }
            Tok::Ident(w) if w == "pick" => {
                self.advance();
                Ok(Action::Pick)
            }
            Tok::Ident(w) if w == "drop" => {
                self.advance();
                Ok(Action::Drop)
            }
            Tok::Ident(w) if !is_keyword(&w) => {
                self.advance();
                self.expect(Tok::Assign)?;
                Ok(Action::Assign(w, self.expr()?))
            }
            _ => self.unexpected("an action"),
        }
    }

    fn expr(&mut self) -> PResult<Expr> {
        self.binary(1)
    }

    fn binary_op(&self) -> Option<BinaryOp> {
        Some(match self.peek() {
            Tok::Ident(w) if w == "or" => BinaryOp::Or,
            Tok::OrOr => BinaryOp::Or,
            Tok::Ident(w) if w == "and" => BinaryOp::And,
            Tok::AndAnd => BinaryOp::And,
            Tok::EqEq => BinaryOp::Eq,
            Tok::NotEq => BinaryOp::Ne,
            Tok::Lt => BinaryOp::Lt,
            Tok::Le => BinaryOp::Le,
            Tok::Gt => BinaryOp::Gt,
            Tok::Ge => BinaryOp::Ge,
            Tok::Plus => BinaryOp::Add,
            Tok::Minus => BinaryOp::Sub,
            Tok::Star => BinaryOp::Mul,
            Tok::Slash => BinaryOp::Div,
            _ => return None,
        })
    }

    /// Precedence climbing; every binary level is left-associative.
    fn binary(&mut self, min_prec: u8) -> PResult<Expr> {
        let mut lhs = self.unary()?;
        while let Some(op) = self.binary_op() {
            let prec = op.precedence();
            if prec < min_prec {
                break;
            }
            self.advance();
            let rhs = self.binary(prec + 1)?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> PResult<Expr> {
        if self.eat(&Tok::Minus) {
            return Ok(Expr::Unary(UnaryOp::Neg, Box::new(self.unary()?)));
        }
        if self.eat(&Tok::Bang) || self.eat_word("not") {
            return Ok(Expr::Unary(UnaryOp::Not, Box::new(self.unary()?)));
        }
        self.postfix()
    }

    fn postfix(&mut self) -> PResult<Expr> {
        let mut e = self.atom()?;
        while self.eat(&Tok::Dot) {
            let axis = match self.peek() {
                Tok::Ident(w) if w == "x" => Axis::X,
                Tok::Ident(w) if w == "y" => Axis::Y,
                _ => return self.unexpected("`x` or `y`"),
            };
            self.advance();
            e = Expr::Field(Box::new(e), axis);
        }
        Ok(e)
    }

    fn atom(&mut self) -> PResult<Expr> {
        let span = self.span();
        match self.peek().clone() {
            Tok::Num(n) => {
                self.advance();
                Ok(Expr::Num(n))
            }
            Tok::LParen => {
                self.advance();
                let e = self.expr()?;
                self.expect(Tok::RParen)?;
                Ok(e)
            }
            Tok::Ident(w) => {
                self.advance();
                match w.as_str() {
                    "true" => return Ok(Expr::Bool(true)),
                    "false" => return Ok(Expr::Bool(false)),
                    "pi" => return Ok(Expr::Pi),
                    "payload" => return Ok(Expr::Payload),
                    _ => {}
                }
                if let Some(func) = Func::from_name(&w) {
                    self.expect(Tok::LParen)?;
                    let mut args = Vec::new();
                    if !self.eat(&Tok::RParen) {
                        loop {
                            args.push(self.expr()?);
                            if !self.eat(&Tok::Comma) {
                                break;
                            }
                        }
                        self.expect(Tok::RParen)?;
                    }
                    if args.len() != func.arity() {
                        return Err(syntax(
                            span,
                            format!(
                                "`{}` takes {} argument(s), got {}",
                                func.name(),
                                func.arity(),
                                args.len()
                            ),
                        ));
                    }
                    return Ok(Expr::Call(func, args));
                }
                if is_keyword(&w) {
                    return Err(syntax(span, format!("unexpected keyword `{w}` in expression")));
                }
                Ok(Expr::Var(w))
            }
            _ => self.unexpected("an expression"),
        }
    }
}

/// Check cross references that the grammar alone cannot enforce.
fn resolve(doc: &CsmDocument) -> Vec<Diagnostic> {
    let mut diags = Vec::new();
    let mut machine_names = BTreeSet::new();
    for m in &doc.machines {
        if !machine_names.insert(m.name.as_str()) {
            diags.push(Diagnostic::error(
                DiagCode::DuplicateMachine,
                m.span,
                format!("machine `{}` declared twice", m.name),
            ));
        }
        let mut seen = BTreeSet::new();
        for s in &m.states {
            if !seen.insert(s.name.as_str()) {
                diags.push(Diagnostic::error(
                    DiagCode::DuplicateState,
                    s.span,
                    format!("state `{}` declared twice in machine `{}`", s.name, m.name),
                ));
            }
        }
        if !seen.contains(m.initial.as_str()) {
            diags.push(Diagnostic::error(
                DiagCode::UnknownState,
                m.initial_span,
                format!("initial state `{}` is not declared in machine `{}`", m.initial, m.name),
            ));
        }
        for s in &m.states {
            for t in &s.transitions {
                if !seen.contains(t.target.as_str()) {
                    diags.push(Diagnostic::error(
                        DiagCode::UnknownState,
                        t.span,
                        format!("transition targets undeclared state `{}`", t.target),
                    ));
                }
            }
        }
    }
    let mut var_names = BTreeSet::new();
    for v in &doc.vars {
        if !var_names.insert(v.name.as_str()) {
            diags.push(Diagnostic::error(
                DiagCode::DuplicateVariable,
                v.span,
                format!("variable `{}` declared twice", v.name),
            ));
        }
    }
    diags
}

/// Parse a behavior document. Structural errors are returned as located diagnostics.
pub fn parse_csm(text: &str) -> Result<CsmDocument, Vec<Diagnostic>> {
    let toks = lex(text).map_err(|d| vec![d])?;
    let mut parser = Parser { toks, pos: 0 };
    let doc = parser.document().map_err(|d| vec![d])?;
    let diags = resolve(&doc);
    if diags.is_empty() {
        Ok(doc)
    } else {
        Err(diags)
    }
}
