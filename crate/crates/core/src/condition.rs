//! Condition expressions: the boolean guard language of intent documents.
//!
//! ```text
//! expr := or
//! or   := and ("||" and)*
//! and  := not ("&&" not)*
//! not  := "!" not | cmp
//! cmp  := term (("<=" | ">=" | "<" | ">" | "==" | "!=") term)?
//! term := identifier | number | string | true | false | "(" expr ")"
//! ```
//!
//! Comparisons do not chain. The language has no arithmetic, calls or
//! quantifiers; new operators slot in as extra `ExprKind` variants with a
//! matching arm in the evaluator.

use std::fmt;

use crate::number::Number;

/// Byte range into the source text.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    fn join(self, other: Span) -> Span {
        Span { start: self.start.min(other.start), end: self.end.max(other.end) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CmpOp {
    Le,
    Ge,
    Lt,
    Gt,
    Eq,
    Ne,
}

impl CmpOp {
    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Le => "<=",
            CmpOp::Ge => ">=",
            CmpOp::Lt => "<",
            CmpOp::Gt => ">",
            CmpOp::Eq => "==",
            CmpOp::Ne => "!=",
        }
    }
}

#[derive(Debug, Clone)]
pub struct Expr {
    pub kind: ExprKind,
    pub span: Span,
}

/// Spans are positional metadata; equality compares tree shape only.
impl PartialEq for Expr {
    fn eq(&self, other: &Expr) -> bool {
        self.kind == other.kind
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ExprKind {
    Ident(String),
    Num(Number),
    Str(String),
    Bool(bool),
    Not(Box<Expr>),
    And(Vec<Expr>),
    Or(Vec<Expr>),
    Cmp(CmpOp, Box<Expr>, Box<Expr>),
}

impl Expr {
    pub fn new(kind: ExprKind) -> Expr {
        Expr { kind, span: Span::default() }
    }

    pub fn ident(name: &str) -> Expr {
        Expr::new(ExprKind::Ident(name.to_string()))
    }

    /// Conjunction of `self` and `other`, flattening when `self` is already
    /// a conjunction.
    pub fn and(self, other: Expr) -> Expr {
        match self.kind {
            ExprKind::And(mut items) => {
                items.push(other);
                Expr::new(ExprKind::And(items))
            }
            kind => Expr::new(ExprKind::And(vec![Expr::new(kind), other])),
        }
    }

    pub fn or(self, other: Expr) -> Expr {
        match self.kind {
            ExprKind::Or(mut items) => {
                items.push(other);
                Expr::new(ExprKind::Or(items))
            }
            kind => Expr::new(ExprKind::Or(vec![Expr::new(kind), other])),
        }
    }

    pub fn children(&self) -> Vec<&Expr> {
        match &self.kind {
            ExprKind::Not(e) => vec![e],
            ExprKind::And(v) | ExprKind::Or(v) => v.iter().collect(),
            ExprKind::Cmp(_, l, r) => vec![l, r],
            _ => vec![],
        }
    }

    /// Pre-order mutable traversal.
    pub fn walk_mut(&mut self, f: &mut dyn FnMut(&mut Expr)) {
        f(self);
        match &mut self.kind {
            ExprKind::Not(e) => e.walk_mut(f),
            ExprKind::And(v) | ExprKind::Or(v) => v.iter_mut().for_each(|e| e.walk_mut(f)),
            ExprKind::Cmp(_, l, r) => {
                l.walk_mut(f);
                r.walk_mut(f);
            }
            _ => {}
        }
    }

    /// Identifier names in source order, with repeats.
    pub fn identifiers(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.collect_idents(&mut out);
        out
    }

    fn collect_idents<'a>(&'a self, out: &mut Vec<&'a str>) {
        if let ExprKind::Ident(n) = &self.kind {
            out.push(n);
        }
        for c in self.children() {
            c.collect_idents(out);
        }
    }

    fn precedence(&self) -> u8 {
        match self.kind {
            ExprKind::Or(_) => 1,
            ExprKind::And(_) => 2,
            ExprKind::Not(_) => 3,
            ExprKind::Cmp(..) => 4,
            _ => 5,
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        // Children at the same or lower precedence are parenthesized so the
        // printed text re-parses to the same tree (n-ary nodes included).
        let child = |f: &mut fmt::Formatter<'_>, e: &Expr, min: u8| {
            if e.precedence() <= min {
                write!(f, "({e})")
            } else {
                write!(f, "{e}")
            }
        };
        match &self.kind {
            ExprKind::Ident(n) => f.write_str(n),
            ExprKind::Num(n) => write!(f, "{n}"),
            ExprKind::Bool(b) => write!(f, "{b}"),
            ExprKind::Str(s) => {
                f.write_str("\"")?;
                for c in s.chars() {
                    match c {
                        '"' => f.write_str("\\\"")?,
                        '\\' => f.write_str("\\\\")?,
                        c => write!(f, "{c}")?,
                    }
                }
                f.write_str("\"")
            }
            ExprKind::Not(e) => {
                f.write_str("!")?;
                child(f, e, 2)
            }
            ExprKind::And(items) | ExprKind::Or(items) => {
                let (sep, prec) = match self.kind {
                    ExprKind::And(_) => (" && ", 2),
                    _ => (" || ", 1),
                };
                for (i, e) in items.iter().enumerate() {
                    if i > 0 {
                        f.write_str(sep)?;
                    }
                    child(f, e, prec)?;
                }
                Ok(())
            }
            ExprKind::Cmp(op, l, r) => {
                child(f, l, 4)?;
                write!(f, " {} ", op.symbol())?;
                child(f, r, 4)
            }
        }
    }
}

/// A parsed condition together with its source text.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionExpr {
    pub source: String,
    pub root: Expr,
}

impl ConditionExpr {
    pub fn from_expr(root: Expr) -> ConditionExpr {
        ConditionExpr { source: root.to_string(), root }
    }
}

impl fmt::Display for ConditionExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.root)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("column {column}: {message}")]
pub struct ConditionError {
    /// 1-based character column in the condition text.
    pub column: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Num(Number),
    Str(String),
    True,
    False,
    AndAnd,
    OrOr,
    Bang,
    Cmp(CmpOp),
    LParen,
    RParen,
}

struct Lexer<'a> {
    src: &'a str,
    toks: Vec<(Tok, Span)>,
}

fn column_of(src: &str, byte: usize) -> usize {
    src[..byte.min(src.len())].chars().count() + 1
}

impl<'a> Lexer<'a> {
    fn err(&self, at: usize, message: impl Into<String>) -> ConditionError {
        ConditionError { column: column_of(self.src, at), message: message.into() }
    }

    fn run(mut self) -> Result<Vec<(Tok, Span)>, ConditionError> {
        let b = self.src.as_bytes();
        let mut i = 0;
        while i < b.len() {
            let c = b[i];
            let start = i;
            let two = |x: &[u8]| b[i..].starts_with(x);
            let tok = match c {
                b' ' | b'\t' | b'\n' | b'\r' => {
                    i += 1;
                    continue;
                }
                b'(' => {
                    i += 1;
                    Tok::LParen
                }
                b')' => {
                    i += 1;
                    Tok::RParen
                }
                _ if two(b"&&") => {
                    i += 2;
                    Tok::AndAnd
                }
                _ if two(b"||") => {
                    i += 2;
                    Tok::OrOr
                }
                _ if two(b"<=") => {
                    i += 2;
                    Tok::Cmp(CmpOp::Le)
                }
                _ if two(b">=") => {
                    i += 2;
                    Tok::Cmp(CmpOp::Ge)
                }
                _ if two(b"==") => {
                    i += 2;
                    Tok::Cmp(CmpOp::Eq)
                }
                _ if two(b"!=") => {
                    i += 2;
                    Tok::Cmp(CmpOp::Ne)
                }
                b'<' => {
                    i += 1;
                    Tok::Cmp(CmpOp::Lt)
                }
                b'>' => {
                    i += 1;
                    Tok::Cmp(CmpOp::Gt)
                }
                b'!' => {
                    i += 1;
                    Tok::Bang
                }
                b'"' | b'\'' => {
                    let q = c;
                    let mut s = String::new();
                    i += 1;
                    loop {
                        match b.get(i) {
                            None => return Err(self.err(start, "unterminated string literal")),
                            Some(&x) if x == q => {
                                i += 1;
                                break;
                            }
                            Some(b'\\') => {
                                match b.get(i + 1) {
                                    Some(&e @ (b'"' | b'\'' | b'\\')) => s.push(e as char),
                                    _ => return Err(self.err(i, "invalid escape in string literal")),
                                }
                                i += 2;
                            }
                            Some(_) => {
                                let ch = self.src[i..].chars().next().unwrap();
                                s.push(ch);
                                i += ch.len_utf8();
                            }
                        }
                    }
                    Tok::Str(s)
                }
                b'0'..=b'9' | b'-' | b'.' => {
                    if c == b'-' {
                        i += 1;
                    }
                    while i < b.len() && (b[i].is_ascii_digit() || b[i] == b'.') {
                        i += 1;
                    }
                    let text = &self.src[start..i];
                    let n: Number = text.parse().map_err(|_| self.err(start, format!("invalid number `{text}`")))?;
                    Tok::Num(n)
                }
                _ if c.is_ascii_alphabetic() || c == b'_' => {
                    while i < b.len() && (b[i].is_ascii_alphanumeric() || b[i] == b'_' || b[i] == b'.') {
                        i += 1;
                    }
                    match &self.src[start..i] {
                        "true" => Tok::True,
                        "false" => Tok::False,
                        id => Tok::Ident(id.to_string()),
                    }
                }
                _ => {
                    let ch = self.src[i..].chars().next().unwrap();
                    return Err(self.err(start, format!("unexpected character `{ch}`")));
                }
            };
            self.toks.push((tok, Span { start, end: i }));
        }
        Ok(self.toks)
    }
}

struct Parser<'a> {
    src: &'a str,
    toks: Vec<(Tok, Span)>,
    i: usize,
}

impl Parser<'_> {
    fn err_here(&self, message: impl Into<String>) -> ConditionError {
        let at = self.toks.get(self.i).map(|t| t.1.start).unwrap_or(self.src.len());
        ConditionError { column: column_of(self.src, at), message: message.into() }
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.i).map(|t| &t.0)
    }

    fn or(&mut self) -> Result<Expr, ConditionError> {
        let first = self.and()?;
        let mut items = vec![first];
        while self.peek() == Some(&Tok::OrOr) {
            self.i += 1;
            items.push(self.and()?);
        }
        Ok(nary(items, ExprKind::Or))
    }

    fn and(&mut self) -> Result<Expr, ConditionError> {
        let first = self.not()?;
        let mut items = vec![first];
        while self.peek() == Some(&Tok::AndAnd) {
            self.i += 1;
            items.push(self.not()?);
        }
        Ok(nary(items, ExprKind::And))
    }

    fn not(&mut self) -> Result<Expr, ConditionError> {
        if self.peek() == Some(&Tok::Bang) {
            let start = self.toks[self.i].1;
            self.i += 1;
            let inner = self.not()?;
            let span = start.join(inner.span);
            return Ok(Expr { kind: ExprKind::Not(Box::new(inner)), span });
        }
        self.cmp()
    }

    fn cmp(&mut self) -> Result<Expr, ConditionError> {
        let lhs = self.term()?;
        let op = match self.peek() {
            Some(Tok::Cmp(op)) => *op,
            _ => return Ok(lhs),
        };
        self.i += 1;
        let rhs = self.term()?;
        if let Some(Tok::Cmp(_)) = self.peek() {
            return Err(self.err_here("chained comparison"));
        }
        let span = lhs.span.join(rhs.span);
        Ok(Expr { kind: ExprKind::Cmp(op, Box::new(lhs), Box::new(rhs)), span })
    }

    fn term(&mut self) -> Result<Expr, ConditionError> {
        let Some((tok, span)) = self.toks.get(self.i).cloned() else {
            return Err(self.err_here("unexpected end of condition"));
        };
        self.i += 1;
        let kind = match tok {
            Tok::Ident(n) => ExprKind::Ident(n),
            Tok::Num(n) => ExprKind::Num(n),
            Tok::Str(s) => ExprKind::Str(s),
            Tok::True => ExprKind::Bool(true),
            Tok::False => ExprKind::Bool(false),
            Tok::LParen => {
                let inner = self.or()?;
                if self.peek() != Some(&Tok::RParen) {
                    return Err(self.err_here("expected `)`"));
                }
                self.i += 1;
                return Ok(inner);
            }
            _ => {
                self.i -= 1;
                return Err(self.err_here("expected a term"));
            }
        };
        Ok(Expr { kind, span })
    }
}

fn nary(mut items: Vec<Expr>, make: fn(Vec<Expr>) -> ExprKind) -> Expr {
    if items.len() == 1 {
        return items.pop().unwrap();
    }
    let span = items.iter().map(|e| e.span).reduce(Span::join).unwrap_or_default();
    Expr { kind: make(items), span }
}

/// Parses a condition string.
pub fn parse_condition(text: &str) -> Result<ConditionExpr, ConditionError> {
    let toks = Lexer { src: text, toks: Vec::new() }.run()?;
    if toks.is_empty() {
        return Err(ConditionError { column: 1, message: "empty condition".into() });
    }
    let mut p = Parser { src: text, toks, i: 0 };
    let root = p.or()?;
    if p.i < p.toks.len() {
        return Err(p.err_here("unexpected token"));
    }
    Ok(ConditionExpr { source: text.to_string(), root })
}
