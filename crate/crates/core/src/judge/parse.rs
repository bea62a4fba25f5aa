use std::fmt;

use serde_json::Value;
use thiserror::Error;

use crate::injection::state::number;
use crate::injection::{RuntimeSchema, TypeTag};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CmpOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl CmpOp {
    pub const ALL: [CmpOp; 6] = [CmpOp::Eq, CmpOp::Ne, CmpOp::Lt, CmpOp::Le, CmpOp::Gt, CmpOp::Ge];

    pub fn name(self) -> &'static str {
        match self {
            CmpOp::Eq => "eq",
            CmpOp::Ne => "ne",
            CmpOp::Lt => "lt",
            CmpOp::Le => "le",
            CmpOp::Gt => "gt",
            CmpOp::Ge => "ge",
        }
    }

    fn from_name(s: &str) -> Option<CmpOp> {
        CmpOp::ALL.into_iter().find(|op| op.name() == s)
    }

    pub fn is_ordering(self) -> bool {
        !matches!(self, CmpOp::Eq | CmpOp::Ne)
    }

    pub fn holds(self, a: f64, b: f64) -> bool {
        match self {
            CmpOp::Eq => a == b,
            CmpOp::Ne => a != b,
            CmpOp::Lt => a < b,
            CmpOp::Le => a <= b,
            CmpOp::Gt => a > b,
            CmpOp::Ge => a >= b,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Term {
    Pre(String),
    Post(String),
    /// `post − pre` of a numeric path.
    Delta(String),
    Lit(Value),
}

impl Term {
    pub fn path(&self) -> Option<&str> {
        match self {
            Term::Pre(p) | Term::Post(p) | Term::Delta(p) => Some(p),
            Term::Lit(_) => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Cmp { op: CmpOp, lhs: Term, rhs: Term },
    Exists(String),
    Event(String),
    EventCount { kind: String, op: CmpOp, n: f64 },
    LogContains(String),
    All(Vec<Expr>),
    Any(Vec<Expr>),
    Not(Box<Expr>),
}

impl Expr {
    /// State paths the expression reads, in source order.
    pub fn paths(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.walk(&mut |e| match e {
            Expr::Cmp { lhs, rhs, .. } => out.extend(lhs.path().into_iter().chain(rhs.path())),
            Expr::Exists(p) => out.push(p.as_str()),
            _ => {}
        });
        out
    }

    /// Event types the expression mentions.
    pub fn event_types(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.walk(&mut |e| match e {
            Expr::Event(t) | Expr::EventCount { kind: t, .. } => out.push(t.as_str()),
            _ => {}
        });
        out
    }

    pub fn is_negation_free(&self) -> bool {
        let mut free = true;
        self.walk(&mut |e| free &= !matches!(e, Expr::Not(_)));
        free
    }

    fn walk<'a>(&'a self, f: &mut impl FnMut(&'a Expr)) {
        f(self);
        match self {
            Expr::All(xs) | Expr::Any(xs) => xs.iter().for_each(|x| x.walk(f)),
            Expr::Not(x) => x.walk(f),
            _ => {}
        }
    }
}

fn write_literal(f: &mut fmt::Formatter<'_>, v: &Value) -> fmt::Result {
    match v {
        Value::Number(_) => write!(f, "{}", number(v.as_f64().unwrap_or(f64::NAN))),
        other => write!(f, "{other}"),
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Pre(p) => write!(f, "pre.{p}"),
            Term::Post(p) => write!(f, "post.{p}"),
            Term::Delta(p) => write!(f, "delta({p})"),
            Term::Lit(v) => write_literal(f, v),
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let list = |f: &mut fmt::Formatter<'_>, name: &str, xs: &[Expr]| {
            write!(f, "{name}(")?;
            for (i, x) in xs.iter().enumerate() {
                if i > 0 {
                    f.write_str(", ")?;
                }
                write!(f, "{x}")?;
            }
            f.write_str(")")
        };
        match self {
            Expr::Cmp { op, lhs, rhs } => write!(f, "{}({lhs}, {rhs})", op.name()),
            Expr::Exists(p) => write!(f, "exists(post.{p})"),
            Expr::Event(t) => write!(f, "event({})", Value::from(t.as_str())),
            Expr::EventCount { kind, op, n } => {
                write!(f, "event_count({}) {} {}", Value::from(kind.as_str()), op.name(), number(*n))
            }
            Expr::LogContains(s) => write!(f, "log_contains({})", Value::from(s.as_str())),
            Expr::All(xs) => list(f, "all", xs),
            Expr::Any(xs) => list(f, "any", xs),
            Expr::Not(x) => write!(f, "not({x})"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("syntax error at {pos}: {message}")]
    Syntax { pos: usize, message: String },
    #[error("type error at {pos}: {message}")]
    Type { pos: usize, message: String },
}

impl ParseError {
    pub fn pos(&self) -> usize {
        match self {
            ParseError::Syntax { pos, .. } | ParseError::Type { pos, .. } => *pos,
        }
    }
}

/// Static type of a term, when it is known.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Ty {
    Num,
    Str,
    Bool,
    Other,
    Unknown,
}

impl Ty {
    fn of_tag(tag: Option<TypeTag>) -> Ty {
        match tag {
            None => Ty::Unknown,
            Some(t) if t.is_numeric() => Ty::Num,
            Some(TypeTag::String) => Ty::Str,
            Some(TypeTag::Bool) => Ty::Bool,
            Some(_) => Ty::Other,
        }
    }
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
    schema: Option<&'a RuntimeSchema>,
}

impl<'a> Parser<'a> {
    fn rest(&self) -> &'a str {
        &self.src[self.pos..]
    }

    fn skip_ws(&mut self) {
        let trimmed = self.rest().trim_start();
        self.pos = self.src.len() - trimmed.len();
    }

    fn syntax<T>(&self, message: impl Into<String>) -> Result<T, ParseError> {
        Err(ParseError::Syntax {
            pos: self.pos,
            message: message.into(),
        })
    }

    fn eat(&mut self, token: &str) -> bool {
        self.skip_ws();
        if self.rest().starts_with(token) {
            self.pos += token.len();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, token: &str) -> Result<(), ParseError> {
        if self.eat(token) {
            Ok(())
        } else {
            self.syntax(format!("expected `{token}`"))
        }
    }

    fn ident(&mut self) -> Result<&'a str, ParseError> {
        self.skip_ws();
        let len = self
            .rest()
            .find(|c: char| !(c.is_ascii_alphanumeric() || c == '_'))
            .unwrap_or(self.rest().len());
        if len == 0 {
            return self.syntax("expected identifier");
        }
        let word = &self.rest()[..len];
        self.pos += len;
        Ok(word)
    }

    fn path(&mut self) -> Result<String, ParseError> {
        self.skip_ws();
        let len = self
            .rest()
            .find(|c: char| !(c.is_ascii_alphanumeric() || c == '_' || c == '-' || c == '.'))
            .unwrap_or(self.rest().len());
        let path = &self.rest()[..len];
        if path.is_empty() || path.split('.').any(str::is_empty) {
            return self.syntax("expected dot-separated path");
        }
        self.pos += len;
        Ok(path.to_string())
    }

    fn string(&mut self) -> Result<String, ParseError> {
        self.skip_ws();
        if !self.rest().starts_with('"') {
            return self.syntax("expected string literal");
        }
        let bytes = self.rest().as_bytes();
        let mut i = 1;
        while i < bytes.len() {
            match bytes[i] {
                b'\\' => i += 2,
                b'"' => {
                    let lit = &self.rest()[..=i];
                    return match serde_json::from_str::<String>(lit) {
                        Ok(s) => {
                            self.pos += i + 1;
                            Ok(s)
                        }
                        Err(e) => self.syntax(format!("bad string literal: {e}")),
                    };
                }
                _ => i += 1,
            }
        }
        self.syntax("unterminated string literal")
    }

    fn number(&mut self) -> Result<f64, ParseError> {
        self.skip_ws();
        let len = self
            .rest()
            .find(|c: char| !(c.is_ascii_digit() || matches!(c, '-' | '+' | '.' | 'e' | 'E')))
            .unwrap_or(self.rest().len());
        match self.rest()[..len].parse::<f64>() {
            Ok(x) if x.is_finite() && len > 0 => {
                self.pos += len;
                Ok(x)
            }
            _ => self.syntax("expected number"),
        }
    }

    fn type_error<T>(&self, pos: usize, message: impl Into<String>) -> Result<T, ParseError> {
        Err(ParseError::Type {
            pos,
            message: message.into(),
        })
    }

    fn resolve(&self, path: &str) -> Ty {
        Ty::of_tag(self.schema.and_then(|s| s.resolve(path)))
    }

    fn term(&mut self) -> Result<(Term, Ty), ParseError> {
        self.skip_ws();
        let start = self.pos;
        let rest = self.rest();
        if rest.starts_with('"') {
            return Ok((Term::Lit(Value::String(self.string()?)), Ty::Str));
        }
        if rest.starts_with(|c: char| c.is_ascii_digit() || c == '-' || c == '+' || c == '.') {
            return Ok((Term::Lit(number(self.number()?)), Ty::Num));
        }
        match self.ident()? {
            "true" => Ok((Term::Lit(Value::Bool(true)), Ty::Bool)),
            "false" => Ok((Term::Lit(Value::Bool(false)), Ty::Bool)),
            "pre" | "post" => {
                let side = &self.src[start..self.pos];
                self.expect(".")?;
                let path = self.path()?;
                let ty = self.resolve(&path);
                Ok((if side == "pre" { Term::Pre(path) } else { Term::Post(path) }, ty))
            }
            "delta" => {
                self.expect("(")?;
                let at = {
                    self.skip_ws();
                    self.pos
                };
                let path = self.path()?;
                match self.resolve(&path) {
                    Ty::Num | Ty::Unknown => {}
                    _ => return self.type_error(at, format!("delta of non-numeric path `{path}`")),
                }
                self.expect(")")?;
                Ok((Term::Delta(path), Ty::Num))
            }
            other => {
                self.pos = start;
                self.syntax(format!("unexpected `{other}` where a term was expected"))
            }
        }
    }

    fn args(&mut self) -> Result<Vec<Expr>, ParseError> {
        self.expect("(")?;
        let mut out = vec![self.expr()?];
        while self.eat(",") {
            out.push(self.expr()?);
        }
        self.expect(")")?;
        Ok(out)
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        self.skip_ws();
        let start = self.pos;
        let word = self.ident()?;
        if let Some(op) = CmpOp::from_name(word) {
            self.expect("(")?;
            let (lhs, lt) = self.term()?;
            self.expect(",")?;
            let (rhs, rt) = self.term()?;
            self.expect(")")?;
            let clash = match (lt, rt) {
                (Ty::Unknown, _) | (_, Ty::Unknown) => false,
                _ if op.is_ordering() => lt != Ty::Num || rt != Ty::Num,
                _ => lt != rt,
            };
            let literal_order = op.is_ordering()
                && [&lhs, &rhs]
                    .iter()
                    .any(|t| matches!(t, Term::Lit(v) if !v.is_number()));
            if clash || literal_order {
                return self.type_error(start, format!("`{}` compares incompatible terms", op.name()));
            }
            return Ok(Expr::Cmp { op, lhs, rhs });
        }
        match word {
            "all" => Ok(Expr::All(self.args()?)),
            "any" => Ok(Expr::Any(self.args()?)),
            "not" => {
                self.expect("(")?;
                let inner = self.expr()?;
                self.expect(")")?;
                Ok(Expr::Not(Box::new(inner)))
            }
            "exists" => {
                self.expect("(")?;
                self.expect("post")?;
                self.expect(".")?;
                let path = self.path()?;
                self.expect(")")?;
                Ok(Expr::Exists(path))
            }
            "event" => {
                self.expect("(")?;
                let kind = self.string()?;
                self.expect(")")?;
                Ok(Expr::Event(kind))
            }
            "event_count" => {
                self.expect("(")?;
                let kind = self.string()?;
                self.expect(")")?;
                let op = CmpOp::from_name(self.ident()?)
                    .map_or_else(|| self.syntax("expected comparison operator"), Ok)?;
                let n = self.number()?;
                Ok(Expr::EventCount { kind, op, n })
            }
            "log_contains" => {
                self.expect("(")?;
                let s = self.string()?;
                self.expect(")")?;
                Ok(Expr::LogContains(s))
            }
            other => {
                self.pos = start;
                self.syntax(format!("unknown assertion `{other}`"))
            }
        }
    }
}

/// Parses an assertion without type information beyond literals.
pub fn parse_assertion(text: &str) -> Result<Expr, ParseError> {
    parse_with_schema(text, None)
}

/// Parses and, when a schema is given, type-checks path terms against it.
/// Paths the schema does not know are left to the unit linter.
pub fn parse_with_schema(text: &str, schema: Option<&RuntimeSchema>) -> Result<Expr, ParseError> {
    let mut p = Parser { src: text, pos: 0, schema };
    let expr = p.expr()?;
    p.skip_ws();
    if p.pos < text.len() {
        return p.syntax("trailing input");
    }
    Ok(expr)
}
