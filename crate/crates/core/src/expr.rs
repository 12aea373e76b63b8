//! A small, side-effect-free expression language for data functions.
//!
//! Body forces, tractions, friction thresholds and initial fields are given in
//! configuration files as closed-form expressions over the time `t` and the
//! coordinates `x`, `y`, `z`:
//!
//! ```
//! use crackdyn::expr::Expr;
//!
//! let g: Expr = "0.3*(1 + 0.1*sin(t))".parse().unwrap();
//! assert_eq!(g.eval(0.0, &[0.0, 0.0]).unwrap(), 0.3);
//! ```
//!
//! Grammar, loosest binding first:
//!
//! ```text
//! sum     := product (('+' | '-') product)*        left associative
//! product := unary (('*' | '/') unary)*            left associative
//! unary   := '-' unary | power
//! power   := atom ('^' unary)?                     right associative
//! atom    := number | ident | ident '(' args ')' | '(' sum ')'
//! ```
//!
//! so `-2^2 == -4` and `2^3^2 == 512`. Division by zero, square roots of
//! negative numbers and any other non-finite intermediate are reported as
//! [`EvalError`] instead of propagating NaN.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("syntax error at byte {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("unknown identifier `{name}` at byte {offset}")]
    UnknownIdentifier { offset: usize, name: String },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("division by zero")]
    DivisionByZero,
    #[error("square root of negative number {0}")]
    SqrtNegative(f64),
    #[error("{op} produced a non-finite value")]
    NonFinite { op: &'static str },
    #[error("variable `{0}` is not bound at this point (dimension too small)")]
    Unbound(Var),
}

/// Free variables of the language.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Var {
    T,
    X,
    Y,
    Z,
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Var::T => "t",
            Var::X => "x",
            Var::Y => "y",
            Var::Z => "z",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Sqrt,
    Abs,
    Min,
    Max,
}

impl Func {
    fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "exp" => Func::Exp,
            "sqrt" => Func::Sqrt,
            "abs" => Func::Abs,
            "min" => Func::Min,
            "max" => Func::Max,
            _ => return None,
        })
    }

    fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Sqrt => "sqrt",
            Func::Abs => "abs",
            Func::Min => "min",
            Func::Max => "max",
        }
    }

    fn arity(self) -> usize {
        match self {
            Func::Min | Func::Max => 2,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl BinOp {
    fn symbol(self) -> char {
        match self {
            BinOp::Add => '+',
            BinOp::Sub => '-',
            BinOp::Mul => '*',
            BinOp::Div => '/',
            BinOp::Pow => '^',
        }
    }
}

/// Parsed expression tree.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(Var),
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Vec<Expr>),
}

fn finite(value: f64, op: &'static str) -> Result<f64, EvalError> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(EvalError::NonFinite { op })
    }
}

impl Expr {
    pub fn parse(source: &str) -> Result<Expr, ParseError> {
        let mut parser = Parser { src: source, pos: 0 };
        let expr = parser.sum()?;
        parser.skip_ws();
        if parser.pos != source.len() {
            return Err(parser.error("unexpected trailing input"));
        }
        Ok(expr)
    }

    pub fn constant(value: f64) -> Expr {
        Expr::Num(value)
    }

    /// Evaluates at time `t` and the point `point` (`x`, `y`, `z` bound in
    /// order, as many as `point` has).
    pub fn eval(&self, t: f64, point: &[f64]) -> Result<f64, EvalError> {
        match self {
            Expr::Num(v) => Ok(*v),
            Expr::Var(var) => {
                let idx = match var {
                    Var::T => return Ok(t),
                    Var::X => 0,
                    Var::Y => 1,
                    Var::Z => 2,
                };
                point.get(idx).copied().ok_or(EvalError::Unbound(*var))
            }
            Expr::Neg(inner) => Ok(-inner.eval(t, point)?),
            Expr::Bin(op, lhs, rhs) => {
                let a = lhs.eval(t, point)?;
                let b = rhs.eval(t, point)?;
                match op {
                    BinOp::Add => finite(a + b, "addition"),
                    BinOp::Sub => finite(a - b, "subtraction"),
                    BinOp::Mul => finite(a * b, "multiplication"),
                    BinOp::Div => {
                        if b == 0.0 {
                            Err(EvalError::DivisionByZero)
                        } else {
                            finite(a / b, "division")
                        }
                    }
                    BinOp::Pow => finite(a.powf(b), "power"),
                }
            }
            Expr::Call(func, args) => {
                let a = args[0].eval(t, point)?;
                match func {
                    Func::Sin => Ok(a.sin()),
                    Func::Cos => Ok(a.cos()),
                    Func::Exp => finite(a.exp(), "exp"),
                    Func::Sqrt => {
                        if a < 0.0 {
                            Err(EvalError::SqrtNegative(a))
                        } else {
                            Ok(a.sqrt())
                        }
                    }
                    Func::Abs => Ok(a.abs()),
                    Func::Min => Ok(a.min(args[1].eval(t, point)?)),
                    Func::Max => Ok(a.max(args[1].eval(t, point)?)),
                }
            }
        }
    }

    /// True when the expression does not mention `t`.
    pub fn is_time_independent(&self) -> bool {
        match self {
            Expr::Num(_) => true,
            Expr::Var(v) => *v != Var::T,
            Expr::Neg(e) => e.is_time_independent(),
            Expr::Bin(_, a, b) => a.is_time_independent() && b.is_time_independent(),
            Expr::Call(_, args) => args.iter().all(Expr::is_time_independent),
        }
    }

    /// True when the expression is the literal zero.
    pub fn is_zero(&self) -> bool {
        matches!(self, Expr::Num(v) if *v == 0.0)
    }
}

impl FromStr for Expr {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Expr::parse(s)
    }
}

/// Prints a fully parenthesized form that parses back to the same tree.
impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(v) => write!(f, "{v:?}"),
            Expr::Var(v) => write!(f, "{v}"),
            Expr::Neg(e) => write!(f, "(-{e})"),
            Expr::Bin(op, a, b) => write!(f, "({a} {} {b})", op.symbol()),
            Expr::Call(func, args) => {
                write!(f, "{}(", func.name())?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{a}")?;
                }
                f.write_str(")")
            }
        }
    }
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Parser<'a> {
    fn error(&self, message: &str) -> ParseError {
        ParseError::Syntax { offset: self.pos, message: message.to_string() }
    }

    fn skip_ws(&mut self) {
        let rest = &self.src[self.pos..];
        self.pos += rest.len() - rest.trim_start().len();
    }

    fn peek(&mut self) -> Option<char> {
        self.skip_ws();
        self.src[self.pos..].chars().next()
    }

    fn eat(&mut self, c: char) -> bool {
        if self.peek() == Some(c) {
            self.pos += c.len_utf8();
            true
        } else {
            false
        }
    }

    fn sum(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.product()?;
        loop {
            let op = match self.peek() {
                Some('+') => BinOp::Add,
                Some('-') => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.pos += 1;
            let rhs = self.product()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn product(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Some('*') => BinOp::Mul,
                Some('/') => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.pos += 1;
            let rhs = self.unary()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if self.eat('-') {
            Ok(Expr::Neg(Box::new(self.unary()?)))
        } else {
            self.power()
        }
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let base = self.atom()?;
        if self.eat('^') {
            let exponent = self.unary()?;
            Ok(Expr::Bin(BinOp::Pow, Box::new(base), Box::new(exponent)))
        } else {
            Ok(base)
        }
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        match self.peek() {
            None => Err(self.error("unexpected end of input")),
            Some('(') => {
                self.pos += 1;
                let inner = self.sum()?;
                if !self.eat(')') {
                    return Err(self.error("expected `)`"));
                }
                Ok(inner)
            }
            Some(c) if c.is_ascii_digit() || c == '.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() || c == '_' => self.ident(),
            Some(c) => Err(self.error(&format!("unexpected character `{c}`"))),
        }
    }

    fn number(&mut self) -> Result<Expr, ParseError> {
        let start = self.pos;
        let bytes = self.src.as_bytes();
        let mut end = start;
        while end < bytes.len() && (bytes[end].is_ascii_digit() || bytes[end] == b'.') {
            end += 1;
        }
        // exponent part, only if followed by digits
        if end < bytes.len() && (bytes[end] == b'e' || bytes[end] == b'E') {
            let mut k = end + 1;
            if k < bytes.len() && (bytes[k] == b'+' || bytes[k] == b'-') {
                k += 1;
            }
            if k < bytes.len() && bytes[k].is_ascii_digit() {
                while k < bytes.len() && bytes[k].is_ascii_digit() {
                    k += 1;
                }
                end = k;
            }
        }
        let text = &self.src[start..end];
        let value = text
            .parse::<f64>()
            .map_err(|_| ParseError::Syntax { offset: start, message: format!("bad number `{text}`") })?;
        self.pos = end;
        Ok(Expr::Num(value))
    }

    fn ident(&mut self) -> Result<Expr, ParseError> {
        let start = self.pos;
        let bytes = self.src.as_bytes();
        let mut end = start;
        while end < bytes.len() && (bytes[end].is_ascii_alphanumeric() || bytes[end] == b'_') {
            end += 1;
        }
        let name = &self.src[start..end];
        self.pos = end;
        let var = match name {
            "t" => Some(Var::T),
            "x" => Some(Var::X),
            "y" => Some(Var::Y),
            "z" => Some(Var::Z),
            _ => None,
        };
        if let Some(v) = var {
            return Ok(Expr::Var(v));
        }
        if name == "pi" {
            return Ok(Expr::Num(std::f64::consts::PI));
        }
        let func = Func::from_name(name)
            .ok_or_else(|| ParseError::UnknownIdentifier { offset: start, name: name.to_string() })?;
        if !self.eat('(') {
            return Err(self.error(&format!("expected `(` after `{name}`")));
        }
        let mut args = vec![self.sum()?];
        while self.eat(',') {
            args.push(self.sum()?);
        }
        if !self.eat(')') {
            return Err(self.error("expected `)`"));
        }
        if args.len() != func.arity() {
            return Err(ParseError::Syntax {
                offset: start,
                message: format!("`{name}` takes {} argument(s), got {}", func.arity(), args.len()),
            });
        }
        Ok(Expr::Call(func, args))
    }
}

/// A vector-valued datum written as a tuple of scalar expressions, e.g.
/// `(0, -9.8)`.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorExpr(pub Vec<Expr>);

impl VectorExpr {
    pub fn zero(dim: usize) -> VectorExpr {
        VectorExpr(vec![Expr::Num(0.0); dim])
    }

    pub fn parse(source: &str) -> Result<VectorExpr, ParseError> {
        let trimmed = source.trim();
        let inner = trimmed
            .strip_prefix('(')
            .and_then(|s| s.strip_suffix(')'))
            .ok_or(ParseError::Syntax { offset: 0, message: "expected a parenthesized tuple".into() })?;
        let offset = source.find('(').unwrap_or(0) + 1;
        let mut parts = Vec::new();
        let mut depth = 0usize;
        let mut start = 0usize;
        for (i, c) in inner.char_indices() {
            match c {
                '(' => depth += 1,
                ')' => depth = depth.saturating_sub(1),
                ',' if depth == 0 => {
                    parts.push((start, &inner[start..i]));
                    start = i + 1;
                }
                _ => {}
            }
        }
        parts.push((start, &inner[start..]));
        let components = parts
            .into_iter()
            .map(|(at, text)| {
                Expr::parse(text).map_err(|e| match e {
                    ParseError::Syntax { offset: o, message } => {
                        ParseError::Syntax { offset: o + at + offset, message }
                    }
                    ParseError::UnknownIdentifier { offset: o, name } => {
                        ParseError::UnknownIdentifier { offset: o + at + offset, name }
                    }
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(VectorExpr(components))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn eval(&self, t: f64, point: &[f64]) -> Result<Vec<f64>, EvalError> {
        self.0.iter().map(|e| e.eval(t, point)).collect()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(Expr::is_zero)
    }
}

impl fmt::Display for VectorExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("(")?;
        for (i, e) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{e}")?;
        }
        f.write_str(")")
    }
}
