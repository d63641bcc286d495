//! A small arithmetic expression language for exponents, weights, sources and
//! boundary data.
//!
//! Grammar, loosest binding first:
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := unary (('*' | '/') unary)*
//! unary  := '-' unary | power
//! power  := atom ('^' unary)?          right-associative
//! atom   := number | 'x' | 'y' | 'pi' | 'e'
//!         | func '(' expr (',' expr)* ')'
//!         | '(' expr ')'
//! func   := sin | cos | exp | log | sqrt | abs | min | max
//! ```

use std::fmt;

use thiserror::Error;

use crate::mesh::Grid;

#[derive(Debug, Error, Clone, PartialEq)]
#[error("parse error at byte {offset}: {message}")]
pub struct ParseError {
    pub offset: usize,
    pub message: String,
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("{message} at point {point:?}")]
pub struct EvalError {
    pub point: Vec<f64>,
    pub message: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Var {
    X,
    Y,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Constant {
    Pi,
    E,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Log,
    Sqrt,
    Abs,
    Min,
    Max,
}

impl Func {
    fn lookup(name: &str) -> Option<Func> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "exp" => Func::Exp,
            "log" => Func::Log,
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
            Func::Log => "log",
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

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(Var),
    Const(Constant),
    Neg(Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Vec<Expr>),
}

/// Where a field is sampled.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Location {
    Nodes,
    Cells,
}

impl Expr {
    /// Number of coordinates the expression needs (0, 1 or 2).
    pub fn required_dim(&self) -> usize {
        match self {
            Expr::Num(_) | Expr::Const(_) => 0,
            Expr::Var(Var::X) => 1,
            Expr::Var(Var::Y) => 2,
            Expr::Neg(e) => e.required_dim(),
            Expr::Binary(_, a, b) => a.required_dim().max(b.required_dim()),
            Expr::Call(_, args) => args.iter().map(Expr::required_dim).max().unwrap_or(0),
        }
    }

    pub fn eval_at(&self, point: &[f64]) -> Result<f64, EvalError> {
        if point.len() < self.required_dim() {
            return Err(EvalError {
                point: point.to_vec(),
                message: format!(
                    "expression uses {} coordinates but the point has {}",
                    self.required_dim(),
                    point.len()
                ),
            });
        }
        let v = self.eval_inner(point)?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(domain(point, "non-finite result"))
        }
    }

    fn eval_inner(&self, pt: &[f64]) -> Result<f64, EvalError> {
        Ok(match self {
            Expr::Num(v) => *v,
            Expr::Var(Var::X) => pt[0],
            Expr::Var(Var::Y) => pt[1],
            Expr::Const(Constant::Pi) => std::f64::consts::PI,
            Expr::Const(Constant::E) => std::f64::consts::E,
            Expr::Neg(e) => -e.eval_inner(pt)?,
            Expr::Binary(op, a, b) => {
                let (a, b) = (a.eval_inner(pt)?, b.eval_inner(pt)?);
                match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div => {
                        if b == 0.0 {
                            return Err(domain(pt, "division by zero"));
                        }
                        a / b
                    }
                    BinOp::Pow => {
                        let r = a.powf(b);
                        if r.is_nan() {
                            return Err(domain(pt, "power of a negative base"));
                        }
                        r
                    }
                }
            }
            Expr::Call(f, args) => {
                let a = args[0].eval_inner(pt)?;
                match f {
                    Func::Sin => a.sin(),
                    Func::Cos => a.cos(),
                    Func::Exp => a.exp(),
                    Func::Abs => a.abs(),
                    Func::Log => {
                        if a <= 0.0 {
                            return Err(domain(pt, "log of a nonpositive value"));
                        }
                        a.ln()
                    }
                    Func::Sqrt => {
                        if a < 0.0 {
                            return Err(domain(pt, "sqrt of a negative value"));
                        }
                        a.sqrt()
                    }
                    Func::Min => a.min(args[1].eval_inner(pt)?),
                    Func::Max => a.max(args[1].eval_inner(pt)?),
                }
            }
        })
    }

    /// Evaluates at every node or every cell center of `grid`.
    pub fn sample(&self, grid: &Grid, at: Location) -> Result<Vec<f64>, EvalError> {
        let dim = grid.dim();
        let count = match at {
            Location::Nodes => grid.node_count(),
            Location::Cells => grid.cell_count(),
        };
        (0..count)
            .map(|k| {
                let p = match at {
                    Location::Nodes => grid.node_point(k),
                    Location::Cells => grid.cell_center(k),
                };
                self.eval_at(&p[..dim])
            })
            .collect()
    }
}

fn domain(pt: &[f64], message: &str) -> EvalError {
    EvalError { point: pt.to_vec(), message: message.to_string() }
}

/// Fully parenthesized; reparsing yields an equal tree.
impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(v) => write!(f, "{v:?}"),
            Expr::Var(Var::X) => f.write_str("x"),
            Expr::Var(Var::Y) => f.write_str("y"),
            Expr::Const(Constant::Pi) => f.write_str("pi"),
            Expr::Const(Constant::E) => f.write_str("e"),
            Expr::Neg(e) => write!(f, "(-{e})"),
            Expr::Binary(op, a, b) => {
                let sym = match op {
                    BinOp::Add => "+",
                    BinOp::Sub => "-",
                    BinOp::Mul => "*",
                    BinOp::Div => "/",
                    BinOp::Pow => "^",
                };
                write!(f, "({a} {sym} {b})")
            }
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

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    Comma,
    End,
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
    tok: Tok,
    tok_start: usize,
}

pub fn parse(src: &str) -> Result<Expr, ParseError> {
    let mut p = Parser { src, pos: 0, tok: Tok::End, tok_start: 0 };
    p.advance()?;
    let e = p.expr()?;
    if p.tok != Tok::End {
        return Err(p.error_here("unexpected trailing input"));
    }
    Ok(e)
}

impl<'a> Parser<'a> {
    fn error_at(&self, offset: usize, message: impl Into<String>) -> ParseError {
        ParseError { offset: offset.min(self.src.len()), message: message.into() }
    }

    fn error_here(&self, message: impl Into<String>) -> ParseError {
        self.error_at(self.tok_start, message)
    }

    fn advance(&mut self) -> Result<(), ParseError> {
        let bytes = self.src.as_bytes();
        while self.pos < bytes.len() && bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        self.tok_start = self.pos;
        let Some(&c) = bytes.get(self.pos) else {
            self.tok = Tok::End;
            return Ok(());
        };
        let single = match c {
            b'+' => Some(Tok::Plus),
            b'-' => Some(Tok::Minus),
            b'*' => Some(Tok::Star),
            b'/' => Some(Tok::Slash),
            b'^' => Some(Tok::Caret),
            b'(' => Some(Tok::LParen),
            b')' => Some(Tok::RParen),
            b',' => Some(Tok::Comma),
            _ => None,
        };
        if let Some(t) = single {
            self.pos += 1;
            self.tok = t;
            return Ok(());
        }
        if c.is_ascii_digit() || c == b'.' {
            let start = self.pos;
            while self.pos < bytes.len() && (bytes[self.pos].is_ascii_digit() || bytes[self.pos] == b'.') {
                self.pos += 1;
            }
            // exponent part, only when followed by digits
            if self.pos < bytes.len() && (bytes[self.pos] == b'e' || bytes[self.pos] == b'E') {
                let mut k = self.pos + 1;
                if k < bytes.len() && (bytes[k] == b'+' || bytes[k] == b'-') {
                    k += 1;
                }
                if k < bytes.len() && bytes[k].is_ascii_digit() {
                    while k < bytes.len() && bytes[k].is_ascii_digit() {
                        k += 1;
                    }
                    self.pos = k;
                }
            }
            let text = &self.src[start..self.pos];
            let v: f64 = text.parse().map_err(|_| self.error_at(start, format!("malformed number '{text}'")))?;
            if !v.is_finite() {
                return Err(self.error_at(start, format!("number out of range '{text}'")));
            }
            self.tok = Tok::Num(v);
            return Ok(());
        }
        if c.is_ascii_alphabetic() || c == b'_' {
            let start = self.pos;
            while self.pos < bytes.len() && (bytes[self.pos].is_ascii_alphanumeric() || bytes[self.pos] == b'_') {
                self.pos += 1;
            }
            self.tok = Tok::Ident(self.src[start..self.pos].to_string());
            return Ok(());
        }
        let ch = self.src[self.pos..].chars().next().unwrap_or('?');
        Err(self.error_at(self.pos, format!("unexpected character '{ch}'")))
    }

    fn expect(&mut self, t: Tok, what: &str) -> Result<(), ParseError> {
        if self.tok == t {
            self.advance()
        } else {
            Err(self.error_here(format!("expected {what}")))
        }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.tok {
                Tok::Plus => BinOp::Add,
                Tok::Minus => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.advance()?;
            let rhs = self.term()?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.tok {
                Tok::Star => BinOp::Mul,
                Tok::Slash => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.advance()?;
            let rhs = self.unary()?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if self.tok == Tok::Minus {
            self.advance()?;
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let base = self.atom()?;
        if self.tok == Tok::Caret {
            self.advance()?;
            let exponent = self.unary()?;
            return Ok(Expr::Binary(BinOp::Pow, Box::new(base), Box::new(exponent)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        let start = self.tok_start;
        match self.tok.clone() {
            Tok::Num(v) => {
                self.advance()?;
                Ok(Expr::Num(v))
            }
            Tok::LParen => {
                self.advance()?;
                let e = self.expr()?;
                self.expect(Tok::RParen, "')'")?;
                Ok(e)
            }
            Tok::Ident(name) => {
                self.advance()?;
                if self.tok == Tok::LParen {
                    let func = Func::lookup(&name)
                        .ok_or_else(|| self.error_at(start, format!("unknown function '{name}'")))?;
                    self.advance()?;
                    let mut args = vec![self.expr()?];
                    while self.tok == Tok::Comma {
                        self.advance()?;
                        args.push(self.expr()?);
                    }
                    self.expect(Tok::RParen, "')'")?;
                    if args.len() != func.arity() {
                        return Err(self.error_at(
                            start,
                            format!("arity mismatch: '{name}' takes {} argument(s), got {}", func.arity(), args.len()),
                        ));
                    }
                    return Ok(Expr::Call(func, args));
                }
                match name.as_str() {
                    "x" => Ok(Expr::Var(Var::X)),
                    "y" => Ok(Expr::Var(Var::Y)),
                    "pi" => Ok(Expr::Const(Constant::Pi)),
                    "e" => Ok(Expr::Const(Constant::E)),
                    _ if Func::lookup(&name).is_some() => {
                        Err(self.error_at(start, format!("function '{name}' needs arguments")))
                    }
                    _ => Err(self.error_at(start, format!("unknown identifier '{name}'"))),
                }
            }
            Tok::End => Err(self.error_here("unexpected end of input")),
            _ => Err(self.error_here("expected a number, variable, call or '('")),
        }
    }
}
