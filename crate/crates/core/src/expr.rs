//! The scalar expression language used for right-hand sides and tube bounds.
//!
//! Grammar (whitespace is insignificant):
//!
//! ```text
//! expr   := term (("+" | "-") term)*
//! term   := factor (("*" | "/") factor)*
//! factor := "-" factor | base ("^" factor)?
//! base   := number | ident | ident "(" expr ")" | "(" expr ")"
//! ```
//!
//! Identifiers are `t`, `y<k>`, `v<k>` (k ≥ 1) and the functions
//! `cos sin exp log abs sqrt`. Exponents must fold to a constant.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Var {
    T,
    /// State coordinate, 1-based.
    Y(usize),
    /// Control coordinate, 1-based.
    V(usize),
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Var::T => write!(f, "t"),
            Var::Y(k) => write!(f, "y{k}"),
            Var::V(k) => write!(f, "v{k}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Cos,
    Sin,
    Exp,
    Log,
    Abs,
    Sqrt,
}

impl Func {
    fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "cos" => Func::Cos,
            "sin" => Func::Sin,
            "exp" => Func::Exp,
            "log" => Func::Log,
            "abs" => Func::Abs,
            "sqrt" => Func::Sqrt,
            _ => return None,
        })
    }

    fn name(self) -> &'static str {
        match self {
            Func::Cos => "cos",
            Func::Sin => "sin",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Abs => "abs",
            Func::Sqrt => "sqrt",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    Var(Var),
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    /// Power with a constant exponent.
    Pow(Box<Expr>, f64),
    Call(Func, Box<Expr>),
}

/// Variable bindings for evaluation: `t`, `y1..yn`, `v1..vm`.
#[derive(Debug, Clone, Copy)]
pub struct Env<'a> {
    pub t: f64,
    pub y: &'a [f64],
    pub v: &'a [f64],
}

impl<'a> Env<'a> {
    pub fn new(t: f64, y: &'a [f64], v: &'a [f64]) -> Self {
        Env { t, y, v }
    }

    /// Binds only `t`.
    pub fn time(t: f64) -> Env<'static> {
        Env { t, y: &[], v: &[] }
    }

    fn get(&self, var: Var) -> Result<f64> {
        let slot = match var {
            Var::T => return Ok(self.t),
            Var::Y(k) => self.y.get(k.wrapping_sub(1)),
            Var::V(k) => self.v.get(k.wrapping_sub(1)),
        };
        slot.copied()
            .ok_or_else(|| Error::UnboundVariable(var.to_string()))
    }
}

// Folding constructors. They only apply identities that hold exactly.

pub fn constant(c: f64) -> Expr {
    Expr::Const(c)
}

pub fn var(v: Var) -> Expr {
    Expr::Var(v)
}

pub fn neg(e: Expr) -> Expr {
    match e {
        Expr::Const(c) => Expr::Const(-c),
        Expr::Neg(inner) => *inner,
        e => Expr::Neg(Box::new(e)),
    }
}

pub fn add(a: Expr, b: Expr) -> Expr {
    match (a, b) {
        (Expr::Const(x), Expr::Const(y)) => Expr::Const(x + y),
        (Expr::Const(z), e) | (e, Expr::Const(z)) if z == 0.0 => e,
        (a, b) => Expr::Bin(BinOp::Add, Box::new(a), Box::new(b)),
    }
}

pub fn sub(a: Expr, b: Expr) -> Expr {
    match (a, b) {
        (Expr::Const(x), Expr::Const(y)) => Expr::Const(x - y),
        (e, Expr::Const(0.0)) => e,
        (Expr::Const(0.0), e) => neg(e),
        (a, b) => Expr::Bin(BinOp::Sub, Box::new(a), Box::new(b)),
    }
}

pub fn mul(a: Expr, b: Expr) -> Expr {
    match (a, b) {
        (Expr::Const(x), Expr::Const(y)) => Expr::Const(x * y),
        (Expr::Const(z), _) | (_, Expr::Const(z)) if z == 0.0 => Expr::Const(0.0),
        (Expr::Const(o), e) | (e, Expr::Const(o)) if o == 1.0 => e,
        (a, b) => Expr::Bin(BinOp::Mul, Box::new(a), Box::new(b)),
    }
}

pub fn div(a: Expr, b: Expr) -> Expr {
    match (a, b) {
        (e, Expr::Const(1.0)) => e,
        (Expr::Const(x), Expr::Const(y)) if y != 0.0 => Expr::Const(x / y),
        (a, b) => Expr::Bin(BinOp::Div, Box::new(a), Box::new(b)),
    }
}

pub fn pow(base: Expr, exponent: f64) -> Expr {
    if exponent == 1.0 {
        return base;
    }
    if exponent == 0.0 {
        return Expr::Const(1.0);
    }
    Expr::Pow(Box::new(base), exponent)
}

pub fn call(f: Func, arg: Expr) -> Expr {
    Expr::Call(f, Box::new(arg))
}

fn domain(e: &Expr) -> Error {
    Error::Domain(e.to_string())
}

fn check_finite(x: f64, e: &Expr) -> Result<f64> {
    if x.is_nan() {
        Err(domain(e))
    } else {
        Ok(x)
    }
}

fn apply_pow(base: f64, exponent: f64, e: &Expr) -> Result<f64> {
    if exponent.fract() == 0.0 && exponent.abs() <= i32::MAX as f64 {
        if base == 0.0 && exponent < 0.0 {
            return Err(domain(e));
        }
        Ok(base.powi(exponent as i32))
    } else {
        if base < 0.0 || (base == 0.0 && exponent < 0.0) {
            return Err(domain(e));
        }
        Ok(base.powf(exponent))
    }
}

impl Expr {
    pub fn parse(text: &str) -> Result<Expr> {
        Parser::new(text).parse_all()
    }

    pub fn eval(&self, env: &Env<'_>) -> Result<f64> {
        match self {
            Expr::Const(c) => Ok(*c),
            Expr::Var(v) => env.get(*v),
            Expr::Neg(e) => Ok(-e.eval(env)?),
            Expr::Bin(op, a, b) => {
                let x = a.eval(env)?;
                let y = b.eval(env)?;
                match op {
                    BinOp::Add => Ok(x + y),
                    BinOp::Sub => Ok(x - y),
                    BinOp::Mul => Ok(x * y),
                    BinOp::Div => {
                        if y == 0.0 {
                            Err(domain(self))
                        } else {
                            Ok(x / y)
                        }
                    }
                }
            }
            Expr::Pow(b, p) => apply_pow(b.eval(env)?, *p, self),
            Expr::Call(f, a) => {
                let x = a.eval(env)?;
                let r = match f {
                    Func::Cos => x.cos(),
                    Func::Sin => x.sin(),
                    Func::Exp => x.exp(),
                    Func::Abs => x.abs(),
                    Func::Log => {
                        if x <= 0.0 {
                            return Err(domain(self));
                        }
                        x.ln()
                    }
                    Func::Sqrt => {
                        if x < 0.0 {
                            return Err(domain(self));
                        }
                        x.sqrt()
                    }
                };
                check_finite(r, self)
            }
        }
    }

    /// Value of a variable-free expression.
    pub fn constant_value(&self) -> Option<f64> {
        if self.has_vars() {
            return None;
        }
        self.eval(&Env::time(0.0)).ok()
    }

    pub fn has_vars(&self) -> bool {
        let mut found = false;
        self.visit_vars(&mut |_| found = true);
        found
    }

    pub fn depends_on(&self, v: Var) -> bool {
        let mut found = false;
        self.visit_vars(&mut |w| found |= w == v);
        found
    }

    /// Calls `f` on every variable occurrence.
    pub fn visit_vars(&self, f: &mut impl FnMut(Var)) {
        match self {
            Expr::Const(_) => {}
            Expr::Var(v) => f(*v),
            Expr::Neg(e) | Expr::Pow(e, _) | Expr::Call(_, e) => e.visit_vars(f),
            Expr::Bin(_, a, b) => {
                a.visit_vars(f);
                b.visit_vars(f);
            }
        }
    }

    /// Symbolic derivative with respect to `v`, lightly simplified.
    pub fn diff(&self, v: Var) -> Result<Expr> {
        Ok(match self {
            Expr::Const(_) => constant(0.0),
            Expr::Var(w) => constant(if *w == v { 1.0 } else { 0.0 }),
            Expr::Neg(e) => neg(e.diff(v)?),
            Expr::Bin(op, a, b) => {
                let da = a.diff(v)?;
                let db = b.diff(v)?;
                let (a, b) = ((**a).clone(), (**b).clone());
                match op {
                    BinOp::Add => add(da, db),
                    BinOp::Sub => sub(da, db),
                    BinOp::Mul => add(mul(da, b), mul(a, db)),
                    BinOp::Div => div(sub(mul(da, b.clone()), mul(a, db)), pow(b, 2.0)),
                }
            }
            Expr::Pow(b, p) => {
                let db = b.diff(v)?;
                mul(mul(constant(*p), pow((**b).clone(), p - 1.0)), db)
            }
            Expr::Call(f, a) => {
                if !a.depends_on(v) {
                    return Ok(constant(0.0));
                }
                let da = a.diff(v)?;
                let a = (**a).clone();
                match f {
                    Func::Cos => mul(neg(call(Func::Sin, a)), da),
                    Func::Sin => mul(call(Func::Cos, a), da),
                    Func::Exp => mul(call(Func::Exp, a), da),
                    Func::Log => div(da, a),
                    Func::Sqrt => div(da, mul(constant(2.0), call(Func::Sqrt, a))),
                    Func::Abs => return Err(Error::NotDifferentiable(self.to_string())),
                }
            }
        })
    }

    /// Rebuilds the tree with every variable replaced by `f(var)`. Negations are
    /// rebuilt through [`neg`], so a double negation introduced by the
    /// substitution cancels.
    pub fn substitute(&self, f: &impl Fn(Var) -> Expr) -> Expr {
        match self {
            Expr::Const(c) => Expr::Const(*c),
            Expr::Var(v) => f(*v),
            Expr::Neg(e) => neg(e.substitute(f)),
            Expr::Bin(op, a, b) => {
                Expr::Bin(*op, Box::new(a.substitute(f)), Box::new(b.substitute(f)))
            }
            Expr::Pow(b, p) => Expr::Pow(Box::new(b.substitute(f)), *p),
            Expr::Call(func, a) => Expr::Call(*func, Box::new(a.substitute(f))),
        }
    }

    /// `e(t) ↦ e(-t)`; an involution on parsed expressions.
    pub fn reflect_time(&self) -> Expr {
        self.substitute(&|v| match v {
            Var::T => neg(var(Var::T)),
            other => var(other),
        })
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Bin(BinOp::Add | BinOp::Sub, ..) => 1,
            Expr::Bin(BinOp::Mul | BinOp::Div, ..) => 2,
            Expr::Neg(_) => 3,
            Expr::Pow(..) => 4,
            Expr::Const(c) if *c < 0.0 || (*c == 0.0 && c.is_sign_negative()) => 5,
            _ => 6,
        }
    }
}

impl FromStr for Expr {
    type Err = Error;

    fn from_str(s: &str) -> Result<Expr> {
        Expr::parse(s)
    }
}

fn write_number(f: &mut fmt::Formatter<'_>, c: f64) -> fmt::Result {
    if c < 0.0 || (c == 0.0 && c.is_sign_negative()) {
        write!(f, "(-{})", -c)
    } else {
        write!(f, "{c}")
    }
}

fn write_child(f: &mut fmt::Formatter<'_>, e: &Expr, parens: bool) -> fmt::Result {
    if parens {
        write!(f, "({e})")
    } else {
        write!(f, "{e}")
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(c) => write_number(f, *c),
            Expr::Var(v) => write!(f, "{v}"),
            Expr::Neg(e) => {
                write!(f, "-")?;
                write_child(f, e, e.precedence() <= 3)
            }
            Expr::Bin(op, a, b) => {
                let p = self.precedence();
                write_child(f, a, a.precedence() < p)?;
                let sym = match op {
                    BinOp::Add => " + ",
                    BinOp::Sub => " - ",
                    BinOp::Mul => "*",
                    BinOp::Div => "/",
                };
                f.write_str(sym)?;
                write_child(f, b, b.precedence() <= p)
            }
            Expr::Pow(b, p) => {
                write_child(f, b, b.precedence() <= 4)?;
                write!(f, "^")?;
                write_number(f, *p)
            }
            Expr::Call(func, a) => write!(f, "{}({a})", func.name()),
        }
    }
}

struct Parser<'s> {
    src: &'s str,
    pos: usize,
}

impl<'s> Parser<'s> {
    fn new(src: &'s str) -> Self {
        Parser { src, pos: 0 }
    }

    fn err(&self, expected: &str) -> Error {
        Error::Syntax { position: self.pos, expected: expected.to_string() }
    }

    fn skip_ws(&mut self) {
        while let Some(c) = self.src[self.pos..].chars().next() {
            if c.is_whitespace() {
                self.pos += c.len_utf8();
            } else {
                break;
            }
        }
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

    fn parse_all(mut self) -> Result<Expr> {
        let e = self.expr()?;
        if self.peek().is_some() {
            return Err(self.err("operator or end of input"));
        }
        Ok(e)
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        loop {
            if self.eat('+') {
                let rhs = self.term()?;
                lhs = Expr::Bin(BinOp::Add, Box::new(lhs), Box::new(rhs));
            } else if self.eat('-') {
                let rhs = self.term()?;
                lhs = Expr::Bin(BinOp::Sub, Box::new(lhs), Box::new(rhs));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.factor()?;
        loop {
            if self.eat('*') {
                let rhs = self.factor()?;
                lhs = Expr::Bin(BinOp::Mul, Box::new(lhs), Box::new(rhs));
            } else if self.eat('/') {
                let rhs = self.factor()?;
                lhs = Expr::Bin(BinOp::Div, Box::new(lhs), Box::new(rhs));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn factor(&mut self) -> Result<Expr> {
        if self.eat('-') {
            return Ok(neg(self.factor()?));
        }
        let base = self.base()?;
        if self.eat('^') {
            self.skip_ws();
            let at = self.pos;
            let exponent = self.factor()?;
            let value = exponent.constant_value().ok_or(Error::Syntax {
                position: at,
                expected: "constant exponent".into(),
            })?;
            return Ok(Expr::Pow(Box::new(base), value));
        }
        Ok(base)
    }

    fn base(&mut self) -> Result<Expr> {
        match self.peek() {
            Some(c) if c.is_ascii_digit() || c == '.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() => self.ident(),
            Some('(') => {
                self.pos += 1;
                let e = self.expr()?;
                if !self.eat(')') {
                    return Err(self.err("`)`"));
                }
                Ok(e)
            }
            _ => Err(self.err("number, identifier, `(` or `-`")),
        }
    }

    fn number(&mut self) -> Result<Expr> {
        let start = self.pos;
        let bytes = self.src.as_bytes();
        let mut i = self.pos;
        while i < bytes.len() && bytes[i].is_ascii_digit() {
            i += 1;
        }
        if i < bytes.len() && bytes[i] == b'.' {
            i += 1;
            while i < bytes.len() && bytes[i].is_ascii_digit() {
                i += 1;
            }
        }
        if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
            let mut j = i + 1;
            if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                j += 1;
            }
            if j < bytes.len() && bytes[j].is_ascii_digit() {
                while j < bytes.len() && bytes[j].is_ascii_digit() {
                    j += 1;
                }
                i = j;
            }
        }
        let text = &self.src[start..i];
        let value: f64 = text.parse().map_err(|_| self.err("number"))?;
        self.pos = i;
        Ok(Expr::Const(value))
    }

    fn ident(&mut self) -> Result<Expr> {
        let start = self.pos;
        let bytes = self.src.as_bytes();
        let mut i = self.pos;
        while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
            i += 1;
        }
        let name = &self.src[start..i];
        self.pos = i;
        if self.peek() == Some('(') {
            let func = Func::from_name(name)
                .ok_or_else(|| Error::UnknownFunction(name.to_string()))?;
            self.pos += 1;
            let arg = self.expr()?;
            if !self.eat(')') {
                return Err(self.err("`)`"));
            }
            return Ok(call(func, arg));
        }
        if name == "t" {
            return Ok(var(Var::T));
        }
        let index = |rest: &str| rest.parse::<usize>().ok().filter(|&k| k >= 1);
        if let Some(k) = name.strip_prefix('y').and_then(index) {
            return Ok(var(Var::Y(k)));
        }
        if let Some(k) = name.strip_prefix('v').and_then(index) {
            return Ok(var(Var::V(k)));
        }
        Err(Error::Syntax {
            position: start,
            expected: "variable t, y<k> or v<k>".into(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(s: &str) -> Expr {
        Expr::parse(s).unwrap()
    }

    fn at(e: &Expr, t: f64, y: &[f64], v: &[f64]) -> f64 {
        e.eval(&Env::new(t, y, v)).unwrap()
    }

    #[test]
    fn parses_example_component() {
        let e = p("2*t^5*y1 + cos(t*y2) + y2^8 + v1");
        let expected = Expr::Bin(
            BinOp::Add,
            Box::new(Expr::Bin(
                BinOp::Add,
                Box::new(Expr::Bin(
                    BinOp::Add,
                    Box::new(Expr::Bin(
                        BinOp::Mul,
                        Box::new(Expr::Bin(
                            BinOp::Mul,
                            Box::new(constant(2.0)),
                            Box::new(Expr::Pow(Box::new(var(Var::T)), 5.0)),
                        )),
                        Box::new(var(Var::Y(1))),
                    )),
                    Box::new(call(
                        Func::Cos,
                        Expr::Bin(BinOp::Mul, Box::new(var(Var::T)), Box::new(var(Var::Y(2)))),
                    )),
                )),
                Box::new(Expr::Pow(Box::new(var(Var::Y(2))), 8.0)),
            )),
            Box::new(var(Var::V(1))),
        );
        assert_eq!(e, expected);
        assert_eq!(at(&e, 1.0, &[0.0, 0.0], &[0.5, 0.5]), 1.5);
    }

    #[test]
    fn minimal_and_error_inputs() {
        assert_eq!(
            p("1/t"),
            Expr::Bin(BinOp::Div, Box::new(constant(1.0)), Box::new(var(Var::T)))
        );
        match Expr::parse("t +") {
            Err(Error::Syntax { position, .. }) => assert_eq!(position, 3),
            other => panic!("{other:?}"),
        }
        assert_eq!(Expr::parse("foo(t)"), Err(Error::UnknownFunction("foo".into())));
        assert!(matches!(Expr::parse("x + 1"), Err(Error::Syntax { position: 0, .. })));
        assert!(matches!(Expr::parse("t^y1"), Err(Error::Syntax { .. })));
        assert!(matches!(Expr::parse("(t"), Err(Error::Syntax { .. })));
        assert!(matches!(Expr::parse("t t"), Err(Error::Syntax { .. })));
        assert!(matches!(Expr::parse("y0"), Err(Error::Syntax { .. })));
    }

    #[test]
    fn precedence_and_associativity() {
        assert_eq!(at(&p("-t^2"), 3.0, &[], &[]), -9.0);
        assert_eq!(at(&p("2^3^2"), 0.0, &[], &[]), 512.0);
        assert_eq!(at(&p("8/4/2"), 0.0, &[], &[]), 1.0);
        assert_eq!(at(&p("1 - 2 - 3"), 0.0, &[], &[]), -4.0);
        assert_eq!(at(&p("t^-1"), 4.0, &[], &[]), 0.25);
        assert_eq!(at(&p("t^(1/2)"), 4.0, &[], &[]), 2.0);
        assert_eq!(at(&p("(-2)^2"), 0.0, &[], &[]), 4.0);
        assert_eq!(at(&p("1e-3 * 2.5E2"), 0.0, &[], &[]), 0.25);
    }

    #[test]
    fn evaluation_examples() {
        assert_eq!(at(&p("t^2"), -3.0, &[], &[]), 9.0);
        assert!(matches!(p("log(t)").eval(&Env::time(0.0)), Err(Error::Domain(_))));
        assert!(matches!(p("1/t").eval(&Env::time(0.0)), Err(Error::Domain(_))));
        assert!(matches!(p("sqrt(t)").eval(&Env::time(-1.0)), Err(Error::Domain(_))));
        assert!(matches!(p("t^0.5").eval(&Env::time(-1.0)), Err(Error::Domain(_))));
        assert_eq!(
            p("y3").eval(&Env::new(0.0, &[1.0], &[])),
            Err(Error::UnboundVariable("y3".into()))
        );
    }

    #[test]
    fn derivative_examples() {
        let d = p("1/t").diff(Var::T).unwrap();
        for t in [0.5, 1.0, 2.0, -3.0] {
            assert_eq!(at(&d, t, &[], &[]), -1.0 / (t * t));
        }
        let d = p("cos(t*y2)").diff(Var::T).unwrap();
        assert_eq!(d, mul(neg(call(Func::Sin, p("t*y2"))), var(Var::Y(2))));
        assert_eq!(p("t^2 + 3").diff(Var::T).unwrap(), p("2*t"));
        assert_eq!(p("y1*y2").diff(Var::T).unwrap(), constant(0.0));
        assert!(matches!(p("abs(t)").diff(Var::T), Err(Error::NotDifferentiable(_))));
        assert_eq!(p("abs(y1) + t").diff(Var::T).unwrap(), constant(1.0));
    }

    #[test]
    fn printing_round_trips() {
        for s in [
            "-t^2",
            "(-t)^2",
            "t - (y1 - y2)",
            "t/(y1*y2)",
            "(t^2)^3",
            "-(t + 1)",
            "2*t^(-1)",
            "exp(-t)*sin(3*t)",
            "1e-7 + 0.1",
        ] {
            let e = p(s);
            assert_eq!(p(&e.to_string()), e, "{s} printed as {e}");
        }
    }

    #[test]
    fn reflect_time_is_involution() {
        for s in ["t", "-t", "cos(t*y2) + 2*t^5*y1", "1/t", "-(t - 1)"] {
            let e = p(s);
            assert_eq!(e.reflect_time().reflect_time(), e);
        }
        assert_eq!(at(&p("t^3").reflect_time(), 2.0, &[], &[]), -8.0);
    }
}
