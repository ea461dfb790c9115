//! Infix rendering and parsing.
//!
//! Grammar (whitespace-insensitive):
//!
//! ```text
//! sum     := product (("+" | "-") product)*
//! product := unary (("*" | "/") unary)*
//! unary   := ("-" | "+") unary | power
//! power   := atom ("^" unary)?
//! atom    := number | name | func "(" sum ")" | "(" sum ")"
//! func    := "sin" | "exp" | "abs" | "sgn"
//! ```
//!
//! `pi` and `e` are recognized unless shadowed by a variable name. Exponents
//! must reduce to constants.

use std::f64::consts::{E, PI};

use super::{normalize, Expr};
use crate::error::{Error, Result};

const MAX_FRACTION_DENOMINATOR: i64 = 20;

/// Renders `e` with `var_names[i]` for `Var(i)`; `Var(var_names.len())` is
/// the constant input and renders as `2`.
pub fn to_text(e: &Expr, var_names: &[String]) -> String {
    let mut out = String::new();
    Printer { names: var_names }.sum(e, &mut out);
    out
}

struct Printer<'a> {
    names: &'a [String],
}

impl Printer<'_> {
    fn sum(&self, e: &Expr, out: &mut String) {
        match e {
            Expr::Sum(terms) if !terms.is_empty() => {
                for (i, t) in terms.iter().enumerate() {
                    let t = if let Expr::Sum(_) = t {
                        // nested sums only occur in unnormalized trees
                        out.push_str(if i == 0 { "" } else { " + " });
                        out.push('(');
                        self.sum(t, out);
                        out.push(')');
                        continue;
                    } else {
                        t
                    };
                    if i == 0 {
                        self.product(t, out);
                    } else if let Some(neg) = negated(t) {
                        out.push_str(" - ");
                        self.product(&neg, out);
                    } else {
                        out.push_str(" + ");
                        self.product(t, out);
                    }
                }
            }
            other => self.product(other, out),
        }
    }

    fn product(&self, e: &Expr, out: &mut String) {
        match e {
            Expr::Prod(fs) if !fs.is_empty() => {
                let mut rest = &fs[..];
                if let Expr::Const(c) = fs[0] {
                    if fs.len() > 1 && c == -1.0 {
                        out.push('-');
                        rest = &fs[1..];
                    } else if fs.len() > 1 && c != 1.0 {
                        out.push_str(&self.number(c));
                        out.push('*');
                        rest = &fs[1..];
                    }
                }
                for (i, f) in rest.iter().enumerate() {
                    if i > 0 {
                        out.push('*');
                    }
                    match f {
                        Expr::Sum(_) | Expr::Prod(_) => {
                            out.push('(');
                            self.sum(f, out);
                            out.push(')');
                        }
                        Expr::Const(c) if i > 0 || rest.len() < fs.len() => {
                            self.operand_const(*c, out)
                        }
                        _ => self.power(f, out),
                    }
                }
            }
            Expr::Const(c) => out.push_str(&self.number(*c)),
            other => self.power(other, out),
        }
    }

    fn power(&self, e: &Expr, out: &mut String) {
        match e {
            Expr::Pow(b, p) => {
                match b.as_ref() {
                    Expr::Var(_) | Expr::Abs(_) | Expr::Sin(_) | Expr::Exp(_) | Expr::Sgn(_) => {
                        self.power(b, out)
                    }
                    Expr::Const(c) => self.operand_const(*c, out),
                    other => {
                        out.push('(');
                        self.sum(other, out);
                        out.push(')');
                    }
                }
                out.push('^');
                let text = self.number(*p);
                if *p < 0.0 || text.contains('/') {
                    out.push('(');
                    out.push_str(&text);
                    out.push(')');
                } else {
                    out.push_str(&text);
                }
            }
            Expr::Var(i) => match self.names.get(*i) {
                Some(name) => out.push_str(name),
                None if *i == self.names.len() => out.push('2'),
                None => out.push_str(&format!("x{}", i + 1)),
            },
            Expr::Abs(a) => self.call("abs", a, out),
            Expr::Sin(a) => self.call("sin", a, out),
            Expr::Exp(a) => self.call("exp", a, out),
            Expr::Sgn(a) => self.call("sgn", a, out),
            Expr::Const(c) => self.operand_const(*c, out),
            Expr::Sum(_) | Expr::Prod(_) => {
                out.push('(');
                self.sum(e, out);
                out.push(')');
            }
        }
    }

    fn call(&self, name: &str, arg: &Expr, out: &mut String) {
        out.push_str(name);
        out.push('(');
        self.sum(arg, out);
        out.push(')');
    }

    /// A constant in operand position: parenthesized unless a plain
    /// nonnegative literal.
    fn operand_const(&self, c: f64, out: &mut String) {
        let text = self.number(c);
        if c < 0.0 || text.contains('/') || text.contains('e') && !self.is_named(&text) {
            out.push('(');
            out.push_str(&text);
            out.push(')');
        } else {
            out.push_str(&text);
        }
    }

    fn is_named(&self, text: &str) -> bool {
        text == "pi" || text == "e"
    }

    fn number(&self, c: f64) -> String {
        let shadowed = |n: &str| self.names.iter().any(|v| v == n);
        if c == PI && !shadowed("pi") {
            return "pi".into();
        }
        if c == E && !shadowed("e") {
            return "e".into();
        }
        let plain = format_float(c);
        if plain.len() > 8 {
            if let Some((p, d)) = as_fraction(c) {
                return format!("{p}/{d}");
            }
        }
        plain
    }
}

/// Shortest round-trip decimal, switching to exponent form outside
/// `[1e-5, 1e15)`.
pub(crate) fn format_float(c: f64) -> String {
    let a = c.abs();
    if c == 0.0 {
        "0".into()
    } else if (1e-5..1e15).contains(&a) {
        format!("{c}")
    } else {
        format!("{c:e}")
    }
}

fn as_fraction(c: f64) -> Option<(i64, i64)> {
    (2..=MAX_FRACTION_DENOMINATOR).find_map(|d| {
        let p = (c * d as f64).round();
        (p.abs() < 1e12 && p / d as f64 == c).then_some((p as i64, d))
    })
}

fn negated(t: &Expr) -> Option<Expr> {
    match t {
        Expr::Const(c) if *c < 0.0 => Some(Expr::Const(-c)),
        Expr::Prod(fs) => match fs.first() {
            Some(Expr::Const(c)) if *c < 0.0 => {
                let mut rest = fs[1..].to_vec();
                if *c != -1.0 {
                    rest.insert(0, Expr::Const(-c));
                }
                Some(if rest.len() == 1 {
                    rest.pop().expect("one factor")
                } else {
                    Expr::Prod(rest)
                })
            }
            _ => None,
        },
        _ => None,
    }
}

/// Parses `s` and returns its normalized tree.
pub fn parse_text(s: &str, var_names: &[String]) -> Result<Expr> {
    let mut p = Parser {
        src: s.as_bytes(),
        pos: 0,
        names: var_names,
    };
    let e = p.sum()?;
    p.skip_ws();
    if p.pos < p.src.len() {
        return Err(p.error("unexpected trailing input"));
    }
    Ok(normalize(&e))
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
    names: &'a [String],
}

impl Parser<'_> {
    fn error(&self, msg: &str) -> Error {
        Error::Parse {
            pos: self.pos,
            msg: msg.to_string(),
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn eat(&mut self, c: u8) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn sum(&mut self) -> Result<Expr> {
        let mut terms = vec![self.product()?];
        loop {
            if self.eat(b'+') {
                terms.push(self.product()?);
            } else if self.eat(b'-') {
                terms.push(negate(self.product()?));
            } else {
                break;
            }
        }
        Ok(if terms.len() == 1 {
            terms.pop().expect("one term")
        } else {
            Expr::Sum(terms)
        })
    }

    fn product(&mut self) -> Result<Expr> {
        let mut acc = self.unary()?;
        loop {
            if self.eat(b'*') {
                let rhs = self.unary()?;
                acc = match (&acc, &rhs) {
                    (Expr::Const(a), Expr::Const(b)) => Expr::Const(a * b),
                    _ => Expr::Prod(vec![acc, rhs]),
                };
            } else if self.eat(b'/') {
                let rhs = self.unary()?;
                acc = match (&acc, &rhs) {
                    (Expr::Const(a), Expr::Const(b)) => Expr::Const(a / b),
                    _ => Expr::Prod(vec![acc, Expr::pow(rhs, -1.0)]),
                };
            } else {
                return Ok(acc);
            }
        }
    }

    fn unary(&mut self) -> Result<Expr> {
        if self.eat(b'-') {
            Ok(negate(self.unary()?))
        } else if self.eat(b'+') {
            self.unary()
        } else {
            self.power()
        }
    }

    fn power(&mut self) -> Result<Expr> {
        let base = self.atom()?;
        if !self.eat(b'^') {
            return Ok(base);
        }
        let at = self.pos;
        let exponent = normalize(&self.unary()?);
        match exponent {
            Expr::Const(p) => Ok(match base {
                Expr::Const(b) if b >= 0.0 || p.fract() == 0.0 => Expr::Const(b.powf(p)),
                _ => Expr::pow(base, p),
            }),
            _ => Err(Error::Parse {
                pos: at,
                msg: "exponent must be a constant".into(),
            }),
        }
    }

    fn atom(&mut self) -> Result<Expr> {
        match self.peek() {
            Some(b'(') => {
                self.pos += 1;
                let e = self.sum()?;
                if !self.eat(b')') {
                    return Err(self.error("expected ')'"));
                }
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() || c == b'_' => self.name(),
            Some(_) => Err(self.error("unexpected character")),
            None => Err(self.error("unexpected end of input")),
        }
    }

    fn number(&mut self) -> Result<Expr> {
        let start = self.pos;
        let digits = |p: &mut Self| {
            while p.pos < p.src.len() && p.src[p.pos].is_ascii_digit() {
                p.pos += 1;
            }
        };
        digits(self);
        if self.src.get(self.pos) == Some(&b'.') {
            self.pos += 1;
            digits(self);
        }
        if matches!(self.src.get(self.pos), Some(b'e' | b'E')) {
            let save = self.pos;
            self.pos += 1;
            if matches!(self.src.get(self.pos), Some(b'+' | b'-')) {
                self.pos += 1;
            }
            if self.src.get(self.pos).is_some_and(u8::is_ascii_digit) {
                digits(self);
            } else {
                self.pos = save;
            }
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii");
        text.parse::<f64>().map(Expr::Const).map_err(|_| Error::Parse {
            pos: start,
            msg: format!("malformed number '{text}'"),
        })
    }

    fn name(&mut self) -> Result<Expr> {
        let start = self.pos;
        while self.pos < self.src.len()
            && (self.src[self.pos].is_ascii_alphanumeric() || self.src[self.pos] == b'_')
        {
            self.pos += 1;
        }
        let name = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii");
        if let Some(i) = self.names.iter().position(|n| n == name) {
            return Ok(Expr::Var(i));
        }
        let func: Option<fn(Expr) -> Expr> = match name {
            "sin" => Some(Expr::sin),
            "exp" => Some(Expr::exp),
            "abs" => Some(Expr::abs),
            "sgn" => Some(Expr::sgn),
            _ => None,
        };
        if let Some(f) = func {
            if !self.eat(b'(') {
                return Err(self.error("expected '(' after function name"));
            }
            let arg = self.sum()?;
            if !self.eat(b')') {
                return Err(self.error("expected ')'"));
            }
            return Ok(f(arg));
        }
        match name {
            "pi" => Ok(Expr::Const(PI)),
            "e" => Ok(Expr::Const(E)),
            _ => Err(Error::Parse {
                pos: start,
                msg: format!("unknown name '{name}'"),
            }),
        }
    }
}

fn negate(e: Expr) -> Expr {
    match e {
        Expr::Const(c) => Expr::Const(-c),
        other => Expr::Prod(vec![Expr::Const(-1.0), other]),
    }
}
