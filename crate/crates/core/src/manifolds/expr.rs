//! A small expression language for warping functions: numbers, `r`, `+ - * /`,
//! `^` with a constant exponent, and `sin cos sinh cosh tanh exp ln sqrt`.
//! Derivatives are symbolic.

use std::fmt;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Sinh,
    Cosh,
    Tanh,
    Exp,
    Ln,
    Sqrt,
}

impl Func {
    fn from_name(s: &str) -> Option<Self> {
        Some(match s {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "sinh" => Func::Sinh,
            "cosh" => Func::Cosh,
            "tanh" => Func::Tanh,
            "exp" => Func::Exp,
            "ln" | "log" => Func::Ln,
            "sqrt" => Func::Sqrt,
            _ => return None,
        })
    }

    fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Sinh => "sinh",
            Func::Cosh => "cosh",
            Func::Tanh => "tanh",
            Func::Exp => "exp",
            Func::Ln => "ln",
            Func::Sqrt => "sqrt",
        }
    }

    fn apply(self, x: f64) -> f64 {
        match self {
            Func::Sin => x.sin(),
            Func::Cos => x.cos(),
            Func::Sinh => x.sinh(),
            Func::Cosh => x.cosh(),
            Func::Tanh => x.tanh(),
            Func::Exp => x.exp(),
            Func::Ln => x.ln(),
            Func::Sqrt => x.sqrt(),
        }
    }
}

/// Expression tree in the single variable `r`.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    Var,
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, f64),
    Call(Func, Box<Expr>),
}

use Expr::*;

fn c(v: f64) -> Expr {
    Const(v)
}

fn add(a: Expr, b: Expr) -> Expr {
    match (&a, &b) {
        (Const(x), Const(y)) => c(x + y),
        (Const(x), _) if *x == 0.0 => b,
        (_, Const(y)) if *y == 0.0 => a,
        _ => Add(Box::new(a), Box::new(b)),
    }
}

fn sub(a: Expr, b: Expr) -> Expr {
    match (&a, &b) {
        (Const(x), Const(y)) => c(x - y),
        (_, Const(y)) if *y == 0.0 => a,
        (Const(x), _) if *x == 0.0 => neg(b),
        _ => Sub(Box::new(a), Box::new(b)),
    }
}

fn mul(a: Expr, b: Expr) -> Expr {
    match (&a, &b) {
        (Const(x), Const(y)) => c(x * y),
        (Const(x), _) | (_, Const(x)) if *x == 0.0 => c(0.0),
        (Const(x), _) if *x == 1.0 => b,
        (_, Const(y)) if *y == 1.0 => a,
        _ => Mul(Box::new(a), Box::new(b)),
    }
}

fn div(a: Expr, b: Expr) -> Expr {
    match (&a, &b) {
        (Const(x), _) if *x == 0.0 => c(0.0),
        (_, Const(y)) if *y == 1.0 => a,
        _ => Div(Box::new(a), Box::new(b)),
    }
}

fn neg(a: Expr) -> Expr {
    match a {
        Const(x) => c(-x),
        Neg(inner) => *inner,
        other => Neg(Box::new(other)),
    }
}

fn pow(a: Expr, p: f64) -> Expr {
    if p == 0.0 {
        c(1.0)
    } else if p == 1.0 {
        a
    } else if let Const(x) = a {
        c(x.powf(p))
    } else {
        Pow(Box::new(a), p)
    }
}

fn call(f: Func, a: Expr) -> Expr {
    Call(f, Box::new(a))
}

impl Expr {
    pub fn eval(&self, r: f64) -> f64 {
        match self {
            Const(v) => *v,
            Var => r,
            Neg(a) => -a.eval(r),
            Add(a, b) => a.eval(r) + b.eval(r),
            Sub(a, b) => a.eval(r) - b.eval(r),
            Mul(a, b) => a.eval(r) * b.eval(r),
            Div(a, b) => a.eval(r) / b.eval(r),
            Pow(a, p) => {
                let x = a.eval(r);
                if p.fract() == 0.0 && p.abs() < 64.0 {
                    x.powi(*p as i32)
                } else {
                    x.powf(*p)
                }
            }
            Call(f, a) => f.apply(a.eval(r)),
        }
    }

    /// `d/dr`.
    pub fn derivative(&self) -> Expr {
        match self {
            Const(_) => c(0.0),
            Var => c(1.0),
            Neg(a) => neg(a.derivative()),
            Add(a, b) => add(a.derivative(), b.derivative()),
            Sub(a, b) => sub(a.derivative(), b.derivative()),
            Mul(a, b) => add(
                mul(a.derivative(), (**b).clone()),
                mul((**a).clone(), b.derivative()),
            ),
            Div(a, b) => div(
                sub(
                    mul(a.derivative(), (**b).clone()),
                    mul((**a).clone(), b.derivative()),
                ),
                pow((**b).clone(), 2.0),
            ),
            Pow(a, p) => mul(mul(c(*p), pow((**a).clone(), p - 1.0)), a.derivative()),
            Call(f, a) => {
                let inner = (**a).clone();
                let outer = match f {
                    Func::Sin => call(Func::Cos, inner),
                    Func::Cos => neg(call(Func::Sin, inner)),
                    Func::Sinh => call(Func::Cosh, inner),
                    Func::Cosh => call(Func::Sinh, inner),
                    Func::Tanh => sub(c(1.0), pow(call(Func::Tanh, inner), 2.0)),
                    Func::Exp => call(Func::Exp, inner),
                    Func::Ln => div(c(1.0), inner),
                    Func::Sqrt => div(c(0.5), call(Func::Sqrt, inner)),
                };
                mul(outer, a.derivative())
            }
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Const(v) => write!(f, "{v}"),
            Var => write!(f, "r"),
            Neg(a) => write!(f, "-({a})"),
            Add(a, b) => write!(f, "({a} + {b})"),
            Sub(a, b) => write!(f, "({a} - {b})"),
            Mul(a, b) => write!(f, "({a} * {b})"),
            Div(a, b) => write!(f, "({a} / {b})"),
            Pow(a, p) => write!(f, "({a})^{p}"),
            Call(func, a) => write!(f, "{}({a})", func.name()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
}

fn tokenize(s: &str) -> Result<Vec<(usize, Tok)>> {
    let mut out = Vec::new();
    let chars: Vec<char> = s.chars().collect();
    let mut i = 0;
    while i < chars.len() {
        let ch = chars[i];
        if ch.is_whitespace() {
            i += 1;
        } else if ch.is_ascii_digit() || ch == '.' {
            let start = i;
            while i < chars.len()
                && (chars[i].is_ascii_digit()
                    || chars[i] == '.'
                    || ((chars[i] == 'e' || chars[i] == 'E')
                        && i + 1 < chars.len()
                        && (chars[i + 1].is_ascii_digit() || chars[i + 1] == '-' || chars[i + 1] == '+'))
                    || ((chars[i] == '-' || chars[i] == '+') && (chars[i - 1] == 'e' || chars[i - 1] == 'E')))
            {
                i += 1;
            }
            let text: String = chars[start..i].iter().collect();
            let v = text
                .parse::<f64>()
                .map_err(|_| Error::Parse(format!("bad number '{text}' at {start}")))?;
            out.push((start, Tok::Num(v)));
        } else if ch.is_ascii_alphabetic() {
            let start = i;
            while i < chars.len() && chars[i].is_ascii_alphanumeric() {
                i += 1;
            }
            out.push((start, Tok::Ident(chars[start..i].iter().collect())));
        } else if "+-*/^()".contains(ch) {
            out.push((i, Tok::Op(ch)));
            i += 1;
        } else {
            return Err(Error::Parse(format!("unexpected '{ch}' at {i}")));
        }
    }
    Ok(out)
}

struct Parser {
    toks: Vec<(usize, Tok)>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|t| &t.1)
    }

    fn at(&self) -> usize {
        self.toks.get(self.pos).map(|t| t.0).unwrap_or(usize::MAX)
    }

    fn eat(&mut self, op: char) -> bool {
        if self.peek() == Some(&Tok::Op(op)) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        loop {
            if self.eat('+') {
                lhs = Add(Box::new(lhs), Box::new(self.term()?));
            } else if self.eat('-') {
                lhs = Sub(Box::new(lhs), Box::new(self.term()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        loop {
            if self.eat('*') {
                lhs = Mul(Box::new(lhs), Box::new(self.unary()?));
            } else if self.eat('/') {
                lhs = Div(Box::new(lhs), Box::new(self.unary()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn unary(&mut self) -> Result<Expr> {
        if self.eat('-') {
            return Ok(Neg(Box::new(self.unary()?)));
        }
        if self.eat('+') {
            return self.unary();
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr> {
        let base = self.primary()?;
        if self.eat('^') {
            let at = self.at();
            let exp = self.unary()?;
            return match exp {
                Const(p) => Ok(Pow(Box::new(base), p)),
                Neg(inner) if matches!(*inner, Const(_)) => {
                    let Const(p) = *inner else { unreachable!() };
                    Ok(Pow(Box::new(base), -p))
                }
                _ => Err(Error::Parse(format!("exponent at {at} must be a number"))),
            };
        }
        Ok(base)
    }

    fn primary(&mut self) -> Result<Expr> {
        let at = self.at();
        match self.toks.get(self.pos).map(|t| t.1.clone()) {
            Some(Tok::Num(v)) => {
                self.pos += 1;
                Ok(Const(v))
            }
            Some(Tok::Ident(name)) => {
                self.pos += 1;
                if name == "r" {
                    return Ok(Var);
                }
                if name == "pi" {
                    return Ok(Const(std::f64::consts::PI));
                }
                let f = Func::from_name(&name)
                    .ok_or_else(|| Error::Parse(format!("unknown name '{name}' at {at}")))?;
                if !self.eat('(') {
                    return Err(Error::Parse(format!("expected '(' after {name}")));
                }
                let arg = self.expr()?;
                if !self.eat(')') {
                    return Err(Error::Parse(format!("unclosed call to {name}")));
                }
                Ok(Call(f, Box::new(arg)))
            }
            Some(Tok::Op('(')) => {
                self.pos += 1;
                let e = self.expr()?;
                if !self.eat(')') {
                    return Err(Error::Parse(format!("unbalanced parenthesis opened at {at}")));
                }
                Ok(e)
            }
            Some(t) => Err(Error::Parse(format!("unexpected {t:?} at {at}"))),
            None => Err(Error::Parse("unexpected end of expression".into())),
        }
    }
}

/// Parses an expression in `r`.
pub fn parse(src: &str) -> Result<Expr> {
    let toks = tokenize(src)?;
    let mut p = Parser { toks, pos: 0 };
    let e = p.expr()?;
    if p.pos != p.toks.len() {
        return Err(Error::Parse(format!("trailing input at {}", p.at())));
    }
    Ok(e)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn precedence_and_unary_minus() {
        assert_eq!(parse("1 + 2 * 3").unwrap().eval(0.0), 7.0);
        assert_eq!(parse("-r^2").unwrap().eval(3.0), -9.0);
        assert_eq!(parse("2^-1").unwrap().eval(0.0), 0.5);
        assert_eq!(parse("(1 + r) / 2").unwrap().eval(3.0), 2.0);
        assert_relative_eq!(parse("1.5e-1*r").unwrap().eval(2.0), 0.3);
    }

    #[test]
    fn derivatives_match_hand_values() {
        let e = parse("r*exp(r^2)").unwrap();
        let d = e.derivative();
        let dd = d.derivative();
        let r: f64 = 0.7;
        let ex = (r * r).exp();
        assert_relative_eq!(d.eval(r), ex * (1.0 + 2.0 * r * r), max_relative = 1e-14);
        assert_relative_eq!(dd.eval(r), ex * (6.0 * r + 4.0 * r.powi(3)), max_relative = 1e-14);
        let s = parse("sinh(r)/cosh(2*r) + sqrt(1+r) - ln(2+r) + tanh(r)").unwrap();
        let h = 1e-5;
        let fd = (s.eval(r + h) - s.eval(r - h)) / (2.0 * h);
        assert_relative_eq!(s.derivative().eval(r), fd, max_relative = 1e-8);
    }

    #[test]
    fn malformed_inputs_are_rejected() {
        for bad in ["", "r +", "sinh r", "(r", "foo(r)", "r^r", "2 $ r", "r r"] {
            assert!(matches!(parse(bad), Err(Error::Parse(_))), "{bad}");
        }
    }
}
