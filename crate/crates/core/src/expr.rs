//! A tiny arithmetic expression language for coefficient and data fields.
//!
//! Grammar:
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := unary (('*' | '/') unary)*
//! unary  := '-' unary | atom
//! atom   := number | 'pi' | 'π' | var | func '(' expr ')' | '(' expr ')'
//! var    := ('x' | 'y') digit+          (1-based component index)
//! func   := 'sin' | 'cos' | 'step'     (step(t) = 1 for t >= 0, else 0)
//! ```

use crate::error::{Error, Result};
use std::fmt;

#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Const(f64),
    X(usize),
    Y(usize),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Sin(Box<Expr>),
    Cos(Box<Expr>),
    Step(Box<Expr>),
}

impl Expr {
    pub fn parse(src: &str) -> Result<Self> {
        let mut p = Parser {
            chars: src.char_indices().collect(),
            pos: 0,
        };
        let e = p.expr()?;
        p.skip_ws();
        if p.pos < p.chars.len() {
            return Err(p.err("unexpected trailing input"));
        }
        Ok(e)
    }

    /// Evaluates with slow variable `x` and fast variable `y`.
    pub fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        match self {
            Expr::Const(c) => *c,
            Expr::X(i) => x.get(*i).copied().unwrap_or(f64::NAN),
            Expr::Y(i) => y.get(*i).copied().unwrap_or(f64::NAN),
            Expr::Neg(a) => -a.eval(x, y),
            Expr::Add(a, b) => a.eval(x, y) + b.eval(x, y),
            Expr::Sub(a, b) => a.eval(x, y) - b.eval(x, y),
            Expr::Mul(a, b) => a.eval(x, y) * b.eval(x, y),
            Expr::Div(a, b) => a.eval(x, y) / b.eval(x, y),
            Expr::Sin(a) => a.eval(x, y).sin(),
            Expr::Cos(a) => a.eval(x, y).cos(),
            Expr::Step(a) => {
                if a.eval(x, y) >= 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// Highest variable index referenced, as (x, y) counts.
    pub fn arity(&self) -> (usize, usize) {
        match self {
            Expr::Const(_) => (0, 0),
            Expr::X(i) => (i + 1, 0),
            Expr::Y(i) => (0, i + 1),
            Expr::Neg(a) | Expr::Sin(a) | Expr::Cos(a) | Expr::Step(a) => a.arity(),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => {
                let (ax, ay) = a.arity();
                let (bx, by) = b.arity();
                (ax.max(bx), ay.max(by))
            }
        }
    }

    pub fn depends_on_y(&self) -> bool {
        self.arity().1 > 0
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(c) => write!(f, "{c}"),
            Expr::X(i) => write!(f, "x{}", i + 1),
            Expr::Y(i) => write!(f, "y{}", i + 1),
            Expr::Neg(a) => write!(f, "-({a})"),
            Expr::Add(a, b) => write!(f, "({a} + {b})"),
            Expr::Sub(a, b) => write!(f, "({a} - {b})"),
            Expr::Mul(a, b) => write!(f, "({a} * {b})"),
            Expr::Div(a, b) => write!(f, "({a} / {b})"),
            Expr::Sin(a) => write!(f, "sin({a})"),
            Expr::Cos(a) => write!(f, "cos({a})"),
            Expr::Step(a) => write!(f, "step({a})"),
        }
    }
}

impl std::str::FromStr for Expr {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Expr::parse(s)
    }
}

impl serde::Serialize for Expr {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> serde::Deserialize<'de> for Expr {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let src = String::deserialize(d)?;
        Expr::parse(&src).map_err(serde::de::Error::custom)
    }
}

struct Parser {
    chars: Vec<(usize, char)>,
    pos: usize,
}

impl Parser {
    fn err(&self, msg: &str) -> Error {
        let offset = self
            .chars
            .get(self.pos)
            .map(|c| c.0)
            .unwrap_or_else(|| self.chars.last().map(|c| c.0 + 1).unwrap_or(0));
        Error::Parse {
            pos: offset,
            msg: msg.to_string(),
        }
    }

    fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).map(|c| c.1)
    }

    fn skip_ws(&mut self) {
        while matches!(self.peek(), Some(c) if c.is_whitespace()) {
            self.pos += 1;
        }
    }

    fn eat(&mut self, c: char) -> bool {
        self.skip_ws();
        if self.peek() == Some(c) {
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
                lhs = Expr::Add(Box::new(lhs), Box::new(self.term()?));
            } else if self.eat('-') || self.eat('−') {
                lhs = Expr::Sub(Box::new(lhs), Box::new(self.term()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        loop {
            if self.eat('*') {
                lhs = Expr::Mul(Box::new(lhs), Box::new(self.unary()?));
            } else if self.eat('/') {
                lhs = Expr::Div(Box::new(lhs), Box::new(self.unary()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn unary(&mut self) -> Result<Expr> {
        if self.eat('-') || self.eat('−') {
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        self.atom()
    }

    fn atom(&mut self) -> Result<Expr> {
        self.skip_ws();
        let c = self.peek().ok_or_else(|| self.err("unexpected end of input"))?;
        if c == '(' {
            self.pos += 1;
            let e = self.expr()?;
            if !self.eat(')') {
                return Err(self.err("expected ')'"));
            }
            return Ok(e);
        }
        if c == 'π' {
            self.pos += 1;
            return Ok(Expr::Const(std::f64::consts::PI));
        }
        if c.is_ascii_digit() || c == '.' {
            return self.number();
        }
        if c.is_ascii_alphabetic() {
            let start = self.pos;
            while matches!(self.peek(), Some(ch) if ch.is_ascii_alphanumeric()) {
                self.pos += 1;
            }
            let word: String = self.chars[start..self.pos].iter().map(|c| c.1).collect();
            return match word.as_str() {
                "pi" => Ok(Expr::Const(std::f64::consts::PI)),
                "sin" | "cos" | "step" => {
                    if !self.eat('(') {
                        return Err(self.err("expected '(' after function name"));
                    }
                    let arg = self.expr()?;
                    if !self.eat(')') {
                        return Err(self.err("expected ')'"));
                    }
                    let arg = Box::new(arg);
                    Ok(match word.as_str() {
                        "sin" => Expr::Sin(arg),
                        "cos" => Expr::Cos(arg),
                        _ => Expr::Step(arg),
                    })
                }
                w if (w.starts_with('x') || w.starts_with('y')) && w.len() > 1 => {
                    let idx: usize = w[1..].parse().map_err(|_| {
                        self.pos = start;
                        self.err("bad variable name")
                    })?;
                    if idx == 0 {
                        self.pos = start;
                        return Err(self.err("variable indices are 1-based"));
                    }
                    Ok(if w.starts_with('x') {
                        Expr::X(idx - 1)
                    } else {
                        Expr::Y(idx - 1)
                    })
                }
                _ => {
                    self.pos = start;
                    Err(self.err(&format!("unknown identifier '{word}'")))
                }
            };
        }
        Err(self.err(&format!("unexpected character '{c}'")))
    }

    fn number(&mut self) -> Result<Expr> {
        let start = self.pos;
        while matches!(self.peek(), Some(c) if c.is_ascii_digit() || c == '.') {
            self.pos += 1;
        }
        if matches!(self.peek(), Some('e') | Some('E')) {
            let save = self.pos;
            self.pos += 1;
            if matches!(self.peek(), Some('+') | Some('-')) {
                self.pos += 1;
            }
            if matches!(self.peek(), Some(c) if c.is_ascii_digit()) {
                while matches!(self.peek(), Some(c) if c.is_ascii_digit()) {
                    self.pos += 1;
                }
            } else {
                self.pos = save;
            }
        }
        let s: String = self.chars[start..self.pos].iter().map(|c| c.1).collect();
        s.parse::<f64>().map(Expr::Const).map_err(|_| {
            self.pos = start;
            self.err("malformed number")
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(s: &str, y: &[f64]) -> f64 {
        Expr::parse(s).unwrap().eval(&[], y)
    }

    #[test]
    fn precedence_and_unary_minus() {
        assert_eq!(ev("1 + 2 * 3", &[]), 7.0);
        assert_eq!(ev("-2 * -3", &[]), 6.0);
        assert_eq!(ev("(1 + 2) * 3 / 4", &[]), 2.25);
        assert_eq!(ev("1 - 2 - 3", &[]), -4.0);
        assert_eq!(ev("2.5e-1", &[]), 0.25);
    }

    #[test]
    fn trig_and_variables() {
        let v = ev("cos(2*pi*y1)*cos(2*pi*y2) + 0.25", &[0.0, 0.5]);
        assert!((v - (-0.75)).abs() < 1e-15);
        assert_eq!(ev("1 + step(sin(2*pi*y1))", &[0.25]), 2.0);
        assert_eq!(ev("1 + step(sin(2*pi*y1))", &[0.75]), 1.0);
        let v = ev("1 + 0.5*sin(2*π*y1)", &[0.25]);
        assert!((v - 1.5).abs() < 1e-15);
        let e = Expr::parse("x1 * y2").unwrap();
        assert_eq!(e.eval(&[3.0], &[0.0, 2.0]), 6.0);
        assert_eq!(e.arity(), (1, 2));
    }

    #[test]
    fn errors_carry_positions() {
        match Expr::parse("1 + foo(2)") {
            Err(Error::Parse { pos, .. }) => assert_eq!(pos, 4),
            other => panic!("unexpected {other:?}"),
        }
        assert!(Expr::parse("(1 + 2").is_err());
        assert!(Expr::parse("y0").is_err());
        assert!(Expr::parse("1 2").is_err());
    }
}
