//! A small arithmetic expression language for coefficient, potential and
//! nonlinearity fields.
//!
//! Grammar (usual precedence, `^` right-associative):
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := unary (('*' | '/') unary)*
//! unary  := '-' unary | power
//! power  := atom ('^' unary)?
//! atom   := number | 'pi' | var | func '(' expr ')' | '(' expr ')'
//! var    := 'x1' | 'x2' | 'x3' | 's'
//! func   := 'exp' | 'sin' | 'cos' | 'sqrt' | 'abs' | 'sgn'
//! ```
//!
//! Evaluation is forward-mode: every evaluation also returns the exact
//! partial derivatives with respect to `x1, x2, x3, s`.

use alloc::boxed::Box;
use alloc::format;
use alloc::string::{String, ToString};
use core::fmt;

use crate::error::{Error, Result};
use crate::math;

/// Number of independent variables carried by [`Dual`]: `x1, x2, x3, s`.
pub const NVARS: usize = 4;
/// Index of `s` within [`Dual::d`].
pub const S_INDEX: usize = 3;

/// Value with its gradient with respect to `(x1, x2, x3, s)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dual {
    pub v: f64,
    pub d: [f64; NVARS],
}

impl Dual {
    pub fn constant(v: f64) -> Self {
        Dual { v, d: [0.0; NVARS] }
    }

    pub fn variable(v: f64, index: usize) -> Self {
        let mut d = [0.0; NVARS];
        d[index] = 1.0;
        Dual { v, d }
    }

    fn chain(self, v: f64, dv: f64) -> Self {
        let mut d = self.d;
        for x in d.iter_mut() {
            *x *= dv;
        }
        Dual { v, d }
    }

    fn add(self, o: Dual) -> Dual {
        let mut d = self.d;
        for (a, b) in d.iter_mut().zip(o.d) {
            *a += b;
        }
        Dual { v: self.v + o.v, d }
    }

    fn sub(self, o: Dual) -> Dual {
        let mut d = self.d;
        for (a, b) in d.iter_mut().zip(o.d) {
            *a -= b;
        }
        Dual { v: self.v - o.v, d }
    }

    fn mul(self, o: Dual) -> Dual {
        let mut d = [0.0; NVARS];
        for (k, dk) in d.iter_mut().enumerate() {
            *dk = self.d[k] * o.v + self.v * o.d[k];
        }
        Dual { v: self.v * o.v, d }
    }

    fn div(self, o: Dual) -> Dual {
        let v = self.v / o.v;
        let mut d = [0.0; NVARS];
        for (k, dk) in d.iter_mut().enumerate() {
            *dk = (self.d[k] - v * o.d[k]) / o.v;
        }
        Dual { v, d }
    }

    fn neg(self) -> Dual {
        self.chain(-self.v, -1.0)
    }

    fn pow(self, e: Dual) -> Dual {
        let exponent_is_const = e.d.iter().all(|&x| x == 0.0);
        if exponent_is_const {
            let p = e.v;
            if self.v == 0.0 {
                // d/dx x^p at 0 is 0 for p > 1, undefined otherwise; report 0.
                let v = if p == 0.0 { 1.0 } else { 0.0 };
                let dv = if p == 1.0 { 1.0 } else { 0.0 };
                return self.chain(v, dv);
            }
            if p == libm::trunc(p) && p.abs() < 1e6 {
                let v = math::powi(self.v, p as i32);
                let dv = p * math::powi(self.v, p as i32 - 1);
                return self.chain(v, dv);
            }
            let v = math::powf(self.v, p);
            return self.chain(v, p * v / self.v);
        }
        // a^b = exp(b ln a), a > 0
        let ln_a = self.chain(math::ln(self.v), 1.0 / self.v);
        let prod = e.mul(ln_a);
        let v = math::exp(prod.v);
        prod.chain(v, v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Exp,
    Sin,
    Cos,
    Sqrt,
    Abs,
    Sgn,
}

impl Func {
    fn name(self) -> &'static str {
        match self {
            Func::Exp => "exp",
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Sqrt => "sqrt",
            Func::Abs => "abs",
            Func::Sgn => "sgn",
        }
    }

    fn apply(self, a: Dual) -> Dual {
        match self {
            Func::Exp => {
                let v = math::exp(a.v);
                a.chain(v, v)
            }
            Func::Sin => a.chain(math::sin(a.v), math::cos(a.v)),
            Func::Cos => a.chain(math::cos(a.v), -math::sin(a.v)),
            Func::Sqrt => {
                let v = math::sqrt(a.v);
                a.chain(v, if v > 0.0 { 0.5 / v } else { 0.0 })
            }
            Func::Abs => a.chain(a.v.abs(), math::sgn(a.v)),
            Func::Sgn => a.chain(math::sgn(a.v), 0.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    /// `0..3` are `x1..x3`, `S_INDEX` is `s`.
    Var(usize),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
}

impl Expr {
    pub fn parse(src: &str) -> Result<Expr> {
        let mut p = Parser { src: src.as_bytes(), pos: 0 };
        let e = p.expr()?;
        p.skip_ws();
        if p.pos != p.src.len() {
            return Err(p.error("unexpected trailing input"));
        }
        Ok(e)
    }

    /// Evaluates with exact gradient with respect to `(x1, x2, x3, s)`.
    pub fn eval_dual(&self, x: &[f64], s: f64) -> Dual {
        match self {
            Expr::Num(v) => Dual::constant(*v),
            Expr::Var(i) if *i == S_INDEX => Dual::variable(s, S_INDEX),
            Expr::Var(i) => Dual::variable(x.get(*i).copied().unwrap_or(0.0), *i),
            Expr::Neg(a) => a.eval_dual(x, s).neg(),
            Expr::Add(a, b) => a.eval_dual(x, s).add(b.eval_dual(x, s)),
            Expr::Sub(a, b) => a.eval_dual(x, s).sub(b.eval_dual(x, s)),
            Expr::Mul(a, b) => a.eval_dual(x, s).mul(b.eval_dual(x, s)),
            Expr::Div(a, b) => a.eval_dual(x, s).div(b.eval_dual(x, s)),
            Expr::Pow(a, b) => a.eval_dual(x, s).pow(b.eval_dual(x, s)),
            Expr::Call(f, a) => f.apply(a.eval_dual(x, s)),
        }
    }

    pub fn eval(&self, x: &[f64], s: f64) -> f64 {
        self.eval_dual(x, s).v
    }

    /// Largest spatial variable index used plus one (0 if none).
    pub fn spatial_arity(&self) -> usize {
        match self {
            Expr::Num(_) => 0,
            Expr::Var(i) if *i == S_INDEX => 0,
            Expr::Var(i) => i + 1,
            Expr::Neg(a) | Expr::Call(_, a) => a.spatial_arity(),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) | Expr::Pow(a, b) => a.spatial_arity().max(b.spatial_arity()),
        }
    }

    pub fn uses_s(&self) -> bool {
        match self {
            Expr::Num(_) => false,
            Expr::Var(i) => *i == S_INDEX,
            Expr::Neg(a) | Expr::Call(_, a) => a.uses_s(),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) | Expr::Pow(a, b) => a.uses_s() || b.uses_s(),
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(v) => {
                if *v < 0.0 {
                    write!(f, "({v:?})")
                } else {
                    write!(f, "{v:?}")
                }
            }
            Expr::Var(i) if *i == S_INDEX => f.write_str("s"),
            Expr::Var(i) => write!(f, "x{}", i + 1),
            Expr::Neg(a) => write!(f, "(-{a})"),
            Expr::Add(a, b) => write!(f, "({a} + {b})"),
            Expr::Sub(a, b) => write!(f, "({a} - {b})"),
            Expr::Mul(a, b) => write!(f, "({a} * {b})"),
            Expr::Div(a, b) => write!(f, "({a} / {b})"),
            Expr::Pow(a, b) => write!(f, "({a} ^ {b})"),
            Expr::Call(func, a) => write!(f, "{}({a})", func.name()),
        }
    }
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl Parser<'_> {
    fn error(&self, message: &str) -> Error {
        Error::Parse {
            position: self.pos,
            message: message.to_string(),
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

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        loop {
            if self.eat(b'+') {
                lhs = Expr::Add(Box::new(lhs), Box::new(self.term()?));
            } else if self.eat(b'-') {
                lhs = Expr::Sub(Box::new(lhs), Box::new(self.term()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        loop {
            if self.eat(b'*') {
                lhs = Expr::Mul(Box::new(lhs), Box::new(self.unary()?));
            } else if self.eat(b'/') {
                lhs = Expr::Div(Box::new(lhs), Box::new(self.unary()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn unary(&mut self) -> Result<Expr> {
        if self.eat(b'-') {
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        if self.eat(b'+') {
            return self.unary();
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr> {
        let base = self.atom()?;
        if self.eat(b'^') {
            let exponent = self.unary()?;
            return Ok(Expr::Pow(Box::new(base), Box::new(exponent)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr> {
        match self.peek() {
            None => Err(self.error("unexpected end of input")),
            Some(b'(') => {
                self.pos += 1;
                let e = self.expr()?;
                if !self.eat(b')') {
                    return Err(self.error("expected ')'"));
                }
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() => self.ident(),
            Some(_) => Err(self.error("unexpected character")),
        }
    }

    fn number(&mut self) -> Result<Expr> {
        let start = self.pos;
        while self.pos < self.src.len() {
            let c = self.src[self.pos];
            let exp_sign = (c == b'+' || c == b'-') && self.pos > start && matches!(self.src[self.pos - 1], b'e' | b'E');
            if c.is_ascii_digit() || c == b'.' || c == b'e' || c == b'E' || exp_sign {
                self.pos += 1;
            } else {
                break;
            }
        }
        let text = core::str::from_utf8(&self.src[start..self.pos]).map_err(|_| self.error("bad utf-8"))?;
        text.parse::<f64>().map(Expr::Num).map_err(|_| Error::Parse {
            position: start,
            message: format!("bad number '{text}'"),
        })
    }

    fn ident(&mut self) -> Result<Expr> {
        let start = self.pos;
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_alphanumeric() {
            self.pos += 1;
        }
        let name: String = core::str::from_utf8(&self.src[start..self.pos]).map_err(|_| self.error("bad utf-8"))?.into();
        let func = match name.as_str() {
            "s" => return Ok(Expr::Var(S_INDEX)),
            "x1" => return Ok(Expr::Var(0)),
            "x2" => return Ok(Expr::Var(1)),
            "x3" => return Ok(Expr::Var(2)),
            "pi" => return Ok(Expr::Num(math::PI)),
            "exp" => Func::Exp,
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "sqrt" => Func::Sqrt,
            "abs" => Func::Abs,
            "sgn" => Func::Sgn,
            _ => {
                return Err(Error::Parse {
                    position: start,
                    message: format!("unknown identifier '{name}'"),
                })
            }
        };
        if !self.eat(b'(') {
            return Err(self.error("expected '(' after function name"));
        }
        let arg = self.expr()?;
        if !self.eat(b')') {
            return Err(self.error("expected ')'"));
        }
        Ok(Expr::Call(func, Box::new(arg)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(src: &str, x: &[f64], s: f64) -> f64 {
        Expr::parse(src).unwrap().eval(x, s)
    }

    #[test]
    fn precedence() {
        assert_eq!(ev("1 + 2 * 3", &[], 0.0), 7.0);
        assert_eq!(ev("2 ^ 3 ^ 2", &[], 0.0), 512.0);
        assert_eq!(ev("-2 ^ 2", &[], 0.0), -4.0);
        assert_eq!(ev("(1 + 2) * 3", &[], 0.0), 9.0);
        assert_eq!(ev("1e-2 * 100", &[], 0.0), 1.0);
        assert_eq!(ev("x1 - x2 / 2", &[3.0, 4.0], 0.0), 1.0);
    }

    #[test]
    fn gradients_are_exact() {
        let e = Expr::parse("1 + x1^2/4 + sin(x2)*s").unwrap();
        let d = e.eval_dual(&[0.6, 0.3], 2.0);
        assert!((d.d[0] - 0.3).abs() < 1e-15);
        assert!((d.d[1] - 2.0 * libm::cos(0.3)).abs() < 1e-15);
        assert!((d.d[S_INDEX] - libm::sin(0.3)).abs() < 1e-15);
    }

    #[test]
    fn fractional_power_of_abs() {
        let e = Expr::parse("abs(s)^(-0.5)*s").unwrap();
        assert!((e.eval(&[], -4.0) + 2.0).abs() < 1e-15);
    }

    #[test]
    fn errors_have_positions() {
        assert!(matches!(Expr::parse("1 +"), Err(Error::Parse { .. })));
        assert!(matches!(Expr::parse("foo(1)"), Err(Error::Parse { position: 0, .. })));
        assert!(matches!(Expr::parse("(1"), Err(Error::Parse { .. })));
        assert!(matches!(Expr::parse("1 2"), Err(Error::Parse { .. })));
    }

    #[test]
    fn display_reparses() {
        let e = Expr::parse("exp(-x1^2) * (1 - 0.5*x2) / cos(s)").unwrap();
        let back = Expr::parse(&alloc::format!("{e}")).unwrap();
        for &(a, b, s) in &[(0.1, 0.2, 0.3), (-0.7, 0.4, 1.1)] {
            assert_eq!(e.eval(&[a, b], s), back.eval(&[a, b], s));
        }
    }
}
