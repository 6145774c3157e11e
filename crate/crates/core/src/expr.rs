//! Closed-form scalar fields read from configuration files.
//!
//! Grammar: `+ - * / ^`, parentheses, numeric literals, `pi`, the functions
//! `exp ln log sqrt sin cos tan tanh sinh cosh atan abs`, indexed variables
//! `<p>1 .. <p>n` for a prefix letter `p`, and `r` for the Euclidean norm of
//! all variables. Expressions evaluate over plain `f64` or over [`Dual2`],
//! which carries the exact gradient and Hessian.

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
enum Func {
    Exp,
    Ln,
    Sqrt,
    Sin,
    Cos,
    Tan,
    Tanh,
    Sinh,
    Cosh,
    Atan,
    Abs,
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Num(f64),
    Var(usize),
    Norm,
    Neg(Box<Node>),
    Add(Box<Node>, Box<Node>),
    Sub(Box<Node>, Box<Node>),
    Mul(Box<Node>, Box<Node>),
    Div(Box<Node>, Box<Node>),
    Pow(Box<Node>, Box<Node>),
    Call(Func, Box<Node>),
}

/// A parsed expression together with its source text.
#[derive(Debug, Clone)]
pub struct ClosedForm {
    src: String,
    prefix: char,
    root: Node,
    max_var: usize,
}

impl PartialEq for ClosedForm {
    fn eq(&self, other: &Self) -> bool {
        self.src == other.src && self.prefix == other.prefix
    }
}

impl ClosedForm {
    /// Parses `src` with variables named `<prefix><index>` (1-based).
    pub fn parse(src: &str, prefix: char) -> Result<Self> {
        let mut p = Parser {
            chars: src.chars().collect(),
            pos: 0,
            prefix,
            max_var: 0,
        };
        let root = p.expr()?;
        p.skip_ws();
        if p.pos != p.chars.len() {
            return Err(Error::Expr(format!(
                "unexpected '{}' at offset {} in `{src}`",
                p.chars[p.pos], p.pos
            )));
        }
        Ok(ClosedForm {
            src: src.to_string(),
            prefix,
            root,
            max_var: p.max_var,
        })
    }

    pub fn source(&self) -> &str {
        &self.src
    }

    pub fn prefix(&self) -> char {
        self.prefix
    }

    /// Largest variable index referenced (0 if none).
    pub fn max_var(&self) -> usize {
        self.max_var
    }

    pub fn eval(&self, vars: &[f64]) -> f64 {
        let norm = vars.iter().map(|v| v * v).sum::<f64>().sqrt();
        eval_f64(&self.root, vars, norm)
    }

    /// Value, gradient and Hessian at `vars`.
    pub fn eval_dual(&self, vars: &[f64]) -> Dual2 {
        let n = vars.len();
        let xs: Vec<Dual2> = (0..n).map(|i| Dual2::var(vars[i], i, n)).collect();
        let mut norm = Dual2::constant(0.0, n);
        for x in &xs {
            norm = norm.add(&x.mul(x));
        }
        let norm = norm.sqrt();
        eval_dual(&self.root, &xs, &norm)
    }
}

impl Serialize for ClosedForm {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.src)
    }
}

/// The variable prefix is inferred from the first indexed identifier.
impl<'de> Deserialize<'de> for ClosedForm {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        ClosedForm::parse(&s, detect_prefix(&s)).map_err(serde::de::Error::custom)
    }
}

fn detect_prefix(src: &str) -> char {
    let chars: Vec<char> = src.chars().collect();
    let mut i = 0;
    while i < chars.len() {
        if chars[i].is_ascii_alphabetic() {
            let start = i;
            while i < chars.len() && chars[i].is_ascii_alphanumeric() {
                i += 1;
            }
            let word = &chars[start..i];
            if word.len() > 1 && word[1..].iter().all(|c| c.is_ascii_digit()) {
                return word[0];
            }
        } else {
            i += 1;
        }
    }
    'x'
}

struct Parser {
    chars: Vec<char>,
    pos: usize,
    prefix: char,
    max_var: usize,
}

impl Parser {
    fn skip_ws(&mut self) {
        while self.pos < self.chars.len() && self.chars[self.pos].is_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<char> {
        self.skip_ws();
        self.chars.get(self.pos).copied()
    }

    fn err<T>(&self, msg: &str) -> Result<T> {
        let src: String = self.chars.iter().collect();
        Err(Error::Expr(format!("{msg} at offset {} in `{src}`", self.pos)))
    }

    fn expr(&mut self) -> Result<Node> {
        let mut lhs = self.term()?;
        while let Some(c) = self.peek() {
            match c {
                '+' => {
                    self.pos += 1;
                    lhs = Node::Add(Box::new(lhs), Box::new(self.term()?));
                }
                '-' => {
                    self.pos += 1;
                    lhs = Node::Sub(Box::new(lhs), Box::new(self.term()?));
                }
                _ => break,
            }
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Node> {
        let mut lhs = self.unary()?;
        while let Some(c) = self.peek() {
            match c {
                '*' => {
                    self.pos += 1;
                    lhs = Node::Mul(Box::new(lhs), Box::new(self.unary()?));
                }
                '/' => {
                    self.pos += 1;
                    lhs = Node::Div(Box::new(lhs), Box::new(self.unary()?));
                }
                _ => break,
            }
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Node> {
        match self.peek() {
            Some('-') => {
                self.pos += 1;
                Ok(Node::Neg(Box::new(self.unary()?)))
            }
            Some('+') => {
                self.pos += 1;
                self.unary()
            }
            _ => self.power(),
        }
    }

    fn power(&mut self) -> Result<Node> {
        let base = self.atom()?;
        if self.peek() == Some('^') {
            self.pos += 1;
            let exp = self.unary()?;
            return Ok(Node::Pow(Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Node> {
        let c = match self.peek() {
            Some(c) => c,
            None => return self.err("unexpected end of expression"),
        };
        if c == '(' {
            self.pos += 1;
            let e = self.expr()?;
            if self.peek() != Some(')') {
                return self.err("expected ')'");
            }
            self.pos += 1;
            return Ok(e);
        }
        if c.is_ascii_digit() || c == '.' {
            let start = self.pos;
            while self.pos < self.chars.len() {
                let d = self.chars[self.pos];
                let exp_sign = (d == '-' || d == '+')
                    && self.pos > start
                    && matches!(self.chars[self.pos - 1], 'e' | 'E');
                if d.is_ascii_digit() || d == '.' || d == 'e' || d == 'E' || exp_sign {
                    self.pos += 1;
                } else {
                    break;
                }
            }
            let s: String = self.chars[start..self.pos].iter().collect();
            return s
                .parse::<f64>()
                .map(Node::Num)
                .or_else(|_| self.err("malformed number"));
        }
        if c.is_ascii_alphabetic() {
            let start = self.pos;
            while self.pos < self.chars.len()
                && (self.chars[self.pos].is_ascii_alphanumeric() || self.chars[self.pos] == '_')
            {
                self.pos += 1;
            }
            let name: String = self.chars[start..self.pos].iter().collect();
            if self.peek() == Some('(') {
                let f = match name.as_str() {
                    "exp" => Func::Exp,
                    "ln" | "log" => Func::Ln,
                    "sqrt" => Func::Sqrt,
                    "sin" => Func::Sin,
                    "cos" => Func::Cos,
                    "tan" => Func::Tan,
                    "tanh" => Func::Tanh,
                    "sinh" => Func::Sinh,
                    "cosh" => Func::Cosh,
                    "atan" => Func::Atan,
                    "abs" => Func::Abs,
                    _ => return self.err(&format!("unknown function `{name}`")),
                };
                self.pos += 1;
                let arg = self.expr()?;
                if self.peek() != Some(')') {
                    return self.err("expected ')'");
                }
                self.pos += 1;
                return Ok(Node::Call(f, Box::new(arg)));
            }
            if name == "pi" {
                return Ok(Node::Num(std::f64::consts::PI));
            }
            if name == "r" {
                return Ok(Node::Norm);
            }
            let mut it = name.chars();
            if it.next() == Some(self.prefix) {
                if let Ok(i) = it.as_str().parse::<usize>() {
                    if i >= 1 {
                        self.max_var = self.max_var.max(i);
                        return Ok(Node::Var(i - 1));
                    }
                }
            }
            return self.err(&format!("unknown identifier `{name}`"));
        }
        self.err(&format!("unexpected '{c}'"))
    }
}

fn literal_int(n: &Node) -> Option<i32> {
    match n {
        Node::Num(v) if v.fract() == 0.0 && v.abs() < 1e6 => Some(*v as i32),
        Node::Neg(inner) => literal_int(inner).map(|i| -i),
        _ => None,
    }
}

fn eval_f64(n: &Node, vars: &[f64], norm: f64) -> f64 {
    match n {
        Node::Num(v) => *v,
        Node::Var(i) => vars.get(*i).copied().unwrap_or(f64::NAN),
        Node::Norm => norm,
        Node::Neg(a) => -eval_f64(a, vars, norm),
        Node::Add(a, b) => eval_f64(a, vars, norm) + eval_f64(b, vars, norm),
        Node::Sub(a, b) => eval_f64(a, vars, norm) - eval_f64(b, vars, norm),
        Node::Mul(a, b) => eval_f64(a, vars, norm) * eval_f64(b, vars, norm),
        Node::Div(a, b) => eval_f64(a, vars, norm) / eval_f64(b, vars, norm),
        Node::Pow(a, b) => {
            let base = eval_f64(a, vars, norm);
            match literal_int(b) {
                Some(k) => base.powi(k),
                None => base.powf(eval_f64(b, vars, norm)),
            }
        }
        Node::Call(f, a) => {
            let u = eval_f64(a, vars, norm);
            match f {
                Func::Exp => u.exp(),
                Func::Ln => u.ln(),
                Func::Sqrt => u.sqrt(),
                Func::Sin => u.sin(),
                Func::Cos => u.cos(),
                Func::Tan => u.tan(),
                Func::Tanh => u.tanh(),
                Func::Sinh => u.sinh(),
                Func::Cosh => u.cosh(),
                Func::Atan => u.atan(),
                Func::Abs => u.abs(),
            }
        }
    }
}

fn eval_dual(n: &Node, xs: &[Dual2], norm: &Dual2) -> Dual2 {
    let dim = norm.g.len();
    match n {
        Node::Num(v) => Dual2::constant(*v, dim),
        Node::Var(i) => xs
            .get(*i)
            .cloned()
            .unwrap_or_else(|| Dual2::constant(f64::NAN, dim)),
        Node::Norm => norm.clone(),
        Node::Neg(a) => eval_dual(a, xs, norm).scale(-1.0),
        Node::Add(a, b) => eval_dual(a, xs, norm).add(&eval_dual(b, xs, norm)),
        Node::Sub(a, b) => eval_dual(a, xs, norm).sub(&eval_dual(b, xs, norm)),
        Node::Mul(a, b) => eval_dual(a, xs, norm).mul(&eval_dual(b, xs, norm)),
        Node::Div(a, b) => eval_dual(a, xs, norm).div(&eval_dual(b, xs, norm)),
        Node::Pow(a, b) => {
            let base = eval_dual(a, xs, norm);
            match literal_int(b) {
                Some(k) => {
                    let u = base.v;
                    let kf = k as f64;
                    base.chain(
                        u.powi(k),
                        kf * u.powi(k - 1),
                        kf * (kf - 1.0) * u.powi(k - 2),
                    )
                }
                None => {
                    let e = eval_dual(b, xs, norm);
                    if e.g.iter().all(|g| *g == 0.0) {
                        let p = e.v;
                        let u = base.v;
                        base.chain(u.powf(p), p * u.powf(p - 1.0), p * (p - 1.0) * u.powf(p - 2.0))
                    } else {
                        e.mul(&base.ln()).exp()
                    }
                }
            }
        }
        Node::Call(f, a) => {
            let u = eval_dual(a, xs, norm);
            let x = u.v;
            match f {
                Func::Exp => u.exp(),
                Func::Ln => u.ln(),
                Func::Sqrt => u.sqrt(),
                Func::Sin => u.chain(x.sin(), x.cos(), -x.sin()),
                Func::Cos => u.chain(x.cos(), -x.sin(), -x.cos()),
                Func::Tan => {
                    let t = x.tan();
                    let s2 = 1.0 + t * t;
                    u.chain(t, s2, 2.0 * t * s2)
                }
                Func::Tanh => {
                    let t = x.tanh();
                    let s2 = 1.0 - t * t;
                    u.chain(t, s2, -2.0 * t * s2)
                }
                Func::Sinh => u.chain(x.sinh(), x.cosh(), x.sinh()),
                Func::Cosh => u.chain(x.cosh(), x.sinh(), x.cosh()),
                Func::Atan => {
                    let q = 1.0 / (1.0 + x * x);
                    u.chain(x.atan(), q, -2.0 * x * q * q)
                }
                Func::Abs => u.chain(x.abs(), x.signum(), 0.0),
            }
        }
    }
}

/// Second-order forward-mode number: value, gradient, dense Hessian.
#[derive(Debug, Clone, PartialEq)]
pub struct Dual2 {
    pub v: f64,
    pub g: Vec<f64>,
    /// Row-major `n x n`.
    pub h: Vec<f64>,
}

impl Dual2 {
    pub fn constant(v: f64, n: usize) -> Self {
        Dual2 {
            v,
            g: vec![0.0; n],
            h: vec![0.0; n * n],
        }
    }

    pub fn var(v: f64, i: usize, n: usize) -> Self {
        let mut d = Dual2::constant(v, n);
        d.g[i] = 1.0;
        d
    }

    fn n(&self) -> usize {
        self.g.len()
    }

    pub fn add(&self, o: &Dual2) -> Dual2 {
        Dual2 {
            v: self.v + o.v,
            g: self.g.iter().zip(&o.g).map(|(a, b)| a + b).collect(),
            h: self.h.iter().zip(&o.h).map(|(a, b)| a + b).collect(),
        }
    }

    pub fn sub(&self, o: &Dual2) -> Dual2 {
        self.add(&o.scale(-1.0))
    }

    pub fn scale(&self, c: f64) -> Dual2 {
        Dual2 {
            v: c * self.v,
            g: self.g.iter().map(|a| c * a).collect(),
            h: self.h.iter().map(|a| c * a).collect(),
        }
    }

    pub fn mul(&self, o: &Dual2) -> Dual2 {
        let n = self.n();
        let mut h = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                h[i * n + j] = self.v * o.h[i * n + j]
                    + o.v * self.h[i * n + j]
                    + self.g[i] * o.g[j]
                    + o.g[i] * self.g[j];
            }
        }
        Dual2 {
            v: self.v * o.v,
            g: self.g.iter().zip(&o.g).map(|(a, b)| self.v * b + o.v * a).collect(),
            h,
        }
    }

    pub fn div(&self, o: &Dual2) -> Dual2 {
        let u = o.v;
        self.mul(&o.chain(1.0 / u, -1.0 / (u * u), 2.0 / (u * u * u)))
    }

    /// Composition with a scalar function given its value and first two derivatives.
    pub fn chain(&self, f: f64, df: f64, d2f: f64) -> Dual2 {
        let n = self.n();
        let mut h = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                h[i * n + j] = df * self.h[i * n + j] + d2f * self.g[i] * self.g[j];
            }
        }
        Dual2 {
            v: f,
            g: self.g.iter().map(|a| df * a).collect(),
            h,
        }
    }

    pub fn exp(&self) -> Dual2 {
        let e = self.v.exp();
        self.chain(e, e, e)
    }

    pub fn ln(&self) -> Dual2 {
        let u = self.v;
        self.chain(u.ln(), 1.0 / u, -1.0 / (u * u))
    }

    pub fn sqrt(&self) -> Dual2 {
        let s = self.v.sqrt();
        self.chain(s, 0.5 / s, -0.25 / (s * s * s))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_evaluates() {
        let e = ClosedForm::parse("1 + 2*x1^2 - x2/4 + exp(-x1*x2) + pi", 'x').unwrap();
        let v = e.eval(&[1.5, -2.0]);
        let want = 1.0 + 2.0 * 2.25 + 0.5 + (3.0f64).exp() + std::f64::consts::PI;
        assert!((v - want).abs() < 1e-12);
        assert_eq!(e.max_var(), 2);
    }

    #[test]
    fn precedence_and_unary_minus() {
        let e = ClosedForm::parse("-2^2 + 3*-1 + 2e-1", 'x').unwrap();
        assert!((e.eval(&[]) - (-4.0 - 3.0 + 0.2)).abs() < 1e-15);
    }

    #[test]
    fn norm_variable() {
        let e = ClosedForm::parse("r^2", 'y').unwrap();
        assert!((e.eval(&[3.0, 4.0]) - 25.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_garbage() {
        assert!(ClosedForm::parse("x1 + ", 'x').is_err());
        assert!(ClosedForm::parse("foo(x1)", 'x').is_err());
        assert!(ClosedForm::parse("z1", 'x').is_err());
        assert!(ClosedForm::parse("(x1", 'x').is_err());
    }

    #[test]
    fn dual_matches_hand_derivatives() {
        // f = x1^2 x2 + sin(x2)
        let e = ClosedForm::parse("x1^2*x2 + sin(x2)", 'x').unwrap();
        let (a, b) = (0.7, -1.3);
        let d = e.eval_dual(&[a, b]);
        assert!((d.v - (a * a * b + b.sin())).abs() < 1e-14);
        assert!((d.g[0] - 2.0 * a * b).abs() < 1e-14);
        assert!((d.g[1] - (a * a + b.cos())).abs() < 1e-14);
        assert!((d.h[0] - 2.0 * b).abs() < 1e-14);
        assert!((d.h[1] - 2.0 * a).abs() < 1e-14);
        assert!((d.h[2] - 2.0 * a).abs() < 1e-14);
        assert!((d.h[3] + b.sin()).abs() < 1e-14);
    }
}
