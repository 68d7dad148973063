//! Continuous maps `S^n → R^k` used by the equalizer and the waist estimator.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

pub trait SphereMap: Sync {
    /// Source sphere dimension.
    fn n(&self) -> usize;
    /// Target dimension.
    fn k(&self) -> usize;
    fn eval(&self, x: &[f64], out: &mut [f64]);
}

/// Any closure of the right shape is a map given its dimensions.
pub struct FnMap<F> {
    pub n: usize,
    pub k: usize,
    pub f: F,
}

impl<F: Fn(&[f64], &mut [f64]) + Sync> SphereMap for FnMap<F> {
    fn n(&self) -> usize {
        self.n
    }
    fn k(&self) -> usize {
        self.k
    }
    fn eval(&self, x: &[f64], out: &mut [f64]) {
        (self.f)(x, out)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum MapBase {
    /// The last `k` coordinates; its fiber over 0 is an equatorial `S^{n−k}`.
    Projection,
    /// `y ↦ sin(ω·asin|y|)·y/|y|` applied to the last `k` coordinates `y`.
    Radial { omega: f64 },
    Constant(f64),
    /// One arithmetic expression per output, over `x1 … x{n+1}`.
    Expression(Vec<String>),
}

/// A built-in map, optionally perturbed by `η·sin(ν·x1)` in every component.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MapSpec {
    pub n: usize,
    pub k: usize,
    pub base: MapBase,
    /// `(η, ν)`.
    pub perturbation: Option<(f64, f64)>,
}

pub const DEFAULT_PERTURBATION_FREQ: f64 = 3.0;
pub const DEFAULT_RADIAL_OMEGA: f64 = 2.0;

impl MapSpec {
    pub fn projection(n: usize, k: usize) -> Self {
        Self { n, k, base: MapBase::Projection, perturbation: None }
    }

    pub fn perturbed(n: usize, k: usize, amplitude: f64) -> Self {
        Self { perturbation: Some((amplitude, DEFAULT_PERTURBATION_FREQ)), ..Self::projection(n, k) }
    }

    pub fn radial(n: usize, k: usize, omega: f64) -> Self {
        Self { n, k, base: MapBase::Radial { omega }, perturbation: None }
    }

    /// Parses `proj`, `perturbed:η[:ν]`, `radial[:ω]`, `const:c` or `expr:e1;e2;…`.
    pub fn parse(text: &str, n: usize, k: usize) -> Result<Self> {
        let (head, rest) = text.split_once(':').unwrap_or((text, ""));
        let num = |s: &str| s.trim().parse::<f64>().map_err(|_| Error::Parse(format!("bad number '{s}' in map '{text}'")));
        let spec = match head.trim() {
            "proj" | "projection" if rest.is_empty() => Self::projection(n, k),
            "perturbed" => {
                let mut parts = rest.split(':');
                let amp = num(parts.next().unwrap_or(""))?;
                let freq = parts.next().map(num).transpose()?.unwrap_or(DEFAULT_PERTURBATION_FREQ);
                Self { perturbation: Some((amp, freq)), ..Self::projection(n, k) }
            }
            "radial" => Self::radial(n, k, if rest.is_empty() { DEFAULT_RADIAL_OMEGA } else { num(rest)? }),
            "const" => Self { n, k, base: MapBase::Constant(num(rest)?), perturbation: None },
            "expr" => Self {
                n,
                k,
                base: MapBase::Expression(rest.split(';').map(|s| s.trim().to_string()).collect()),
                perturbation: None,
            },
            _ => return Err(Error::Parse(format!("unknown map '{text}'"))),
        };
        spec.build()?;
        Ok(spec)
    }

    pub fn build(&self) -> Result<BuiltMap> {
        if self.k < 1 || self.k > self.n {
            return Err(invalid(format!("map dimensions need 1 ≤ k ≤ n, got n={}, k={}", self.n, self.k)));
        }
        let exprs = match &self.base {
            MapBase::Expression(src) => {
                if src.len() != self.k {
                    return Err(invalid(format!("{} expressions for k = {}", src.len(), self.k)));
                }
                src.iter().map(|s| Expr::parse(s, self.n + 1)).collect::<Result<Vec<_>>>()?
            }
            _ => Vec::new(),
        };
        Ok(BuiltMap { spec: self.clone(), exprs })
    }
}

impl fmt::Display for MapSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (&self.base, self.perturbation) {
            (MapBase::Projection, None) => write!(f, "proj"),
            (MapBase::Projection, Some((a, nu))) => write!(f, "perturbed:{a}:{nu}"),
            (MapBase::Radial { omega }, _) => write!(f, "radial:{omega}"),
            (MapBase::Constant(c), _) => write!(f, "const:{c}"),
            (MapBase::Expression(e), _) => write!(f, "expr:{}", e.join(";")),
        }
    }
}

/// A [`MapSpec`] ready for evaluation.
#[derive(Clone, Debug)]
pub struct BuiltMap {
    spec: MapSpec,
    exprs: Vec<Expr>,
}

impl BuiltMap {
    pub fn spec(&self) -> &MapSpec {
        &self.spec
    }
}

impl SphereMap for BuiltMap {
    fn n(&self) -> usize {
        self.spec.n
    }

    fn k(&self) -> usize {
        self.spec.k
    }

    fn eval(&self, x: &[f64], out: &mut [f64]) {
        let k = self.spec.k;
        let tail = &x[x.len() - k..];
        match &self.spec.base {
            MapBase::Projection => out.copy_from_slice(tail),
            MapBase::Radial { omega } => {
                let r = tail.iter().map(|v| v * v).sum::<f64>().sqrt();
                if r < 1e-300 {
                    out.fill(0.0);
                } else {
                    let s = (omega * r.min(1.0).asin()).sin() / r;
                    out.iter_mut().zip(tail).for_each(|(o, v)| *o = s * v);
                }
            }
            MapBase::Constant(c) => out.fill(*c),
            MapBase::Expression(_) => {
                for (o, e) in out.iter_mut().zip(&self.exprs) {
                    *o = e.eval(x);
                }
            }
        }
        if let Some((a, nu)) = self.spec.perturbation {
            let d = a * (nu * x[0]).sin();
            out.iter_mut().for_each(|o| *o += d);
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Func {
    Sin,
    Cos,
    Tan,
    Exp,
    Ln,
    Sqrt,
    Abs,
    Asin,
    Acos,
    Atan,
}

#[derive(Clone, Debug, PartialEq)]
enum Expr {
    Num(f64),
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
    fn parse(src: &str, vars: usize) -> Result<Expr> {
        let mut p = Parser { s: src.as_bytes(), pos: 0, vars, src };
        let e = p.sum()?;
        p.skip_ws();
        if p.pos != p.s.len() {
            return Err(p.error("unexpected trailing input"));
        }
        Ok(e)
    }

    fn eval(&self, x: &[f64]) -> f64 {
        match self {
            Expr::Num(v) => *v,
            Expr::Var(i) => x[*i],
            Expr::Neg(a) => -a.eval(x),
            Expr::Add(a, b) => a.eval(x) + b.eval(x),
            Expr::Sub(a, b) => a.eval(x) - b.eval(x),
            Expr::Mul(a, b) => a.eval(x) * b.eval(x),
            Expr::Div(a, b) => a.eval(x) / b.eval(x),
            Expr::Pow(a, b) => a.eval(x).powf(b.eval(x)),
            Expr::Call(f, a) => {
                let v = a.eval(x);
                match f {
                    Func::Sin => v.sin(),
                    Func::Cos => v.cos(),
                    Func::Tan => v.tan(),
                    Func::Exp => v.exp(),
                    Func::Ln => v.ln(),
                    Func::Sqrt => v.sqrt(),
                    Func::Abs => v.abs(),
                    Func::Asin => v.clamp(-1.0, 1.0).asin(),
                    Func::Acos => v.clamp(-1.0, 1.0).acos(),
                    Func::Atan => v.atan(),
                }
            }
        }
    }
}

struct Parser<'a> {
    s: &'a [u8],
    pos: usize,
    vars: usize,
    src: &'a str,
}

impl Parser<'_> {
    fn error(&self, msg: &str) -> Error {
        Error::Parse(format!("{msg} at offset {} in '{}'", self.pos, self.src))
    }

    fn skip_ws(&mut self) {
        while self.pos < self.s.len() && self.s[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.s.get(self.pos).copied()
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
        let mut e = self.product()?;
        loop {
            if self.eat(b'+') {
                e = Expr::Add(Box::new(e), Box::new(self.product()?));
            } else if self.eat(b'-') {
                e = Expr::Sub(Box::new(e), Box::new(self.product()?));
            } else {
                return Ok(e);
            }
        }
    }

    fn product(&mut self) -> Result<Expr> {
        let mut e = self.unary()?;
        loop {
            if self.eat(b'*') {
                e = Expr::Mul(Box::new(e), Box::new(self.unary()?));
            } else if self.eat(b'/') {
                e = Expr::Div(Box::new(e), Box::new(self.unary()?));
            } else {
                return Ok(e);
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
        let base = self.atom()?;
        if self.eat(b'^') {
            return Ok(Expr::Pow(Box::new(base), Box::new(self.unary()?)));
        }
        Ok(base)
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
            Some(c) if c.is_ascii_digit() || c == b'.' => {
                let start = self.pos;
                while self.pos < self.s.len() && (self.s[self.pos].is_ascii_digit() || self.s[self.pos] == b'.') {
                    self.pos += 1;
                }
                if self.pos < self.s.len() && (self.s[self.pos] == b'e' || self.s[self.pos] == b'E') {
                    let save = self.pos;
                    self.pos += 1;
                    if self.pos < self.s.len() && (self.s[self.pos] == b'+' || self.s[self.pos] == b'-') {
                        self.pos += 1;
                    }
                    if self.pos < self.s.len() && self.s[self.pos].is_ascii_digit() {
                        while self.pos < self.s.len() && self.s[self.pos].is_ascii_digit() {
                            self.pos += 1;
                        }
                    } else {
                        self.pos = save;
                    }
                }
                let text = std::str::from_utf8(&self.s[start..self.pos]).expect("ascii");
                text.parse().map(Expr::Num).map_err(|_| self.error("bad number"))
            }
            Some(c) if c.is_ascii_alphabetic() => {
                let start = self.pos;
                while self.pos < self.s.len() && self.s[self.pos].is_ascii_alphanumeric() {
                    self.pos += 1;
                }
                let word = std::str::from_utf8(&self.s[start..self.pos]).expect("ascii");
                if word == "pi" {
                    return Ok(Expr::Num(std::f64::consts::PI));
                }
                if let Some(idx) = word.strip_prefix('x').and_then(|d| d.parse::<usize>().ok()) {
                    if idx == 0 || idx > self.vars {
                        return Err(self.error(&format!("variable {word} out of range x1..x{}", self.vars)));
                    }
                    return Ok(Expr::Var(idx - 1));
                }
                let func = match word {
                    "sin" => Func::Sin,
                    "cos" => Func::Cos,
                    "tan" => Func::Tan,
                    "exp" => Func::Exp,
                    "ln" => Func::Ln,
                    "sqrt" => Func::Sqrt,
                    "abs" => Func::Abs,
                    "asin" => Func::Asin,
                    "acos" => Func::Acos,
                    "atan" => Func::Atan,
                    _ => return Err(self.error(&format!("unknown identifier '{word}'"))),
                };
                if !self.eat(b'(') {
                    return Err(self.error("expected '(' after function name"));
                }
                let arg = self.sum()?;
                if !self.eat(b')') {
                    return Err(self.error("expected ')'"));
                }
                Ok(Expr::Call(func, Box::new(arg)))
            }
            _ => Err(self.error("expected an expression")),
        }
    }
}
