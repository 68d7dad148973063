//! sin^k-concave functions on arcs.
//!
//! A [`Density1D`] is `f(t) = g(t)^k` with `g(t) = min_j (a_j cos t + b_j sin t)`.
//! `g` restricts a minimum of linear forms of the plane to the unit circle,
//! so its 1-homogeneous extension is concave and `g` is sin-concave.

use std::f64::consts::FRAC_PI_2;
use std::fmt::Write as _;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::quadrature::{integrate_with, pow};

/// Slack of the discrete concavity tests.
pub const CONCAVITY_TOL: f64 = 1e-9;

const DOMAIN_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Density1D {
    k: f64,
    lines: Vec<(f64, f64)>,
    domain: (f64, f64),
}

impl Density1D {
    /// Fails unless `k > 0`, the arc is shorter than π and `g ≥ 0` at both ends
    /// (hence everywhere on the arc).
    pub fn new(k: f64, lines: Vec<(f64, f64)>, domain: (f64, f64)) -> Result<Self> {
        if !(k > 0.0 && k.is_finite()) {
            return Err(invalid(format!("concavity power {k} must be positive")));
        }
        if lines.is_empty() {
            return Err(invalid("at least one support line required"));
        }
        let (t0, t1) = domain;
        if !(t1 > t0 && t1 - t0 < std::f64::consts::PI) {
            return Err(invalid(format!("arc [{t0}, {t1}] must be nonempty and shorter than π")));
        }
        let d = Self { k, lines, domain };
        let raw = |t: f64| d.lines.iter().map(|(a, b)| a * t.cos() + b * t.sin()).fold(f64::INFINITY, f64::min);
        if raw(t0) < -DOMAIN_TOL || raw(t1) < -DOMAIN_TOL {
            return Err(invalid("support lines are negative at an endpoint"));
        }
        Ok(d)
    }

    /// `cos^k` on the given arc.
    pub fn cos_power(k: f64, domain: (f64, f64)) -> Result<Self> {
        Self::new(k, vec![(1.0, 0.0)], domain)
    }

    pub fn k(&self) -> f64 {
        self.k
    }

    pub fn lines(&self) -> &[(f64, f64)] {
        &self.lines
    }

    pub fn domain(&self) -> (f64, f64) {
        self.domain
    }

    /// `g = f^(1/k)` without domain checks, clamped at zero.
    #[inline]
    pub fn root(&self, t: f64) -> f64 {
        let (s, c) = t.sin_cos();
        self.lines.iter().map(|(a, b)| a * c + b * s).fold(f64::INFINITY, f64::min).max(0.0)
    }

    #[inline]
    fn value(&self, t: f64) -> f64 {
        pow(self.root(t), self.k)
    }

    pub fn eval(&self, t: f64) -> Result<f64> {
        let (t0, t1) = self.domain;
        if t < t0 - DOMAIN_TOL || t > t1 + DOMAIN_TOL {
            return Err(Error::OutOfDomain(t));
        }
        Ok(self.value(t))
    }

    /// Points where two support lines cross inside the open domain.
    pub fn kinks(&self) -> Vec<f64> {
        crossings(&self.lines, self.domain.0, self.domain.1)
    }

    /// Values on the uniform grid of `points ≥ 2` nodes covering the domain.
    pub fn sample(&self, points: usize) -> SampledFunction {
        let (t0, t1) = self.domain;
        let step = (t1 - t0) / (points - 1) as f64;
        let values = (0..points).map(|j| self.value(t0 + j as f64 * step)).collect();
        SampledFunction { start: t0, step, values }
    }

    /// Grid with spacing at most `max_step`.
    pub fn sample_step(&self, max_step: f64) -> SampledFunction {
        let (t0, t1) = self.domain;
        self.sample(((t1 - t0) / max_step).ceil() as usize + 1)
    }
}

/// Angles in `(t0, t1)` where two of the forms `a cos t + b sin t` agree.
pub fn crossings(lines: &[(f64, f64)], t0: f64, t1: f64) -> Vec<f64> {
    let mut out = Vec::new();
    for (i, &(a1, b1)) in lines.iter().enumerate() {
        for &(a2, b2) in &lines[i + 1..] {
            // (a1−a2) cos t + (b1−b2) sin t = 0
            let base = (a2 - a1).atan2(b1 - b2);
            for m in -3..=3 {
                let t = base + f64::from(m) * std::f64::consts::PI;
                if t > t0 && t < t1 {
                    out.push(t);
                }
            }
        }
    }
    out.sort_by(f64::total_cmp);
    out
}

/// A function sampled on a uniform grid `start + j·step`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampledFunction {
    pub start: f64,
    pub step: f64,
    pub values: Vec<f64>,
}

impl SampledFunction {
    pub fn abscissa(&self, j: usize) -> f64 {
        self.start + j as f64 * self.step
    }

    /// Pointwise `k`-th root.
    pub fn root(&self, k: f64) -> SampledFunction {
        SampledFunction { values: self.values.iter().map(|v| v.max(0.0).powf(1.0 / k)).collect(), ..self.clone() }
    }

    pub fn is_sin_concave(&self) -> bool {
        is_sin_concave(&self.values, self.step)
    }
}

/// Chord-midpoint test of the 1-homogeneous extension:
/// `f(t−h) + f(t+h) ≤ 2 cos(h) f(t) + 1e−9` at every interior grid point.
pub fn is_sin_concave(values: &[f64], h: f64) -> bool {
    let c = 2.0 * h.cos();
    values.windows(3).all(|w| w[0] + w[2] <= c * w[1] + CONCAVITY_TOL)
}

/// Ordinary concavity via second differences.
pub fn is_concave(values: &[f64]) -> bool {
    values.windows(3).all(|w| w[0] + w[2] <= 2.0 * w[1] + CONCAVITY_TOL)
}

/// The argmax set is one run of at most three grid points and no interior
/// point is a strict local minimum.
pub fn unique_max_check_values(values: &[f64]) -> bool {
    let Some(max) = values.iter().copied().reduce(f64::max) else {
        return false;
    };
    let tol = 1e-12 * max.abs().max(1e-300);
    let top: Vec<usize> = (0..values.len()).filter(|&j| values[j] >= max - tol).collect();
    let contiguous = top.windows(2).all(|w| w[1] == w[0] + 1);
    let narrow = top.last().unwrap() - top[0] <= 2;
    let no_local_min = values.windows(3).all(|w| !(w[1] < w[0] - tol && w[1] < w[2] - tol));
    contiguous && narrow && no_local_min
}

pub fn unique_max_check(d: &Density1D, grid_step: f64) -> Result<bool> {
    if grid_step > 1e-3 {
        return Err(invalid("grid resolution must be at most 1e-3"));
    }
    Ok(unique_max_check_values(&d.sample_step(grid_step).values))
}

/// Discrete argmax of `d` on a grid of spacing `step`.
pub fn grid_argmax(d: &Density1D, step: f64) -> f64 {
    let s = d.sample_step(step);
    let j = (0..s.values.len()).fold(0, |b, j| if s.values[j] > s.values[b] { j } else { b });
    s.abscissa(j)
}

fn require_max_at_zero(d: &Density1D) -> Result<()> {
    let (t0, t1) = d.domain;
    if t0 > DOMAIN_TOL || t1 < -DOMAIN_TOL {
        return Err(Error::MaxNotAtZero);
    }
    let peak = d.value(0.0);
    let s = d.sample_step(1e-3);
    if s.values.iter().any(|&v| v > peak * (1.0 + 1e-12) + 1e-15) {
        return Err(Error::MaxNotAtZero);
    }
    Ok(())
}

/// `g(t) = f(|t|)` on `[−t₁, t₁]`, sampled with spacing at most `max_step`
/// (the grid always contains 0).
pub fn symmetrize(d: &Density1D, max_step: f64) -> Result<SampledFunction> {
    require_max_at_zero(d)?;
    let t1 = d.domain.1;
    let half = (t1 / max_step).ceil().max(1.0) as usize;
    let step = t1 / half as f64;
    let values = (0..=2 * half).map(|j| d.value(((j as f64 - half as f64) * step).abs())).collect();
    Ok(SampledFunction { start: -t1, step, values })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CosComparison {
    pub c: f64,
    pub crossing_verified: bool,
}

/// Compares `f` with `h = c cos^k`, `c = f(ε)/cos^k ε`: `f ≥ h` on `[0, ε]`
/// and `f ≤ h` on `[ε, τ]`, checked on a 1e−3 grid.
pub fn cos_comparison(d: &Density1D, eps: f64, tau: f64) -> Result<CosComparison> {
    if !(0.0 < eps && eps < tau) {
        return Err(invalid(format!("need 0 < ε < τ, got ε={eps}, τ={tau}")));
    }
    if tau > FRAC_PI_2 {
        return Err(invalid(format!("τ = {tau} exceeds π/2")));
    }
    if tau > d.domain.1 + DOMAIN_TOL {
        return Err(Error::OutOfDomain(tau));
    }
    require_max_at_zero(d)?;
    let fe = d.value(eps);
    if fe <= 0.0 {
        return Err(invalid("f(ε) must be positive"));
    }
    let c = fe / pow(eps.cos(), d.k);
    let tol = CONCAVITY_TOL * c.max(1.0);
    let points = (tau / 1e-3).ceil() as usize;
    let ok = (0..=points).all(|j| {
        let t = tau * j as f64 / points as f64;
        let (f, h) = (d.value(t), c * pow(t.cos(), d.k));
        if t <= eps {
            f >= h - tol
        } else {
            f <= h + tol
        }
    });
    Ok(CosComparison { c, crossing_verified: ok })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatioBound {
    pub lhs: f64,
    pub rhs: f64,
}

impl RatioBound {
    pub fn holds(&self) -> bool {
        self.lhs >= self.rhs - 1e-8
    }
}

/// `lhs = ∫₀^min(ε,τ) f sin^α / ∫₀^τ f sin^α` against the extremal
/// `rhs = ∫₀^ε cos^k sin^α / ∫₀^(π/2) cos^k sin^α`, where `[0, τ]` is the domain of `d`.
pub fn ratio_bound(d: &Density1D, alpha: f64, eps: f64, abs_tol: f64) -> Result<RatioBound> {
    let (t0, tau) = d.domain;
    if t0.abs() > DOMAIN_TOL {
        return Err(invalid("density must live on [0, τ]"));
    }
    if tau > FRAC_PI_2 + DOMAIN_TOL || !(alpha >= 0.0) || !(eps > 0.0 && eps <= FRAC_PI_2) {
        return Err(invalid(format!("need τ ≤ π/2, α ≥ 0, 0 < ε ≤ π/2 (τ={tau}, α={alpha}, ε={eps})")));
    }
    if abs_tol > 1e-10 {
        return Err(invalid("quadrature tolerance must be at most 1e-10"));
    }
    require_max_at_zero(d)?;
    let k = d.k;
    let kinks = d.kinks();
    let weighted = |t: f64| d.value(t) * pow(t.sin(), alpha);
    let quad = |f: &dyn Fn(f64) -> f64, a: f64, b: f64, breaks: &[f64]| {
        integrate_with(f, a, b, breaks, abs_tol, 1e-14, 20_000).value
    };
    let total = quad(&weighted, 0.0, tau, &kinks);
    if total < 1e-300 {
        return Err(Error::ZeroMass);
    }
    let lhs = if eps >= tau { 1.0 } else { quad(&weighted, 0.0, eps, &kinks) / total };
    let extremal = |t: f64| pow(t.cos(), k) * pow(t.sin(), alpha);
    let rhs = quad(&extremal, 0.0, eps, &[]) / quad(&extremal, 0.0, FRAC_PI_2, &[]);
    Ok(RatioBound { lhs, rhs })
}

/// One-sided slopes of a sampled function at its last and first point.
pub fn left_derivative(values: &[f64], h: f64) -> f64 {
    let n = values.len();
    (values[n - 1] - values[n - 2]) / h
}

pub fn right_derivative(values: &[f64], h: f64) -> f64 {
    (values[1] - values[0]) / h
}

/// Joins two arrays sharing the junction value; the result is concave
/// whenever both pieces are and the left slope at the junction is at
/// least the right slope.
pub fn raccord(left: &[f64], right: &[f64]) -> Result<Vec<f64>> {
    if left.len() < 2 || right.len() < 2 {
        return Err(invalid("each piece needs two samples"));
    }
    let (a, b) = (left[left.len() - 1], right[0]);
    if (a - b).abs() > 1e-12 * a.abs().max(1.0) {
        return Err(invalid(format!("pieces disagree at the junction: {a} vs {b}")));
    }
    let mut out = left.to_vec();
    out.extend_from_slice(&right[1..]);
    Ok(out)
}

fn random_phase_line<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> (f64, f64) {
    let phi = rng.random_range(lo..=hi);
    let r = rng.random_range(0.5..2.0);
    (r * phi.cos(), r * phi.sin())
}

/// Random density on a random arc of length in `[0.2, 3]`, with 1–4 support
/// lines each nonnegative on the whole arc.
pub fn random_density<R: Rng + ?Sized>(rng: &mut R, k: f64) -> Density1D {
    let len = rng.random_range(0.2..3.0);
    let t0 = rng.random_range(-1.5..1.5);
    let t1 = t0 + len;
    let lines = (0..rng.random_range(1..=4))
        .map(|_| random_phase_line(rng, t1 - FRAC_PI_2, t0 + FRAC_PI_2))
        .collect();
    Density1D::new(k, lines, (t0, t1)).expect("generated lines are nonnegative on the arc")
}

/// Random density on `[0, τ]` (τ ≤ π/2) whose strict maximum is at 0.
///
/// Decreasing lines `R cos(t − φ)` have `φ ∈ [τ − π/2, 0]`; optional
/// increasing lines (`φ ∈ (0, π/2)`) are kept only if they do not undercut
/// the decreasing envelope at 0.
pub fn random_max_at_zero<R: Rng + ?Sized>(rng: &mut R, k: f64, tau: f64) -> Density1D {
    assert!(tau > 0.0 && tau <= FRAC_PI_2);
    let mut lines: Vec<(f64, f64)> =
        (0..rng.random_range(1..=3)).map(|_| random_phase_line(rng, tau - FRAC_PI_2, 0.0)).collect();
    let floor = lines.iter().map(|l| l.0).fold(f64::INFINITY, f64::min);
    for _ in 0..rng.random_range(0..=2) {
        let l = random_phase_line(rng, 1e-3, FRAC_PI_2 - 1e-3);
        if l.0 >= floor {
            lines.push(l);
        }
    }
    Density1D::new(k, lines, (0.0, tau)).expect("generated lines are nonnegative on [0, τ]")
}

/// ```text
/// density k=2
/// domain -5.0000000000000000e-1 1.0000000000000000e0
/// line 1.0000000000000000e0 0.0000000000000000e0
/// ```
pub fn to_text(d: &Density1D) -> String {
    let mut s = format!("density k={:.16e}\ndomain {:.16e} {:.16e}\n", d.k, d.domain.0, d.domain.1);
    for (a, b) in &d.lines {
        let _ = writeln!(s, "line {a:.16e} {b:.16e}");
    }
    s
}

pub fn from_text(text: &str) -> Result<Density1D> {
    let num = |t: &str| t.parse::<f64>().map_err(|_| Error::Parse(format!("bad number {t}")));
    let mut k = None;
    let mut domain = None;
    let mut lines = Vec::new();
    for line in text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')) {
        let parts: Vec<&str> = line.split_whitespace().collect();
        match parts.as_slice() {
            ["density", kv] => {
                let v = kv.strip_prefix("k=").ok_or_else(|| Error::Parse(format!("bad header {line}")))?;
                k = Some(num(v)?);
            }
            ["domain", a, b] => domain = Some((num(a)?, num(b)?)),
            ["line", a, b] => lines.push((num(a)?, num(b)?)),
            _ => return Err(Error::Parse(format!("unrecognized row: {line}"))),
        }
    }
    let k = k.ok_or_else(|| Error::Parse("missing density header".into()))?;
    let domain = domain.ok_or_else(|| Error::Parse("missing domain row".into()))?;
    Density1D::new(k, lines, domain)
}
