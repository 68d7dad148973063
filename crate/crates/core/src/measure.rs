//! Tube volumes, k-dimensional convexly derived measures and the property
//! checks built on them.

use std::f64::consts::{FRAC_PI_2, PI, TAU};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::concavity::crossings;
use crate::error::{invalid, Error, Result};
use crate::partition::{cell_volume_mc, leaf_statistics, CenterMap, ConvexCell, OrientedPartition};
use crate::quadrature::{integrate_with, pow};
use crate::rng::{par_chunks, RngStream};
use crate::sphere::{
    cap_fraction, dot, fill_cap, fill_uniform, geodesic_distance, normalize, spherical_centroid, Frame,
    UnitVector,
};

/// Dimensions and radius of an equatorial tube `S^{n−k} + ε` in `S^n`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TubeSpec {
    pub n: usize,
    pub k: usize,
    pub eps: f64,
}

impl TubeSpec {
    /// Radii beyond π/2 are accepted and give the whole sphere.
    pub fn new(n: usize, k: usize, eps: f64) -> Result<Self> {
        if k < 1 || k > n {
            return Err(invalid(format!("need 1 ≤ k ≤ n, got n={n}, k={k}")));
        }
        if !(eps >= 0.0 && eps.is_finite()) {
            return Err(invalid(format!("tube radius {eps} must be nonnegative")));
        }
        Ok(Self { n, k, eps })
    }

    pub fn fraction(&self) -> f64 {
        tube_fraction(self)
    }
}

/// `vol(S^{n−k} + ε) / vol(S^n) = ∫₀^ε cos^{n−k} sin^{k−1} / ∫₀^{π/2} cos^{n−k} sin^{k−1}`.
pub fn tube_fraction(spec: &TubeSpec) -> f64 {
    let eps = spec.eps;
    if eps <= 0.0 {
        return 0.0;
    }
    if eps >= FRAC_PI_2 {
        return 1.0;
    }
    let (p, q) = ((spec.n - spec.k) as f64, (spec.k - 1) as f64);
    let w = |t: f64| pow(t.cos(), p) * pow(t.sin(), q);
    let num = integrate_with(w, 0.0, eps, &[], 1e-17, 1e-15, 4000).value;
    let den = integrate_with(w, 0.0, FRAC_PI_2, &[], 1e-17, 1e-15, 4000).value;
    (num / den).min(1.0)
}

/// Monte Carlo volume of the tube around `{x : x_{n−k+1} = … = x_n = 0}`.
pub fn tube_fraction_mc(spec: &TubeSpec, samples: usize, stream: RngStream) -> crate::partition::VolumeEstimate {
    let n1 = spec.n + 1;
    let tail = n1 - spec.k;
    let s2 = if spec.eps >= FRAC_PI_2 { f64::INFINITY } else { spec.eps.sin().powi(2) };
    let hits: u64 = par_chunks(stream, samples, |rng, len| {
        let mut x = vec![0.0; n1];
        let mut h = 0;
        for _ in 0..len {
            fill_uniform(rng, &mut x);
            h += (x[tail..].iter().map(|v| v * v).sum::<f64>() <= s2) as u64;
        }
        h
    })
    .into_iter()
    .sum();
    crate::partition::VolumeEstimate::from_counts(hits, samples as u64)
}

/// A machine-readable outcome of a property check.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckRecord {
    pub check: String,
    pub params: serde_json::Value,
    pub measured: f64,
    pub bound: f64,
    pub sigma: f64,
    pub pass: bool,
    pub seed: u64,
}

type V3 = [f64; 3];

fn d3(a: &V3, b: &V3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn cross(a: &V3, b: &V3) -> V3 {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

fn unit3(a: V3) -> Option<V3> {
    let n = d3(&a, &a).sqrt();
    (n > 1e-15).then(|| [a[0] / n, a[1] / n, a[2] / n])
}

fn combo(a: f64, x: &V3, b: f64, y: &V3) -> V3 {
    [a * x[0] + b * y[0], a * x[1] + b * y[1], a * x[2] + b * y[2]]
}

/// Two orthonormal tangent vectors at a unit `x ∈ R^3`.
fn tangent_pair(x: &V3) -> (V3, V3) {
    let i = (0..3).min_by(|&a, &b| x[a].abs().total_cmp(&x[b].abs())).unwrap();
    let mut a = [0.0; 3];
    a[i] = 1.0;
    let e1 = unit3(combo(1.0, &a, -x[i], x)).unwrap();
    (e1, cross(x, &e1))
}

/// Support of a [`KDimMeasure`] in intrinsic coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Support {
    /// Arc `{(cos t, sin t) : t0 ≤ t ≤ t1}` of the unit circle, `t1 − t0 < π`.
    Arc { t0: f64, t1: f64 },
    /// `{y ∈ S^2 : y·c ≥ 0 for every c}`, a convex polygon in an open hemisphere.
    Polygon { constraints: Vec<V3> },
}

/// A k-dimensional convexly derived measure on S^n (k ∈ {1, 2}, k ≤ n).
///
/// The support sits in the great k-sphere of a (k+1)-dimensional subspace
/// spanned by `basis`; with `F(y) = min_j ℓ_j·y` the density with respect to
/// k-dimensional volume is `F^{n−k} / Z`. `F` is concave and 1-homogeneous,
/// so the density is sin^{n−k}-concave along every geodesic of the support.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct KDimMeasure {
    n: usize,
    k: usize,
    basis: Vec<Vec<f64>>,
    support: Support,
    lines: Vec<V3>,
    constraints: Vec<V3>,
    vertices: Vec<V3>,
    reference: V3,
    exponent: f64,
    support_volume: f64,
    norm: f64,
}

const QUAD_REL: f64 = 1e-12;

impl KDimMeasure {
    /// A measure on an arc `[t0, t1]` of the great circle spanned by `basis`,
    /// with density ∝ `min_j (a_j cos t + b_j sin t)^{n−1}`.
    pub fn arc(n: usize, basis: [Vec<f64>; 2], t0: f64, t1: f64, lines: Vec<(f64, f64)>) -> Result<Self> {
        if !(t1 > t0 && t1 - t0 < PI) {
            return Err(invalid(format!("arc [{t0}, {t1}] must be nonempty and shorter than π")));
        }
        let constraints = vec![[-t0.sin(), t0.cos(), 0.0], [t1.sin(), -t1.cos(), 0.0]];
        let lines = lines.into_iter().map(|(a, b)| [a, b, 0.0]).collect();
        let tm = 0.5 * (t0 + t1);
        let vertices = vec![[t0.cos(), t0.sin(), 0.0], [t1.cos(), t1.sin(), 0.0]];
        Self::build(n, 1, basis.to_vec(), Support::Arc { t0, t1 }, lines, constraints, vertices, [tm.cos(), tm.sin(), 0.0])
    }

    /// A measure on the spherical polygon `{y : y·c_i ≥ 0}` of the great
    /// 2-sphere spanned by `basis`.
    pub fn polygon(n: usize, basis: [Vec<f64>; 3], constraints: Vec<V3>, lines: Vec<V3>) -> Result<Self> {
        let constraints: Vec<V3> = constraints
            .into_iter()
            .map(|c| unit3(c).ok_or_else(|| invalid("zero constraint normal")))
            .collect::<Result<_>>()?;
        let mut vertices: Vec<V3> = Vec::new();
        for (i, a) in constraints.iter().enumerate() {
            for b in &constraints[i + 1..] {
                let Some(w) = unit3(cross(a, b)) else { continue };
                for v in [w, combo(-1.0, &w, 0.0, &w)] {
                    let feasible = constraints.iter().all(|c| d3(c, &v) >= -1e-10);
                    let fresh = vertices.iter().all(|u| d3(u, &v) < 1.0 - 1e-14);
                    if feasible && fresh {
                        vertices.push(v);
                    }
                }
            }
        }
        if vertices.len() < 3 {
            return Err(invalid("polygon constraints do not bound a region in an open hemisphere"));
        }
        let sum = vertices.iter().fold([0.0; 3], |s, v| combo(1.0, &s, 1.0, v));
        let reference = unit3(sum).ok_or_else(|| invalid("polygon is not inside an open hemisphere"))?;
        if vertices.iter().any(|v| d3(v, &reference) <= 1e-9)
            || constraints.iter().any(|c| d3(c, &reference) <= 1e-12)
        {
            return Err(invalid("polygon is not inside an open hemisphere"));
        }
        let support = Support::Polygon { constraints: constraints.clone() };
        Self::build(n, 2, basis.to_vec(), support, lines, constraints, vertices, reference)
    }

    #[allow(clippy::too_many_arguments)]
    fn build(
        n: usize,
        k: usize,
        basis: Vec<Vec<f64>>,
        support: Support,
        lines: Vec<V3>,
        constraints: Vec<V3>,
        vertices: Vec<V3>,
        reference: V3,
    ) -> Result<Self> {
        if n < k {
            return Err(invalid(format!("support dimension {k} exceeds ambient dimension {n}")));
        }
        if lines.is_empty() {
            return Err(invalid("at least one density line required"));
        }
        for (i, b) in basis.iter().enumerate() {
            if b.len() != n + 1 {
                return Err(Error::DimMismatch { expected: n, found: b.len().saturating_sub(1) });
            }
            for (j, c) in basis.iter().enumerate().take(i + 1) {
                let target = if i == j { 1.0 } else { 0.0 };
                if (dot(b, c) - target).abs() > 1e-10 {
                    return Err(invalid("support basis is not orthonormal"));
                }
            }
        }
        let mut mu = Self {
            n,
            k,
            basis,
            support,
            lines,
            constraints,
            vertices,
            reference,
            exponent: (n - k) as f64,
            support_volume: 0.0,
            norm: 1.0,
        };
        if mu.vertices.iter().any(|v| mu.raw_g(v) < -1e-12) {
            return Err(invalid("density lines are negative on the support"));
        }
        mu.support_volume = match mu.support {
            Support::Arc { t0, t1 } => t1 - t0,
            Support::Polygon { .. } => mu.polar_integral(&mu.reference, PI, 0.0),
        };
        let z = mu.raw_ball_mass(&mu.reference.clone(), PI);
        if !(z > 1e-300) {
            return Err(Error::ZeroMass);
        }
        mu.norm = z;
        Ok(mu)
    }

    pub fn ambient_dim(&self) -> usize {
        self.n
    }

    pub fn support_dim(&self) -> usize {
        self.k
    }

    pub fn support(&self) -> &Support {
        &self.support
    }

    pub fn basis(&self) -> &[Vec<f64>] {
        &self.basis
    }

    /// `vol_k` of the support.
    pub fn support_volume(&self) -> f64 {
        self.support_volume
    }

    /// `Z = ∫ F^{n−k} dvol_k`.
    pub fn normalization(&self) -> f64 {
        self.norm
    }

    fn raw_g(&self, y: &V3) -> f64 {
        self.lines.iter().map(|l| d3(l, y)).fold(f64::INFINITY, f64::min)
    }

    #[inline]
    fn weight(&self, y: &V3, power: f64) -> f64 {
        pow(self.raw_g(y).max(0.0), power)
    }

    /// Density with respect to k-dimensional volume at an intrinsic point of the support.
    pub fn density_intrinsic(&self, y: &V3) -> f64 {
        if self.constraints.iter().any(|c| d3(c, y) < -1e-12) {
            return 0.0;
        }
        self.weight(y, self.exponent) / self.norm
    }

    /// Intrinsic coordinates of an ambient vector.
    pub fn intrinsic(&self, x: &[f64]) -> V3 {
        let mut y = [0.0; 3];
        for (i, b) in self.basis.iter().enumerate() {
            y[i] = dot(b, x);
        }
        y
    }

    pub fn ambient(&self, y: &V3) -> Vec<f64> {
        let mut x = vec![0.0; self.n + 1];
        for (i, b) in self.basis.iter().enumerate() {
            x.iter_mut().zip(b).for_each(|(o, v)| *o += y[i] * v);
        }
        x
    }

    fn arc_lines(&self) -> Vec<(f64, f64)> {
        self.lines.iter().map(|l| (l[0], l[1])).collect()
    }

    /// Unnormalized `∫_{B(y, r) ∩ support} F^power` for intrinsic unit `y`.
    fn raw_mass_with(&self, y: &V3, r: f64, power: f64) -> f64 {
        match self.support {
            Support::Arc { t0, t1 } => {
                let tx = y[1].atan2(y[0]);
                let lines = self.arc_lines();
                let f = |t: f64| {
                    let (s, c) = t.sin_cos();
                    pow(lines.iter().map(|(a, b)| a * c + b * s).fold(f64::INFINITY, f64::min).max(0.0), power)
                };
                let breaks = crossings(&lines, t0, t1);
                let scale = pow(lines.iter().map(|(a, b)| a.hypot(*b)).fold(0.0, f64::max), power) * (t1 - t0);
                let mut total = 0.0;
                if r >= PI {
                    return integrate_with(f, t0, t1, &breaks, 1e-15 * scale, QUAD_REL, 4000).value;
                }
                for m in -2..=2 {
                    let c = tx + TAU * f64::from(m);
                    let (lo, hi) = ((c - r).max(t0), (c + r).min(t1));
                    if hi > lo {
                        total += integrate_with(f, lo, hi, &breaks, 1e-15 * scale, QUAD_REL, 4000).value;
                    }
                }
                total
            }
            Support::Polygon { .. } => self.polar_integral(y, r, power),
        }
    }

    fn raw_ball_mass(&self, y: &V3, r: f64) -> f64 {
        self.raw_mass_with(y, r, self.exponent)
    }

    /// Polar quadrature about `x` over the part of the polygon within distance `r`.
    fn polar_integral(&self, x: &V3, r: f64, power: f64) -> f64 {
        let (e1, e2) = tangent_pair(x);
        let mut breaks: Vec<f64> = self
            .vertices
            .iter()
            .filter_map(|v| {
                let (a, b) = (d3(v, &e1), d3(v, &e2));
                (a.hypot(b) > 1e-12).then(|| b.atan2(a).rem_euclid(TAU))
            })
            .collect();
        breaks.sort_by(f64::total_cmp);
        let lmax = self.lines.iter().map(|l| d3(l, l).sqrt()).fold(0.0, f64::max);
        let scale = pow(lmax, power).max(1e-300);
        let inner = |theta: f64| {
            let (s, c) = theta.sin_cos();
            let u = combo(c, &e1, s, &e2);
            let mut total = 0.0;
            for (lo, hi) in feasible_radii(&self.constraints, x, &u) {
                let hi = hi.min(r);
                if hi <= lo {
                    continue;
                }
                let kinks = line_crossings(&self.lines, x, &u, lo, hi);
                let f = |t: f64| {
                    let (st, ct) = t.sin_cos();
                    self.weight(&combo(ct, x, st, &u), power) * st
                };
                total += integrate_with(f, lo, hi, &kinks, 1e-14 * scale, QUAD_REL, 400).value;
            }
            total
        };
        integrate_with(inner, 0.0, TAU, &breaks, 1e-13 * scale, QUAD_REL, 4000).value
    }

    /// `μ(B(x, r))` for an ambient point `x` (not necessarily on the support sphere).
    pub fn ball_mass(&self, x: &[f64], r: f64) -> f64 {
        let y = self.intrinsic(x);
        let rho = d3(&y, &y).sqrt();
        if rho < 1e-15 {
            return if r >= FRAC_PI_2 { 1.0 } else { 0.0 };
        }
        let c = r.cos() / rho;
        if c > 1.0 {
            return 0.0;
        }
        let r_eff = if c < -1.0 { PI } else { c.acos() };
        let yhat = [y[0] / rho, y[1] / rho, y[2] / rho];
        (self.raw_ball_mass(&yhat, r_eff) / self.norm).clamp(0.0, 1.0)
    }

    pub fn contains_intrinsic(&self, y: &V3) -> bool {
        self.constraints.iter().all(|c| d3(c, y) >= -1e-12)
    }

    /// Largest geodesic distance between two support points.
    pub fn diameter(&self) -> f64 {
        match self.support {
            Support::Arc { t0, t1 } => t1 - t0,
            Support::Polygon { .. } => {
                let mut d: f64 = 0.0;
                for (i, a) in self.vertices.iter().enumerate() {
                    for b in &self.vertices[i + 1..] {
                        d = d.max(d3(a, b).clamp(-1.0, 1.0).acos());
                    }
                }
                d
            }
        }
    }

    /// Exact maximizer of `F` over the support in intrinsic coordinates.
    pub fn argmax_intrinsic(&self) -> Result<V3> {
        if self.exponent == 0.0 {
            return Err(Error::PlateauDetected(self.diameter()));
        }
        let candidates = match self.support {
            Support::Arc { t0, t1 } => {
                let lines = self.arc_lines();
                let mut ts = vec![t0, t1];
                ts.extend(crossings(&lines, t0, t1));
                for (a, b) in &lines {
                    let t = b.atan2(*a);
                    for m in -1..=1 {
                        let t = t + TAU * f64::from(m);
                        if t > t0 && t < t1 {
                            ts.push(t);
                        }
                    }
                }
                ts.into_iter().map(|t| [t.cos(), t.sin(), 0.0]).collect()
            }
            Support::Polygon { .. } => self.kkt_candidates(),
        };
        let mut best: Option<(V3, f64)> = None;
        for y in candidates.into_iter().filter(|y| self.contains_intrinsic(y)) {
            let g = self.raw_g(&y);
            if best.is_none_or(|(_, b)| g > b) {
                best = Some((y, g));
            }
        }
        let (y, g) = best.ok_or_else(|| invalid("no feasible maximizer found"))?;
        // A second maximizer far from the first would mean a plateau.
        if let Some(span) = self.plateau_span(&y, g) {
            return Err(Error::PlateauDetected(span));
        }
        Ok(y)
    }

    fn plateau_span(&self, y: &V3, g: f64) -> Option<f64> {
        if let Support::Arc { t0, t1 } = self.support {
            let mut ty = y[1].atan2(y[0]);
            while ty < t0 - 1e-9 {
                ty += TAU;
            }
            let (mut lo, mut hi) = (ty, ty);
            let s = self.sample_arc_grid(t0, t1, 1e-4);
            let tol = 1e-12 * g.abs().max(1e-300);
            for (t, v) in s {
                if v >= g - tol {
                    lo = lo.min(t);
                    hi = hi.max(t);
                }
            }
            return (hi - lo > 1e-3).then_some(hi - lo);
        }
        None
    }

    fn sample_arc_grid(&self, t0: f64, t1: f64, step: f64) -> Vec<(f64, f64)> {
        let m = ((t1 - t0) / step).ceil() as usize;
        (0..=m)
            .map(|j| {
                let t = t0 + (t1 - t0) * j as f64 / m as f64;
                (t, self.raw_g(&[t.cos(), t.sin(), 0.0]))
            })
            .collect()
    }

    // Maximizers of min_j ℓ_j·y on a spherical polygon satisfy KKT with some
    // anchor line ℓ_a and active set E of line differences and boundary
    // normals: y = normalize(P_{E⊥} ℓ_a), or ±(E⊥) if that line is one-dimensional.
    fn kkt_candidates(&self) -> Vec<V3> {
        let mut out = self.vertices.clone();
        for (a, la) in self.lines.iter().enumerate() {
            let mut pool: Vec<V3> = self
                .lines
                .iter()
                .enumerate()
                .filter(|&(b, _)| b != a)
                .map(|(_, lb)| combo(1.0, la, -1.0, lb))
                .collect();
            pool.extend(self.constraints.iter().copied());
            if let Some(y) = unit3(*la) {
                out.push(y);
            }
            for (i, e) in pool.iter().enumerate() {
                if let Some(e) = unit3(*e) {
                    if let Some(y) = unit3(combo(1.0, la, -d3(la, &e), &e)) {
                        out.push(y);
                    }
                }
                for f in &pool[i + 1..] {
                    if let Some(v) = unit3(cross(e, f)) {
                        out.push(v);
                        out.push(combo(-1.0, &v, 0.0, &v));
                    }
                }
            }
        }
        out
    }

    /// Uniform points of the support (ambient coordinates).
    pub fn sample_support<R: Rng + ?Sized>(&self, rng: &mut R, count: usize) -> Vec<Vec<f64>> {
        match self.support {
            Support::Arc { t0, t1 } => (0..count)
                .map(|_| {
                    let t = rng.random_range(t0..=t1);
                    self.ambient(&[t.cos(), t.sin(), 0.0])
                })
                .collect(),
            Support::Polygon { .. } => {
                let radius = self.vertices.iter().map(|v| d3(v, &self.reference).clamp(-1.0, 1.0).acos()).fold(0.0, f64::max);
                let frame = Frame::at_coords(&self.reference);
                let mut out = Vec::with_capacity(count);
                let mut y = [0.0; 3];
                while out.len() < count {
                    fill_cap(rng, &frame, radius + 1e-9, &mut y);
                    if self.contains_intrinsic(&y) {
                        out.push(self.ambient(&y));
                    }
                }
                out
            }
        }
    }
}

/// Intervals of `s ∈ [0, π]` with `cos s·x + sin s·u` in every half-space `y·c ≥ 0`.
fn feasible_radii(constraints: &[V3], x: &V3, u: &V3) -> Vec<(f64, f64)> {
    let mut set: Vec<(f64, f64)> = vec![(0.0, PI)];
    for c in constraints {
        let (a, b) = (d3(c, x), d3(c, u));
        if a.hypot(b) < 1e-15 {
            continue;
        }
        let psi = b.atan2(a);
        let pieces = [-TAU, 0.0, TAU].map(|shift| (psi + shift - FRAC_PI_2, psi + shift + FRAC_PI_2));
        let mut next = Vec::new();
        for &(lo, hi) in &set {
            for &(plo, phi) in &pieces {
                let (l, h) = (lo.max(plo), hi.min(phi));
                if h - l > 1e-15 {
                    next.push((l, h));
                }
            }
        }
        set = next;
        if set.is_empty() {
            break;
        }
    }
    set
}

fn line_crossings(lines: &[V3], x: &V3, u: &V3, lo: f64, hi: f64) -> Vec<f64> {
    let mut ks = Vec::new();
    for (i, p) in lines.iter().enumerate() {
        for q in &lines[i + 1..] {
            let d = combo(1.0, p, -1.0, q);
            let (a, b) = (d3(&d, x), d3(&d, u));
            let base = (-a).atan2(b);
            for m in -2..=2 {
                let t = base + PI * f64::from(m);
                if t > lo && t < hi {
                    ks.push(t);
                }
            }
        }
    }
    ks
}

/// `M₀(μ)`, the unique maximum point of the density, as an ambient unit vector.
pub fn argmax_density(mu: &KDimMeasure) -> Result<UnitVector> {
    normalize(&mu.ambient(&mu.argmax_intrinsic()?))
}

/// Lemma-style lower bound `μ(B(M₀, ε)) ≥ vol(S^{n−k} + ε)/vol(S^n)`.
pub fn ball_lower_bound_check(mu: &KDimMeasure, eps: f64) -> Result<CheckRecord> {
    let m0 = argmax_density(mu)?;
    let measured = mu.ball_mass(m0.coords(), eps);
    let bound = TubeSpec::new(mu.n, mu.k, eps)?.fraction();
    Ok(CheckRecord {
        check: "ball_lower_bound".into(),
        params: json!({"n": mu.n, "k": mu.k, "eps": eps}),
        measured,
        bound,
        sigma: 0.0,
        pass: measured >= bound - 1e-6,
        seed: 0,
    })
}

/// `max φ ≤ 2^{n+1} / vol_k(support)` for the density φ with respect to `vol_k`.
pub fn density_max_bound_check(mu: &KDimMeasure) -> Result<CheckRecord> {
    if mu.support_volume < 1e-12 {
        return Err(invalid("support has vanishing k-dimensional volume"));
    }
    let measured = if mu.exponent == 0.0 {
        1.0 / mu.norm
    } else {
        mu.density_intrinsic(&mu.argmax_intrinsic()?)
    };
    let bound = 2f64.powi(mu.n as i32 + 1) / mu.support_volume;
    Ok(CheckRecord {
        check: "density_max_bound".into(),
        params: json!({"n": mu.n, "k": mu.k, "support_volume": mu.support_volume}),
        measured,
        bound,
        sigma: 0.0,
        pass: measured <= bound + 1e-9,
        seed: 0,
    })
}

/// `μ(B(x, r)) ≤ 2^n / ⌊ρ / 4r⌋` for supports of diameter at least ρ and `r ≤ ρ/8`.
pub fn ball_mass_upper_check(mu: &KDimMeasure, rho: f64, x: &[f64], r: f64) -> Result<CheckRecord> {
    if !(rho > 0.0 && rho <= mu.diameter() + 1e-12) {
        return Err(invalid(format!("ρ = {rho} must lie in (0, diameter = {}]", mu.diameter())));
    }
    if !(r > 0.0 && r <= rho / 8.0 + 1e-15) {
        return Err(invalid(format!("radius {r} must lie in (0, ρ/8]")));
    }
    let count = (rho / (4.0 * r) + 1e-9).floor();
    let bound = 2f64.powi(mu.n as i32) / count;
    let measured = mu.ball_mass(x, r);
    Ok(CheckRecord {
        check: "ball_mass_upper".into(),
        params: json!({"n": mu.n, "k": mu.k, "rho": rho, "r": r}),
        measured,
        bound,
        sigma: 0.0,
        pass: measured <= bound + 1e-9,
        seed: 0,
    })
}

/// A measure that can be probed by `x ↦ μ(B(x, r))`.
pub trait SupportMeasure: Sync {
    fn ambient_dim(&self) -> usize;
    fn ball_mass(&self, x: &[f64], r: f64) -> f64;
    fn in_support(&self, x: &[f64]) -> bool;
    fn sample_support(&self, count: usize, stream: RngStream) -> Vec<Vec<f64>>;
    /// Orthonormal tangent directions at `x` along which the support extends.
    fn tangent_directions(&self, x: &[f64]) -> Vec<Vec<f64>>;
}

impl SupportMeasure for KDimMeasure {
    fn ambient_dim(&self) -> usize {
        self.n
    }

    fn ball_mass(&self, x: &[f64], r: f64) -> f64 {
        KDimMeasure::ball_mass(self, x, r)
    }

    fn in_support(&self, x: &[f64]) -> bool {
        let y = self.intrinsic(x);
        d3(&y, &y) >= 1.0 - 1e-9 && self.contains_intrinsic(&y)
    }

    fn sample_support(&self, count: usize, stream: RngStream) -> Vec<Vec<f64>> {
        KDimMeasure::sample_support(self, &mut stream.rng(), count)
    }

    fn tangent_directions(&self, x: &[f64]) -> Vec<Vec<f64>> {
        gram_schmidt_tangent(x, self.basis.iter().cloned())
    }
}

fn gram_schmidt_tangent(x: &[f64], vectors: impl Iterator<Item = Vec<f64>>) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = Vec::new();
    for mut v in vectors {
        let c = dot(&v, x);
        v.iter_mut().zip(x).for_each(|(a, b)| *a -= c * b);
        for q in &out {
            let c = dot(&v, q);
            v.iter_mut().zip(q).for_each(|(a, b)| *a -= c * b);
        }
        if let Ok(u) = normalize(&v) {
            if crate::sphere::norm(&v) > 1e-8 {
                out.push(u.coords().to_vec());
            }
        }
    }
    out
}

/// Normalized volume on a full-dimensional cell. Ball masses use a fixed
/// set of uniform ball offsets moved rigidly to `x`, so comparisons between
/// points share their random numbers and exact ties survive.
#[derive(Clone, Debug)]
pub struct UniformCellMeasure {
    cell: ConvexCell,
    cell_fraction: f64,
    offsets: usize,
    stream: RngStream,
}

impl UniformCellMeasure {
    pub fn new(cell: ConvexCell, offsets: usize, volume_samples: usize, stream: RngStream) -> Result<Self> {
        let v = cell_volume_mc(&cell, volume_samples, stream.substream(0))?;
        if v.fraction == 0.0 {
            return Err(Error::EmptyCell);
        }
        Ok(Self { cell, cell_fraction: v.fraction, offsets, stream: stream.substream(1) })
    }

    pub fn cell(&self) -> &ConvexCell {
        &self.cell
    }
}

impl SupportMeasure for UniformCellMeasure {
    fn ambient_dim(&self) -> usize {
        self.cell.dim()
    }

    fn ball_mass(&self, x: &[f64], r: f64) -> f64 {
        let n1 = x.len();
        let frame = Frame::at_coords(x);
        let mut rng = self.stream.rng();
        let mut y = vec![0.0; n1];
        let mut pole = vec![0.0; n1];
        pole[n1 - 1] = 1.0;
        let identity = Frame::at_coords(&pole);
        let mut hits = 0usize;
        for _ in 0..self.offsets {
            fill_cap(&mut rng, &identity, r, &mut y);
            frame.apply(&mut y);
            hits += self.cell.contains(&y) as usize;
        }
        cap_fraction(n1 - 1, r) * hits as f64 / self.offsets as f64 / self.cell_fraction
    }

    fn in_support(&self, x: &[f64]) -> bool {
        self.cell.contains(x)
    }

    fn sample_support(&self, count: usize, stream: RngStream) -> Vec<Vec<f64>> {
        self.cell.sample(count, 1000 * count.max(1000), stream)
    }

    fn tangent_directions(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let n1 = x.len();
        gram_schmidt_tangent(x, (0..n1).map(|i| {
            let mut e = vec![0.0; n1];
            e[i] = 1.0;
            e
        }))
    }
}

/// A Dirac mass.
#[derive(Clone, Debug, PartialEq)]
pub struct PointMass(pub UnitVector);

impl SupportMeasure for PointMass {
    fn ambient_dim(&self) -> usize {
        self.0.dim()
    }

    fn ball_mass(&self, x: &[f64], r: f64) -> f64 {
        let d = dot(x, self.0.coords()).clamp(-1.0, 1.0).acos();
        if d <= r {
            1.0
        } else {
            0.0
        }
    }

    fn in_support(&self, x: &[f64]) -> bool {
        dot(x, self.0.coords()) >= 1.0 - 1e-12
    }

    fn sample_support(&self, count: usize, _stream: RngStream) -> Vec<Vec<f64>> {
        vec![self.0.coords().to_vec(); count]
    }

    fn tangent_directions(&self, _x: &[f64]) -> Vec<Vec<f64>> {
        Vec::new()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArgmaxOptions {
    pub starts: usize,
    /// How many of the best starts get a local ascent.
    pub refine: usize,
    pub tolerance: f64,
    pub min_step: f64,
    pub max_evals: usize,
}

impl Default for ArgmaxOptions {
    fn default() -> Self {
        Self { starts: 256, refine: 16, tolerance: 1e-4, min_step: 1e-7, max_evals: 4000 }
    }
}

/// An approximation of `M_r(μ)`, the argmax set of `x ↦ μ(B(x, r))`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BallMassArgmax {
    pub points: Vec<UnitVector>,
    pub values: Vec<f64>,
    pub best: f64,
}

impl BallMassArgmax {
    /// Normalized Euclidean mean of the argmax set.
    pub fn center(&self) -> Result<UnitVector> {
        spherical_centroid(&self.points, &vec![1.0; self.points.len()])
    }

    /// Largest distance from a returned point to `p`.
    pub fn hausdorff_to_point(&self, p: &UnitVector) -> f64 {
        self.points.iter().map(|q| geodesic_distance(q, p).unwrap_or(PI)).fold(0.0, f64::max)
    }
}

fn ascend<M: SupportMeasure + ?Sized>(mu: &M, x0: Vec<f64>, r: f64, v0: f64, opts: &ArgmaxOptions) -> (Vec<f64>, f64) {
    let (mut x, mut v) = (x0, v0);
    let mut h = (0.25 * r).min(0.1);
    let mut evals = 0;
    while h > opts.min_step && evals < opts.max_evals {
        let mut moved = false;
        let (s, c) = h.sin_cos();
        'dirs: for d in mu.tangent_directions(&x) {
            for sign in [1.0, -1.0] {
                let y: Vec<f64> = x.iter().zip(&d).map(|(a, b)| c * a + sign * s * b).collect();
                let Ok(y) = normalize(&y) else { continue };
                let y = y.coords().to_vec();
                if !mu.in_support(&y) {
                    continue;
                }
                evals += 1;
                let vy = mu.ball_mass(&y, r);
                if vy > v {
                    x = y;
                    v = vy;
                    moved = true;
                    break 'dirs;
                }
            }
        }
        if !moved {
            h *= 0.5;
        }
    }
    (x, v)
}

/// Multistart search for the points maximizing `x ↦ μ(B(x, r))` over the support.
pub fn argmax_ball_mass<M: SupportMeasure + ?Sized>(
    mu: &M,
    r: f64,
    opts: &ArgmaxOptions,
    stream: RngStream,
) -> Result<BallMassArgmax> {
    if !(r > 0.0) {
        return Err(invalid("ball radius must be positive"));
    }
    let starts = mu.sample_support(opts.starts, stream);
    if starts.is_empty() {
        return Err(Error::EmptyCell);
    }
    let values: Vec<f64> = starts.par_iter().map(|x| mu.ball_mass(x, r)).collect();
    let mut order: Vec<usize> = (0..starts.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    let refined: Vec<(Vec<f64>, f64)> = order
        .par_iter()
        .take(opts.refine)
        .map(|&j| ascend(mu, starts[j].clone(), r, values[j], opts))
        .collect();
    let mut pool: Vec<(Vec<f64>, f64)> = starts.into_iter().zip(values).collect();
    pool.extend(refined);
    let best = pool.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    let (points, values): (Vec<_>, Vec<_>) = pool
        .into_iter()
        .filter(|p| p.1 >= best - opts.tolerance)
        .map(|(x, v)| (normalize(&x).expect("unit support point"), v))
        .unzip();
    Ok(BallMassArgmax { points, values, best })
}

/// Checks, for a cell and a point `x` in it, that
/// `vol(C ∩ B(x, r)) / vol(B(x, r))` is nonincreasing in `r` and stays above
/// `vol(C) / vol(S^n)`, both within 4σ.
pub fn bishop_gromov_check(
    cell: &ConvexCell,
    x: &UnitVector,
    radii: &[f64],
    samples: usize,
    stream: RngStream,
) -> Result<CheckRecord> {
    if !cell.contains(x.coords()) {
        return Err(invalid("base point is not inside the cell"));
    }
    let mut radii = radii.to_vec();
    radii.sort_by(f64::total_cmp);
    let n1 = x.dim() + 1;
    let frame = Frame::at(x);
    let ratios: Vec<(f64, f64)> = radii
        .iter()
        .enumerate()
        .map(|(j, &r)| {
            let hits: u64 = par_chunks(stream.substream(j as u64 + 1), samples, |rng, len| {
                let mut y = vec![0.0; n1];
                (0..len)
                    .map(|_| {
                        fill_cap(rng, &frame, r, &mut y);
                        cell.contains(&y) as u64
                    })
                    .sum::<u64>()
            })
            .into_iter()
            .sum();
            let p = hits as f64 / samples as f64;
            (p, (p * (1.0 - p) / samples as f64).sqrt())
        })
        .collect();
    let cv = cell_volume_mc(cell, samples, stream.substream(0))?;
    let mut pass = true;
    let mut worst_rise = f64::NEG_INFINITY;
    let mut worst_sigma = 0.0;
    for w in ratios.windows(2) {
        let ((p0, s0), (p1, s1)) = (w[0], w[1]);
        let sigma = (s0 * s0 + s1 * s1).sqrt();
        pass &= p1 <= p0 + 4.0 * sigma;
        if p1 - p0 > worst_rise {
            worst_rise = p1 - p0;
            worst_sigma = sigma;
        }
    }
    for &(p, s) in &ratios {
        let sigma = (s * s + cv.std_error * cv.std_error).sqrt();
        pass &= p >= cv.fraction - 4.0 * sigma;
    }
    let min_ratio = ratios.iter().map(|r| r.0).fold(f64::INFINITY, f64::min);
    Ok(CheckRecord {
        check: "bishop_gromov".into(),
        params: json!({"n": x.dim(), "radii": radii, "samples": samples, "max_rise": worst_rise, "rise_sigma": worst_sigma}),
        measured: min_ratio,
        bound: cv.fraction,
        sigma: cv.std_error,
        pass,
        seed: stream.root_seed,
    })
}

/// `φ = (min_j (α_j + β_j·x))^m` on `S = unit ball ∩ {a_i·x ≤ b_i}` in `R^d`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConcaveDensity {
    pub dim: usize,
    pub m: f64,
    pub affine: Vec<(f64, Vec<f64>)>,
    pub halfspaces: Vec<(Vec<f64>, f64)>,
}

impl ConcaveDensity {
    pub fn contains(&self, x: &[f64]) -> bool {
        dot(x, x) < 1.0 && self.halfspaces.iter().all(|(a, b)| dot(a, x) < *b)
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        if !self.contains(x) {
            return 0.0;
        }
        let g = self.affine.iter().map(|(a, b)| a + dot(b, x)).fold(f64::INFINITY, f64::min);
        pow(g.max(0.0), self.m)
    }

    /// A random instance in dimension `dim` whose affine pieces are positive on the unit ball.
    pub fn random<R: Rng + ?Sized>(rng: &mut R, dim: usize, m: f64) -> Self {
        let dir = |rng: &mut R| {
            let mut v = vec![0.0; dim];
            fill_uniform(rng, &mut v);
            v
        };
        let affine = (0..rng.random_range(1..=3))
            .map(|_| {
                let s = rng.random_range(0.0..1.0);
                let b: Vec<f64> = dir(rng).into_iter().map(|v| v * s).collect();
                (s + rng.random_range(0.05..1.0), b)
            })
            .collect();
        let halfspaces = (0..rng.random_range(0..=2)).map(|_| (dir(rng), rng.random_range(0.2..0.9))).collect();
        Self { dim, m, affine, halfspaces }
    }

    /// A uniform point of the body by rejection from the unit ball.
    pub fn sample_point<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        loop {
            let x = uniform_ball(rng, self.dim, 1.0);
            if self.contains(&x) {
                return x;
            }
        }
    }
}

fn uniform_ball<R: Rng + ?Sized>(rng: &mut R, d: usize, r: f64) -> Vec<f64> {
    let mut v = vec![0.0; d];
    fill_uniform(rng, &mut v);
    let s = r * rng.random::<f64>().powf(1.0 / d as f64);
    v.iter_mut().for_each(|a| *a *= s);
    v
}

fn ball_volume(d: usize, r: f64) -> f64 {
    match d {
        1 => 2.0 * r,
        2 => PI * r * r,
        3 => 4.0 / 3.0 * PI * r.powi(3),
        _ => unreachable!(),
    }
}

/// Euclidean ball concavity: `μ(B(z, r))^{1/(m+d)}` along `z = θx + (1−θ)y`
/// dominates the chord, within 4σ. Ball offsets are shared by all centers.
pub fn ball_concavity_check(
    phi: &ConcaveDensity,
    x: &[f64],
    y: &[f64],
    r: f64,
    thetas: &[f64],
    samples: usize,
    stream: RngStream,
) -> Result<CheckRecord> {
    let d = phi.dim;
    if !(1..=3).contains(&d) || x.len() != d || y.len() != d {
        return Err(invalid("Euclidean check needs matching dimension 1 ≤ d ≤ 3"));
    }
    if !(phi.contains(x) && phi.contains(y)) {
        return Err(invalid("segment endpoints must lie in the body"));
    }
    let mut rng = stream.rng();
    let offsets: Vec<Vec<f64>> = (0..samples).map(|_| uniform_ball(&mut rng, d, r)).collect();
    let vb = ball_volume(d, r);
    let q = 1.0 / (phi.m + d as f64);
    let terms = |c: &[f64]| -> Vec<f64> {
        offsets
            .iter()
            .map(|o| vb * phi.eval(&c.iter().zip(o).map(|(a, b)| a + b).collect::<Vec<_>>()))
            .collect()
    };
    let ax = terms(x);
    let ay = terms(y);
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (mx, my) = (mean(&ax), mean(&ay));
    let deriv = |m: f64| if m > 0.0 { q * m.powf(q - 1.0) } else { 0.0 };
    let mut pass = true;
    let mut worst = (f64::INFINITY, 0.0, 0.0);
    for &theta in thetas {
        let z: Vec<f64> = x.iter().zip(y).map(|(a, b)| theta * a + (1.0 - theta) * b).collect();
        let az = terms(&z);
        let mz = mean(&az);
        let lhs = mz.powf(q);
        let rhs = theta * mx.powf(q) + (1.0 - theta) * my.powf(q);
        let (gz, gx, gy) = (deriv(mz), deriv(mx), deriv(my));
        let w: Vec<f64> = (0..samples).map(|j| gz * az[j] - theta * gx * ax[j] - (1.0 - theta) * gy * ay[j]).collect();
        let wm = mean(&w);
        let var = w.iter().map(|v| (v - wm).powi(2)).sum::<f64>() / (samples as f64 - 1.0).max(1.0);
        let sigma = (var / samples as f64).sqrt();
        let slack = lhs - rhs;
        pass &= slack >= -4.0 * sigma;
        if slack < worst.0 {
            worst = (slack, sigma, theta);
        }
    }
    Ok(CheckRecord {
        check: "ball_concavity".into(),
        params: json!({"d": d, "m": phi.m, "r": r, "worst_theta": worst.2}),
        measured: worst.0,
        bound: 0.0,
        sigma: worst.1,
        pass,
        seed: stream.root_seed,
    })
}

/// Sets whose volume is decomposed over the cells of a partition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum TestSet {
    Whole,
    Empty,
    Cap { center: UnitVector, radius: f64 },
    /// Tube of radius `eps` around the equatorial `S^{n−k}` (last `k` coordinates zero).
    Tube { k: usize, eps: f64 },
}

impl TestSet {
    pub fn contains(&self, x: &[f64]) -> bool {
        match self {
            TestSet::Whole => true,
            TestSet::Empty => false,
            TestSet::Cap { center, radius } => dot(x, center.coords()) >= radius.cos(),
            TestSet::Tube { k, eps } => {
                let s: f64 = x[x.len() - k..].iter().map(|v| v * v).sum();
                *eps >= FRAC_PI_2 || s <= eps.sin().powi(2)
            }
        }
    }
}

/// `vol(A)/vol(S^n)` against `Σ_cells vol(cell)/vol(S^n) · μ_cell(A)`, within 5σ.
pub fn desintegration_check(
    p: &OrientedPartition,
    set: &TestSet,
    samples: usize,
    stream: RngStream,
) -> Result<CheckRecord> {
    let n1 = p.dim() + 1;
    let hits: u64 = par_chunks(stream.substream(0), samples, |rng, len| {
        let mut x = vec![0.0; n1];
        (0..len)
            .map(|_| {
                fill_uniform(rng, &mut x);
                set.contains(&x) as u64
            })
            .sum::<u64>()
    })
    .into_iter()
    .sum();
    let lhs = hits as f64 / samples as f64;
    let var_lhs = lhs * (1.0 - lhs) / samples as f64;
    let leaves = leaf_statistics(p, samples, stream.substream(1), CenterMap::Centroid);
    let per_cell = (samples / leaves.len()).max(2000);
    let mut rhs = 0.0;
    let mut second = 0.0;
    let mut var_cells = 0.0;
    let mut bias = 0.0;
    for (leaf, s) in leaves.iter().enumerate() {
        if s.volume == 0.0 {
            continue;
        }
        let cell = crate::partition::cell_constraints(p, leaf)?;
        let budget = ((per_cell as f64 / s.volume) * 4.0).min(50.0 * samples as f64) as usize;
        let pts = cell.sample(per_cell, budget, stream.substream(2 + leaf as u64));
        if pts.is_empty() {
            bias += s.volume;
            continue;
        }
        let m = pts.iter().filter(|x| set.contains(x)).count() as f64 / pts.len() as f64;
        rhs += s.volume * m;
        second += s.volume * m * m;
        var_cells += s.volume * s.volume * m * (1.0 - m) / pts.len() as f64;
    }
    // Leaf volumes are multinomial: Var(Σ m_c v̂_c) = (Σ m_c² v_c − (Σ m_c v_c)²) / N.
    let var_vol = ((second - rhs * rhs) / samples as f64).max(0.0);
    let sigma = (var_lhs + var_vol + var_cells).sqrt() + bias;
    let gap = (lhs - rhs).abs();
    let pass = if sigma == 0.0 { gap <= 1e-12 } else { gap <= 5.0 * sigma };
    Ok(CheckRecord {
        check: "desintegration".into(),
        params: json!({"n": p.dim(), "depth": p.depth(), "set": set, "lhs": lhs, "rhs": rhs}),
        measured: gap,
        bound: 5.0 * sigma,
        sigma,
        pass,
        seed: stream.root_seed,
    })
}

/// Random orthonormal `m`-frame in `R^{n+1}`.
pub fn random_frame<R: Rng + ?Sized>(rng: &mut R, n: usize, m: usize) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(m);
    while out.len() < m {
        let mut v = vec![0.0; n + 1];
        fill_uniform(rng, &mut v);
        for q in &out {
            let c = dot(&v, q);
            v.iter_mut().zip(q).for_each(|(a, b)| *a -= c * b);
        }
        if crate::sphere::norm(&v) > 1e-6 {
            out.push(normalize(&v).expect("nonzero").coords().to_vec());
        }
    }
    out
}

/// Random arc measure in `S^n`: arc length in `[0.2, 2.8]`, 1–3 density lines.
pub fn random_arc_measure<R: Rng + ?Sized>(rng: &mut R, n: usize) -> KDimMeasure {
    let frame = random_frame(rng, n, 2);
    let len = rng.random_range(0.2..2.8);
    let t0 = rng.random_range(-PI..PI);
    let t1 = t0 + len;
    let lines = (0..rng.random_range(1..=3))
        .map(|_| {
            let phi = rng.random_range(t1 - FRAC_PI_2..=t0 + FRAC_PI_2);
            let r = rng.random_range(0.5..2.0);
            (r * phi.cos(), r * phi.sin())
        })
        .collect();
    KDimMeasure::arc(n, [frame[0].clone(), frame[1].clone()], t0, t1, lines).expect("valid arc measure")
}

/// Random polygon measure in `S^n` (n ≥ 2): 3–6 sides at distances
/// `[0.2, 1.1]` from a center, density lines positive on the polygon.
pub fn random_polygon_measure<R: Rng + ?Sized>(rng: &mut R, n: usize) -> KDimMeasure {
    let frame = random_frame(rng, n, 3);
    let z = [0.0, 0.0, 1.0];
    // Wide gaps between few sides can push a vertex past the hemisphere; redraw.
    let (constraints, probe) = loop {
        let sides = rng.random_range(3..=6);
        let spin = rng.random_range(0.0..TAU);
        let constraints: Vec<V3> = (0..sides)
            .map(|j| {
                let psi = spin + TAU * (j as f64 + rng.random_range(-0.2..0.2)) / sides as f64;
                let rho: f64 = rng.random_range(0.2..1.1);
                let w = [psi.cos(), psi.sin(), 0.0];
                combo(rho.sin(), &z, -rho.cos(), &w)
            })
            .collect();
        let basis = [frame[0].clone(), frame[1].clone(), frame[2].clone()];
        if let Ok(probe) = KDimMeasure::polygon(n, basis, constraints.clone(), vec![z]) {
            break (constraints, probe);
        }
    };
    let reach = probe.vertices.iter().map(|v| d3(v, &z).clamp(-1.0, 1.0).acos()).fold(0.0, f64::max);
    let tilt_max = (FRAC_PI_2 - reach - 1e-3).max(0.0);
    let lines = (0..rng.random_range(1..=3))
        .map(|_| {
            let tilt = rng.random_range(0.0..=tilt_max);
            let dir = rng.random_range(0.0..TAU);
            let s = rng.random_range(0.5..2.0);
            let v = combo(tilt.cos(), &z, tilt.sin(), &[dir.cos(), dir.sin(), 0.0]);
            [s * v[0], s * v[1], s * v[2]]
        })
        .collect();
    KDimMeasure::polygon(n, [frame[0].clone(), frame[1].clone(), frame[2].clone()], constraints, lines)
        .expect("valid polygon measure")
}
