//! Points, geodesics and uniform sampling on the round sphere S^n ⊂ R^{n+1}.

use std::f64::consts::PI;
use std::fmt;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::quadrature::{integrate, pow};

/// Tolerance on |‖v‖ − 1| accepted by [`UnitVector::from_coords`].
pub const UNIT_TOL: f64 = 1e-12;

/// A point of S^n, also used as the oriented normal of a great hypersphere.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct UnitVector {
    coords: Vec<f64>,
}

impl fmt::Debug for UnitVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "UnitVector{:?}", self.coords)
    }
}

impl TryFrom<Vec<f64>> for UnitVector {
    type Error = Error;
    fn try_from(coords: Vec<f64>) -> Result<Self> {
        UnitVector::from_coords(coords)
    }
}

impl From<UnitVector> for Vec<f64> {
    fn from(v: UnitVector) -> Self {
        v.coords
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Scales `v` to unit length.
pub fn normalize(v: &[f64]) -> Result<UnitVector> {
    if v.len() < 2 {
        return Err(invalid("a point of S^n needs at least 2 coordinates"));
    }
    let r = norm(v);
    if !(r >= 1e-300) || !r.is_finite() {
        return Err(Error::ZeroVector);
    }
    Ok(UnitVector { coords: v.iter().map(|x| x / r).collect() })
}

impl UnitVector {
    /// Wraps coordinates that are already unit length, without rescaling.
    pub fn from_coords(coords: Vec<f64>) -> Result<Self> {
        if coords.len() < 2 {
            return Err(invalid("a point of S^n needs at least 2 coordinates"));
        }
        let r = norm(&coords);
        if (r - 1.0).abs() > UNIT_TOL {
            return Err(invalid(format!("vector norm {r} is not 1")));
        }
        Ok(Self { coords })
    }

    /// The `i`-th standard basis vector of R^{n+1}.
    pub fn basis(n: usize, i: usize) -> Self {
        assert!(i <= n && n >= 1);
        let mut coords = vec![0.0; n + 1];
        coords[i] = 1.0;
        Self { coords }
    }

    /// Sphere dimension n.
    pub fn dim(&self) -> usize {
        self.coords.len() - 1
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn dot(&self, other: &UnitVector) -> f64 {
        dot(&self.coords, &other.coords)
    }

    pub fn neg(&self) -> UnitVector {
        UnitVector { coords: self.coords.iter().map(|x| -x).collect() }
    }
}

fn same_dim(a: &UnitVector, b: &UnitVector) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::DimMismatch { expected: a.dim(), found: b.dim() });
    }
    Ok(())
}

/// Angle between `a` and `b`, in `[0, π]`.
pub fn geodesic_distance(a: &UnitVector, b: &UnitVector) -> Result<f64> {
    same_dim(a, b)?;
    Ok(a.dot(b).clamp(-1.0, 1.0).acos())
}

/// Chord length corresponding to a geodesic distance `t ≤ π`.
#[inline]
pub fn chord_of_angle(t: f64) -> f64 {
    2.0 * (0.5 * t.min(PI)).sin()
}

/// Fills `out` (length n+1) with a uniform point of S^n.
pub fn fill_uniform<R: Rng + ?Sized>(rng: &mut R, out: &mut [f64]) {
    loop {
        let mut r2 = 0.0;
        for x in out.iter_mut() {
            let g: f64 = rng.sample(StandardNormal);
            *x = g;
            r2 += g * g;
        }
        if r2 > 1e-200 {
            let inv = 1.0 / r2.sqrt();
            out.iter_mut().for_each(|x| *x *= inv);
            return;
        }
    }
}

/// A uniform point of S^n (normalized Gaussian vector).
pub fn sample_uniform<R: Rng + ?Sized>(rng: &mut R, n: usize) -> UnitVector {
    let mut coords = vec![0.0; n + 1];
    fill_uniform(rng, &mut coords);
    UnitVector { coords }
}

/// The exponential map `cos(t)·center + sin(t)·u` for a unit tangent `u`.
pub fn polar_coordinates(center: &UnitVector, t: f64, u: &UnitVector) -> Result<UnitVector> {
    same_dim(center, u)?;
    let c = center.dot(u);
    if c.abs() > 1e-9 {
        return Err(Error::NotTangent(c));
    }
    if !(0.0..=PI).contains(&t) {
        return Err(invalid(format!("polar radius {t} outside [0, π]")));
    }
    let (s, co) = t.sin_cos();
    let coords: Vec<f64> =
        center.coords.iter().zip(&u.coords).map(|(p, q)| co * p + s * q).collect();
    normalize(&coords)
}

/// Radial projection of the weighted Euclidean mean of `points`.
pub fn spherical_centroid(points: &[UnitVector], weights: &[f64]) -> Result<UnitVector> {
    let first = points.first().ok_or_else(|| invalid("centroid of an empty set"))?;
    if points.len() != weights.len() {
        return Err(invalid("points and weights differ in length"));
    }
    let mut acc = vec![0.0; first.coords.len()];
    for (p, &w) in points.iter().zip(weights) {
        same_dim(first, p)?;
        if w < 0.0 {
            return Err(invalid("negative centroid weight"));
        }
        acc.iter_mut().zip(&p.coords).for_each(|(a, x)| *a += w * x);
    }
    let total: f64 = weights.iter().sum();
    let r = norm(&acc) / if total > 0.0 { total } else { 1.0 };
    if !(r > 1e-9) {
        return Err(Error::DegenerateMean(r));
    }
    normalize(&acc)
}

/// A Householder reflection carrying the last basis vector e_n onto a
/// chosen point, used to build local frames.
#[derive(Clone, Debug)]
pub struct Frame {
    v: Vec<f64>,
    scale: f64,
}

impl Frame {
    pub fn at(center: &UnitVector) -> Frame {
        Self::at_coords(&center.coords)
    }

    /// Frame at a point given by raw (unit-norm) coordinates.
    pub fn at_coords(center: &[f64]) -> Frame {
        let n1 = center.len();
        let mut v = center.to_vec();
        v[n1 - 1] -= 1.0;
        let vv = dot(&v, &v);
        let scale = if vv < 1e-30 { 0.0 } else { 2.0 / vv };
        Frame { v, scale }
    }

    /// Applies the reflection to `y` in place.
    pub fn apply(&self, y: &mut [f64]) {
        if self.scale == 0.0 {
            return;
        }
        let s = self.scale * dot(&self.v, y);
        y.iter_mut().zip(&self.v).for_each(|(a, b)| *a -= s * b);
    }

    /// The images of e_0, …, e_{n−1}: an orthonormal basis of the tangent space at the center.
    pub fn tangent_basis(&self, n: usize) -> Vec<Vec<f64>> {
        (0..n)
            .map(|i| {
                let mut e = vec![0.0; n + 1];
                e[i] = 1.0;
                self.apply(&mut e);
                e
            })
            .collect()
    }
}

/// Fraction vol(B(x, r)) / vol(S^n) of a geodesic ball.
pub fn cap_fraction(n: usize, r: f64) -> f64 {
    if r <= 0.0 {
        return 0.0;
    }
    if r >= PI {
        return 1.0;
    }
    let m = (n - 1) as f64;
    if n == 1 {
        return r / PI;
    }
    if n == 2 {
        return 0.5 * (1.0 - r.cos());
    }
    let num = integrate(|t: f64| pow(t.sin(), m), 0.0, r, 1e-14);
    let den = integrate(|t: f64| pow(t.sin(), m), 0.0, PI, 1e-14);
    num / den
}

/// Fills `out` with a uniform point of the geodesic ball B(center, r) ⊂ S^n.
pub fn fill_cap<R: Rng + ?Sized>(rng: &mut R, frame: &Frame, r: f64, out: &mut [f64]) {
    let n = out.len() - 1;
    let r = r.min(PI);
    let m = (n - 1) as i32;
    let peak = if r >= PI / 2.0 { 1.0 } else { r.sin() };
    let t = loop {
        let t = r * rng.random::<f64>();
        if m == 0 || rng.random::<f64>() * peak.powi(m) <= t.sin().powi(m) {
            break t;
        }
    };
    let (s, c) = t.sin_cos();
    fill_uniform(rng, &mut out[..n]);
    out[..n].iter_mut().for_each(|x| *x *= s);
    out[n] = c;
    frame.apply(out);
}
