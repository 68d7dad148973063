//! Monte Carlo estimates of `max_z vol(f⁻¹(z) + ε) / vol(S^n)`.
//!
//! The fiber `f⁻¹(z)` is replaced by the slab `{y : |f(y) − z| ≤ δ}` of a
//! stored uniform cloud (phase 1), and the tube fraction is the share of an
//! independent query cloud lying within `ε` of some slab point (phase 2).
//! The slab contains the fiber's sampled neighbourhood, so raw estimates are
//! biased upwards by roughly `c·δ`.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::maps::{MapSpec, SphereMap};
use crate::measure::{tube_fraction, TubeSpec};
use crate::rng::{par_chunks, RngStream};
use crate::spatial::KdTree;
use crate::sphere::{chord_of_angle, fill_uniform};

/// Target number of slab points used to pick the default `δ`.
const SLAB_TARGET: f64 = 1000.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WaistOptions {
    /// Phase-1 cloud size (candidate fiber points).
    pub slab_samples: usize,
    /// Phase-2 cloud size for the reported rows.
    pub query_samples: usize,
    /// Phase-2 size for the initial scan of the grid.
    pub coarse_queries: usize,
    /// Slab half-width; `None` picks [`default_slab_delta`].
    pub delta: Option<f64>,
    /// Grid spacing as a multiple of `ε`.
    pub grid_step: f64,
    /// Number of coarse maxima refined with a finer grid and the full query budget.
    pub refine_top: usize,
    pub seed: u64,
}

impl Default for WaistOptions {
    fn default() -> Self {
        Self {
            slab_samples: 4_000_000,
            query_samples: 100_000,
            coarse_queries: 10_000,
            delta: None,
            grid_step: 0.25,
            refine_top: 3,
            seed: 0,
        }
    }
}

/// `max(ε/50, (1000/N₁)^{1/k})`: thin, yet with enough slab points to trace the fiber.
pub fn default_slab_delta(k: usize, eps: f64, slab_samples: usize) -> f64 {
    (eps / 50.0).max((SLAB_TARGET / slab_samples as f64).powf(1.0 / k as f64))
}

/// Phase-1 cloud sorted by the first image coordinate, plus the query cloud.
pub struct WaistSampler {
    n1: usize,
    k: usize,
    points: Vec<f64>,
    images: Vec<f64>,
    queries: Vec<f64>,
}

impl WaistSampler {
    pub fn new(f: &dyn SphereMap, slab_samples: usize, query_samples: usize, stream: RngStream) -> Self {
        let (n1, k) = (f.n() + 1, f.k());
        let chunks = par_chunks(stream.substream(0), slab_samples, |rng, len| {
            let mut pts = vec![0.0; len * n1];
            let mut img = vec![0.0; len * k];
            for (x, y) in pts.chunks_exact_mut(n1).zip(img.chunks_exact_mut(k)) {
                fill_uniform(rng, x);
                f.eval(x, y);
            }
            (pts, img)
        });
        let raw_pts: Vec<f64> = chunks.iter().flat_map(|c| c.0.iter().copied()).collect();
        let raw_img: Vec<f64> = chunks.iter().flat_map(|c| c.1.iter().copied()).collect();
        let mut order: Vec<usize> = (0..slab_samples).collect();
        order.sort_by(|&a, &b| raw_img[a * k].total_cmp(&raw_img[b * k]));
        let mut points = Vec::with_capacity(raw_pts.len());
        let mut images = Vec::with_capacity(raw_img.len());
        for &i in &order {
            points.extend_from_slice(&raw_pts[i * n1..(i + 1) * n1]);
            images.extend_from_slice(&raw_img[i * k..(i + 1) * k]);
        }
        let queries = par_chunks(stream.substream(1), query_samples, |rng, len| {
            let mut q = vec![0.0; len * n1];
            q.chunks_exact_mut(n1).for_each(|x| fill_uniform(rng, x));
            q
        })
        .concat();
        Self { n1, k, points, images, queries }
    }

    pub fn slab_samples(&self) -> usize {
        self.images.len() / self.k
    }

    pub fn query_samples(&self) -> usize {
        self.queries.len() / self.n1
    }

    /// Componentwise range of the sampled images.
    pub fn image_range(&self) -> Vec<(f64, f64)> {
        (0..self.k)
            .map(|j| {
                self.images
                    .chunks_exact(self.k)
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), y| (lo.min(y[j]), hi.max(y[j])))
            })
            .collect()
    }

    /// Stored points whose image lies within `delta` of `z`.
    pub fn slab(&self, z: &[f64], delta: f64) -> Vec<f64> {
        let k = self.k;
        let n = self.slab_samples();
        let lo = partition_point(n, |i| self.images[i * k] < z[0] - delta);
        let hi = partition_point(n, |i| self.images[i * k] <= z[0] + delta);
        let mut out = Vec::new();
        for i in lo..hi {
            let y = &self.images[i * k..(i + 1) * k];
            let d2: f64 = y.iter().zip(z).map(|(a, b)| (a - b) * (a - b)).sum();
            if d2 <= delta * delta {
                out.extend_from_slice(&self.points[i * self.n1..(i + 1) * self.n1]);
            }
        }
        out
    }

    /// Tube fraction at `z` using the first `queries` query points.
    pub fn tube_fraction_at(&self, z: &[f64], eps: f64, delta: f64, queries: usize) -> Result<TubeEstimate> {
        if z.len() != self.k {
            return Err(Error::DimMismatch { expected: self.k, found: z.len() });
        }
        let slab = self.slab(z, delta);
        if slab.is_empty() {
            return Err(Error::EmptySlab(z.to_vec()));
        }
        let slab_points = slab.len() / self.n1;
        let queries = queries.min(self.query_samples());
        let q = &self.queries[..queries * self.n1];
        let hits = if eps >= std::f64::consts::PI {
            queries
        } else {
            let tree = KdTree::new(&slab, self.n1);
            let r = chord_of_angle(eps);
            q.chunks_exact(self.n1).filter(|x| tree.any_within(x, r)).count()
        };
        let p = hits as f64 / queries as f64;
        Ok(TubeEstimate { fraction: p, sigma: (p * (1.0 - p) / queries as f64).sqrt(), slab_points, queries })
    }
}

fn partition_point(n: usize, pred: impl Fn(usize) -> bool) -> usize {
    let (mut lo, mut hi) = (0, n);
    while lo < hi {
        let mid = (lo + hi) / 2;
        if pred(mid) {
            lo = mid + 1;
        } else {
            hi = mid;
        }
    }
    lo
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TubeEstimate {
    pub fraction: f64,
    pub sigma: f64,
    pub slab_points: usize,
    pub queries: usize,
}

/// Two-phase estimate of `vol(f⁻¹(z) + ε) / vol(S^n)`.
pub fn fiber_tube_volume(
    f: &dyn SphereMap,
    z: &[f64],
    eps: f64,
    delta: f64,
    slab_samples: usize,
    query_samples: usize,
    stream: RngStream,
) -> Result<TubeEstimate> {
    if !(delta > 0.0) || !(eps >= 0.0) {
        return Err(invalid("slab width must be positive and ε nonnegative"));
    }
    WaistSampler::new(f, slab_samples, query_samples, stream).tube_fraction_at(z, eps, delta, query_samples)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WaistRow {
    pub z: Vec<f64>,
    pub fraction: f64,
    pub sigma: f64,
    pub queries: usize,
    pub slab_points: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WaistReport {
    pub map: String,
    pub n: usize,
    pub k: usize,
    pub eps: f64,
    pub delta: f64,
    pub seed: u64,
    /// Full-budget rows, sorted by `z`.
    pub rows: Vec<WaistRow>,
    /// Coarse-scan rows, sorted by `z`.
    pub scan: Vec<WaistRow>,
    /// Grid points whose slab was empty.
    pub empty_slabs: usize,
    pub max_fraction: f64,
    pub max_sigma: f64,
    pub argmax_z: Vec<f64>,
    pub bound: f64,
    pub gap: f64,
}

impl WaistReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Columns `z…, fraction, sigma, bound, gap` for the full-budget rows.
    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        if self.k == 1 {
            s.push('z');
        } else {
            s.push_str(&(1..=self.k).map(|j| format!("z{j}")).collect::<Vec<_>>().join(","));
        }
        s.push_str(",fraction,sigma,bound,gap\n");
        for r in &self.rows {
            for z in &r.z {
                let _ = write!(s, "{z:.8},");
            }
            let _ = writeln!(s, "{:.8},{:.8},{:.8},{:.8}", r.fraction, r.sigma, self.bound, r.fraction - self.bound);
        }
        s
    }

    /// Whitespace-separated `z… fraction bound` lines over every evaluated grid point.
    pub fn plot_data(&self) -> String {
        let mut all: Vec<&WaistRow> = self.scan.iter().chain(&self.rows).collect();
        all.sort_by(|a, b| cmp_z(&a.z, &b.z));
        let mut s = String::from("# z fraction bound\n");
        for r in all {
            for z in &r.z {
                let _ = write!(s, "{z:.8} ");
            }
            let _ = writeln!(s, "{:.8} {:.8}", r.fraction, self.bound);
        }
        s
    }
}

fn cmp_z(a: &[f64], b: &[f64]) -> std::cmp::Ordering {
    a.iter().zip(b).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()).unwrap_or(std::cmp::Ordering::Equal)
}

fn grid(ranges: &[(f64, f64)], step: f64) -> Vec<Vec<f64>> {
    let axes: Vec<Vec<f64>> = ranges
        .iter()
        .map(|&(lo, hi)| {
            let m = ((hi - lo) / step).ceil().max(0.0) as usize;
            (0..=m).map(|j| lo + j as f64 * step).collect()
        })
        .collect();
    let mut out = vec![Vec::new()];
    for axis in &axes {
        out = out
            .into_iter()
            .flat_map(|p| {
                axis.iter().map(move |&v| {
                    let mut q = p.clone();
                    q.push(v);
                    q
                })
            })
            .collect();
    }
    out
}

fn evaluate(s: &WaistSampler, zs: Vec<Vec<f64>>, eps: f64, delta: f64, queries: usize) -> (Vec<WaistRow>, usize) {
    let results: Vec<Option<WaistRow>> = zs
        .into_par_iter()
        .map(|z| match s.tube_fraction_at(&z, eps, delta, queries) {
            Ok(t) => Some(WaistRow { z, fraction: t.fraction, sigma: t.sigma, queries: t.queries, slab_points: t.slab_points }),
            Err(_) => None,
        })
        .collect();
    let empty = results.iter().filter(|r| r.is_none()).count();
    (results.into_iter().flatten().collect(), empty)
}

/// Scans a grid of spacing `grid_step·ε` over the sampled image range with
/// the coarse query budget, then re-evaluates a finer grid around the best
/// `refine_top` points with the full budget. The maximum is taken over the
/// full-budget rows only.
pub fn waist_estimate(f: &dyn SphereMap, label: &str, eps: f64, opts: &WaistOptions) -> Result<WaistReport> {
    if !(eps > 0.0) {
        return Err(invalid("ε must be positive"));
    }
    if !(opts.grid_step > 0.0) || opts.query_samples == 0 || opts.slab_samples == 0 {
        return Err(invalid("grid step and sample budgets must be positive"));
    }
    let (n, k) = (f.n(), f.k());
    let delta = opts.delta.unwrap_or_else(|| default_slab_delta(k, eps, opts.slab_samples));
    if !(delta > 0.0) {
        return Err(invalid("slab width must be positive"));
    }
    let bound = tube_fraction(&TubeSpec::new(n, k, eps)?);
    let sampler = WaistSampler::new(f, opts.slab_samples, opts.query_samples, RngStream::new(opts.seed, 0x3a15));
    let step = opts.grid_step * eps;
    let ranges = sampler.image_range();
    let (mut scan, mut empty) = evaluate(&sampler, grid(&ranges, step), eps, delta, opts.coarse_queries.max(1));
    if scan.is_empty() {
        return Err(Error::EmptySlab(ranges.iter().map(|r| 0.5 * (r.0 + r.1)).collect()));
    }
    let mut ranked: Vec<&WaistRow> = scan.iter().collect();
    ranked.sort_by(|a, b| b.fraction.total_cmp(&a.fraction).then_with(|| cmp_z(&a.z, &b.z)));
    let fine_step = step / 4.0;
    let mut targets: Vec<Vec<f64>> = Vec::new();
    for top in ranked.iter().take(opts.refine_top.max(1)) {
        let local: Vec<(f64, f64)> = top.z.iter().map(|&c| (c - 2.0 * fine_step, c + 2.0 * fine_step)).collect();
        for z in grid(&local, fine_step) {
            if !targets.iter().any(|t| t.iter().zip(&z).all(|(a, b)| (a - b).abs() < 1e-12 * (1.0 + a.abs()))) {
                targets.push(z);
            }
        }
    }
    let (mut rows, e2) = evaluate(&sampler, targets, eps, delta, opts.query_samples);
    empty += e2;
    if rows.is_empty() {
        return Err(Error::EmptySlab(ranked[0].z.clone()));
    }
    rows.sort_by(|a, b| cmp_z(&a.z, &b.z));
    scan.sort_by(|a, b| cmp_z(&a.z, &b.z));
    let best = rows.iter().max_by(|a, b| a.fraction.total_cmp(&b.fraction).then_with(|| cmp_z(&b.z, &a.z))).expect("nonempty");
    Ok(WaistReport {
        map: label.to_string(),
        n,
        k,
        eps,
        delta,
        seed: opts.seed,
        max_fraction: best.fraction,
        max_sigma: best.sigma,
        argmax_z: best.z.clone(),
        bound,
        gap: best.fraction - bound,
        rows,
        scan,
        empty_slabs: empty,
    })
}

/// [`waist_estimate`] for a built-in map.
pub fn waist_estimate_spec(spec: &MapSpec, eps: f64, opts: &WaistOptions) -> Result<WaistReport> {
    waist_estimate(&spec.build()?, &spec.to_string(), eps, opts)
}

/// Slab bias per unit `δ`, measured on the coordinate projection where the
/// exact tube fraction is known.
pub fn calibrate_slab_bias(n: usize, k: usize, eps: f64, opts: &WaistOptions) -> Result<f64> {
    let r = waist_estimate_spec(&MapSpec::projection(n, k), eps, opts)?;
    Ok(r.gap.abs() / r.delta)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TheoremCheck {
    pub max_fraction: f64,
    pub bound: f64,
    pub sigma: f64,
    pub bias_per_delta: f64,
    pub allowance: f64,
    pub pass: bool,
}

/// `max ≥ bound − (4σ + c·δ)`.
pub fn theorem_check(report: &WaistReport, bias_per_delta: f64) -> TheoremCheck {
    let allowance = 4.0 * report.max_sigma + bias_per_delta * report.delta;
    TheoremCheck {
        max_fraction: report.max_fraction,
        bound: report.bound,
        sigma: report.max_sigma,
        bias_per_delta,
        allowance,
        pass: report.max_fraction >= report.bound - allowance,
    }
}

/// `base + amplitude·sin(freq·x₁)` in every component.
pub struct Perturbed<'a> {
    pub base: &'a dyn SphereMap,
    pub amplitude: f64,
    pub freq: f64,
}

impl SphereMap for Perturbed<'_> {
    fn n(&self) -> usize {
        self.base.n()
    }
    fn k(&self) -> usize {
        self.base.k()
    }
    fn eval(&self, x: &[f64], out: &mut [f64]) {
        self.base.eval(x, out);
        let d = self.amplitude * (self.freq * x[0]).sin();
        out.iter_mut().for_each(|o| *o += d);
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DegradationRow {
    pub delta: f64,
    /// Sampled `sup |f − g|`.
    pub sup_distance: f64,
    pub max_f: f64,
    pub max_g: f64,
    pub degradation: f64,
}

/// Waist maxima of `f` and of `g_δ = f + δ·sin(3x₁)` for each `δ`, on
/// identical sample clouds.
pub fn continuity_degradation(
    f: &dyn SphereMap,
    eps: f64,
    deltas: &[f64],
    opts: &WaistOptions,
) -> Result<Vec<DegradationRow>> {
    let base = waist_estimate(f, "f", eps, opts)?;
    let mut rng = RngStream::new(opts.seed, 0xde9).rng();
    let probes: Vec<Vec<f64>> = (0..10_000).map(|_| crate::sphere::sample_uniform(&mut rng, f.n()).into()).collect();
    deltas
        .iter()
        .map(|&delta| {
            let g = Perturbed { base: f, amplitude: delta, freq: 3.0 };
            let (mut a, mut b) = (vec![0.0; f.k()], vec![0.0; f.k()]);
            let sup = probes.iter().fold(0.0f64, |m, x| {
                f.eval(x, &mut a);
                g.eval(x, &mut b);
                a.iter().zip(&b).fold(m, |m, (s, t)| m.max((s - t).abs()))
            });
            let r = if delta == 0.0 { base.clone() } else { waist_estimate(&g, "g", eps, opts)? };
            Ok(DegradationRow {
                delta,
                sup_distance: sup,
                max_f: base.max_fraction,
                max_g: r.max_fraction,
                degradation: (r.max_fraction - base.max_fraction).abs(),
            })
        })
        .collect()
}
