//! The equivariant section `F` on oriented partitions and a noisy-objective
//! solver for its zeros, plus the pancake machinery built on top.
//!
//! At each internal node `h` the section records
//! `Δv = v(h) − v(−h)` and `Δφ = φ(h) − φ(−h)`, where `v` sums cell volumes
//! and `φ` sums `vol(cell)·f(center(cell))` over the two subtrees. A zero of
//! `F` is a partition into `2^i` cells of equal volume whose centers all map
//! to the same point of `R^k`.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::maps::SphereMap;
use crate::partition::{
    cell_constraints, leaf_statistics, node_aggregates, CenterMap, ConvexCell, LeafStats, OrientedPartition,
    PartitionTree, SampleCloud, MAX_ORBIT_DEPTH,
};
use crate::rng::RngStream;
use crate::sphere::{dot, fill_uniform, normalize, UnitVector};

/// `F` evaluated at one internal node.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeSection {
    pub node: usize,
    pub dv: f64,
    pub dphi: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SectionValue {
    pub nodes: Vec<NodeSection>,
    /// Leaves without a center (no samples); they contributed zero.
    pub degenerate_leaves: Vec<usize>,
}

impl SectionValue {
    /// `(Δv, Δφ_1, …, Δφ_k)` node after node: length `(k+1)(2^i − 1)`.
    pub fn packed(&self) -> Vec<f64> {
        self.nodes
            .iter()
            .flat_map(|s| std::iter::once(s.dv).chain(s.dphi.iter().copied()))
            .collect()
    }

    pub fn residual(&self) -> f64 {
        residual(self)
    }
}

/// Euclidean norm of the packed section vector.
pub fn residual(s: &SectionValue) -> f64 {
    s.packed().iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// `F` from precomputed per-leaf statistics.
pub fn section_from_stats(p: &OrientedPartition, f: &dyn SphereMap, leaves: &[LeafStats]) -> Result<SectionValue> {
    check_map(p, f)?;
    let agg = node_aggregates(p, |x, out| f.eval(x, out), f.k(), leaves)?;
    let nodes = agg
        .nodes
        .into_iter()
        .map(|a| NodeSection {
            node: a.node,
            dv: a.v_plus - a.v_minus,
            dphi: a.phi_plus.iter().zip(&a.phi_minus).map(|(x, y)| x - y).collect(),
        })
        .collect();
    Ok(SectionValue { nodes, degenerate_leaves: agg.degenerate_leaves })
}

/// `F(p)` with cell volumes and centers estimated from `samples` uniform points.
pub fn section_f(
    p: &OrientedPartition,
    f: &dyn SphereMap,
    center: CenterMap,
    samples: usize,
    stream: RngStream,
) -> Result<SectionValue> {
    check_map(p, f)?;
    section_from_stats(p, f, &leaf_statistics(p, samples, stream, center))
}

fn check_map(p: &OrientedPartition, f: &dyn SphereMap) -> Result<()> {
    if f.n() != p.dim() {
        return Err(Error::DimMismatch { expected: p.dim(), found: f.n() });
    }
    Ok(())
}

/// Volumes, center images and section of a partition, as measured once.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartitionReport {
    pub residual: f64,
    pub volumes: Vec<f64>,
    /// `f(center)` per leaf; `None` for empty cells.
    pub center_images: Vec<Option<Vec<f64>>>,
    /// `max_l |vol_l − 2^{−i}|`.
    pub volume_gap: f64,
    /// Largest distance between two center images.
    pub image_diameter: f64,
    pub samples: usize,
}

impl PartitionReport {
    fn new(p: &OrientedPartition, f: &dyn SphereMap, leaves: &[LeafStats], samples: usize) -> Result<Self> {
        let section = section_from_stats(p, f, leaves)?;
        let target = 1.0 / leaves.len() as f64;
        let volumes: Vec<f64> = leaves.iter().map(|l| l.volume).collect();
        let center_images: Vec<Option<Vec<f64>>> = leaves
            .iter()
            .map(|l| {
                l.center.as_ref().map(|c| {
                    let mut out = vec![0.0; f.k()];
                    f.eval(c.coords(), &mut out);
                    out
                })
            })
            .collect();
        let mut diameter: f64 = 0.0;
        for (a, ia) in center_images.iter().enumerate() {
            for ib in &center_images[a + 1..] {
                diameter = match (ia, ib) {
                    (Some(x), Some(y)) => {
                        diameter.max(x.iter().zip(y).map(|(s, t)| (s - t) * (s - t)).sum::<f64>().sqrt())
                    }
                    _ => f64::INFINITY,
                };
            }
        }
        Ok(Self {
            residual: section.residual(),
            volume_gap: volumes.iter().map(|v| (v - target).abs()).fold(0.0, f64::max),
            volumes,
            center_images,
            image_diameter: diameter,
            samples,
        })
    }

    /// The success contract: residual, volume gap and image spread all within `tol`.
    pub fn meets(&self, tol: f64) -> bool {
        self.residual <= tol && self.volume_gap <= tol && self.image_diameter <= tol
    }
}

/// Independent re-measurement of a partition with fresh samples.
pub fn verify(
    p: &OrientedPartition,
    f: &dyn SphereMap,
    center: CenterMap,
    samples: usize,
    stream: RngStream,
) -> Result<PartitionReport> {
    check_map(p, f)?;
    PartitionReport::new(p, f, &leaf_statistics(p, samples, stream, center), samples)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    pub restarts: usize,
    /// Simplex iterations per escalation stage.
    pub max_iterations: usize,
    pub tolerance: f64,
    /// Cloud size for the coarse stage.
    pub coarse_samples: usize,
    /// Cloud size for the fine stage, entered once the residual is below `10·tolerance`.
    pub fine_samples: usize,
    /// Fresh samples for the independent re-verification of a candidate,
    /// which must meet the contract at twice the tolerance.
    pub verify_samples: usize,
    pub seed: u64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            restarts: 8,
            max_iterations: 1000,
            tolerance: 2e-3,
            coarse_samples: 10_000,
            fine_samples: 4_000_000,
            verify_samples: 40_000_000,
            seed: 0,
        }
    }
}

impl SolveOptions {
    fn validate(&self) -> Result<()> {
        if !(self.tolerance > 0.0) {
            return Err(invalid("tolerance must be positive"));
        }
        if self.restarts == 0 || self.coarse_samples < 2 || self.fine_samples < 2 || self.verify_samples < 2 {
            return Err(invalid("restarts and sample budgets must be positive"));
        }
        Ok(())
    }
}

/// One line of the solve trace.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub iteration: usize,
    pub stage: String,
    pub residual: f64,
    pub volumes: Vec<f64>,
    pub center_images: Vec<Option<Vec<f64>>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveOutcome {
    pub partition: OrientedPartition,
    /// Residual on the fine common-random-number cloud.
    pub residual: f64,
    pub report: PartitionReport,
    /// Re-measurement with `verify_samples` fresh points.
    pub verification: Option<PartitionReport>,
    pub restart: usize,
    pub evaluations: usize,
    pub trace: Vec<TraceEntry>,
    /// Per-cell pancake widths, filled by [`constrained_solve`].
    pub pancake_widths: Vec<f64>,
}

impl SolveOutcome {
    /// Trace as JSON lines.
    pub fn trace_jsonl(&self) -> String {
        let mut s = String::new();
        for t in &self.trace {
            s.push_str(&serde_json::to_string(t).expect("trace serializes"));
            s.push('\n');
        }
        s
    }
}

/// Outcome of a derivative-free minimization.
#[derive(Clone, Debug, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub evaluations: usize,
}

/// Nelder–Mead simplex descent from `x0` with initial edge `step`.
///
/// Stops after `max_iter` iterations, when `done(best)` holds, or when the
/// simplex has collapsed. `on_iter(iteration, best_x, best_value)` is called
/// whenever the best vertex improves.
pub fn nelder_mead<F, D, C>(f: F, x0: &[f64], step: f64, max_iter: usize, done: D, mut on_iter: C) -> Minimum
where
    F: Fn(&[f64]) -> f64,
    D: Fn(f64) -> bool,
    C: FnMut(usize, &[f64], f64),
{
    let d = x0.len();
    let mut evals = 0usize;
    let mut eval = |x: &[f64]| {
        evals += 1;
        f(x)
    };
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(d + 1);
    simplex.push((x0.to_vec(), eval(x0)));
    for j in 0..d {
        let mut x = x0.to_vec();
        x[j] += step;
        let v = eval(&x);
        simplex.push((x, v));
    }
    let order = |s: &mut Vec<(Vec<f64>, f64)>| s.sort_by(|a, b| a.1.total_cmp(&b.1));
    order(&mut simplex);
    let mut best = simplex[0].1;
    on_iter(0, &simplex[0].0, best);
    let mut iterations = 0;
    while iterations < max_iter && !done(simplex[0].1) {
        iterations += 1;
        let spread = simplex.iter().map(|(x, _)| {
            x.iter().zip(&simplex[0].0).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
        });
        if spread.fold(0.0, f64::max) < 1e-10 {
            break;
        }
        let mut centroid = vec![0.0; d];
        for (x, _) in &simplex[..d] {
            centroid.iter_mut().zip(x).for_each(|(c, v)| *c += v / d as f64);
        }
        let along = |t: f64, worst: &[f64]| -> Vec<f64> {
            centroid.iter().zip(worst).map(|(c, w)| c + t * (w - c)).collect()
        };
        let worst = simplex[d].0.clone();
        let xr = along(-1.0, &worst);
        let fr = eval(&xr);
        if fr < simplex[0].1 {
            let xe = along(-2.0, &worst);
            let fe = eval(&xe);
            simplex[d] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < simplex[d - 1].1 {
            simplex[d] = (xr, fr);
        } else {
            let (xc, fc) = if fr < simplex[d].1 {
                let x = along(-0.5, &worst);
                let v = eval(&x);
                (x, v)
            } else {
                let x = along(0.5, &worst);
                let v = eval(&x);
                (x, v)
            };
            if fc < simplex[d].1.min(fr) {
                simplex[d] = (xc, fc);
            } else {
                let x_best = simplex[0].0.clone();
                for (x, v) in simplex[1..].iter_mut() {
                    x.iter_mut().zip(&x_best).for_each(|(a, b)| *a = b + 0.5 * (*a - b));
                    *v = eval(x);
                }
            }
        }
        order(&mut simplex);
        if simplex[0].1 < best {
            best = simplex[0].1;
            on_iter(iterations, &simplex[0].0, best);
        }
    }
    let (x, value) = simplex.swap_remove(0);
    Minimum { x, value, iterations, evaluations: evals }
}

/// How solver parameters map to cut normals.
enum Param {
    /// Raw ambient vectors in `R^{n+1}`, normalized.
    Free { n1: usize },
    /// Per-node coordinates in an orthonormal basis of a `(k+2)`-dimensional subspace.
    Subspace { bases: Vec<Vec<Vec<f64>>>, n1: usize },
}

impl Param {
    fn block(&self, node: usize) -> usize {
        match self {
            Param::Free { n1 } => *n1,
            Param::Subspace { bases, .. } => bases[node].len(),
        }
    }

    fn len(&self, nodes: usize) -> usize {
        (0..nodes).map(|m| self.block(m)).sum()
    }

    /// Normals and the penalty `Σ (|x_m| − 1)²` keeping parameters near the sphere.
    fn normals(&self, x: &[f64], nodes: usize) -> Option<(Vec<UnitVector>, f64)> {
        let mut out = Vec::with_capacity(nodes);
        let mut penalty = 0.0;
        let mut at = 0;
        for m in 0..nodes {
            let b = self.block(m);
            let c = &x[at..at + b];
            at += b;
            let r = dot(c, c).sqrt();
            penalty += (r - 1.0) * (r - 1.0);
            let v = match self {
                Param::Free { .. } => c.to_vec(),
                Param::Subspace { bases, n1 } => {
                    let mut v = vec![0.0; *n1];
                    for (coef, e) in c.iter().zip(&bases[m]) {
                        v.iter_mut().zip(e).for_each(|(a, b)| *a += coef * b);
                    }
                    v
                }
            };
            out.push(normalize(&v).ok()?);
        }
        Some((out, penalty))
    }

    fn random_start(&self, nodes: usize, stream: RngStream) -> Vec<f64> {
        let mut rng = stream.rng();
        let mut x = Vec::with_capacity(self.len(nodes));
        for m in 0..nodes {
            let mut c = vec![0.0; self.block(m)];
            fill_uniform(&mut rng, &mut c);
            x.extend(c);
        }
        x
    }
}

struct Problem<'a> {
    depth: usize,
    f: &'a dyn SphereMap,
    center: CenterMap,
    param: Param,
    opts: &'a SolveOptions,
}

struct StageResult {
    x: Vec<f64>,
    value: f64,
    evaluations: usize,
}

impl Problem<'_> {
    fn nodes(&self) -> usize {
        (1usize << self.depth) - 1
    }

    fn partition(&self, x: &[f64]) -> Option<(OrientedPartition, f64)> {
        let (normals, penalty) = self.param.normals(x, self.nodes())?;
        Some((OrientedPartition::new(normals).ok()?, penalty))
    }

    fn objective(&self, cloud: &SampleCloud, x: &[f64]) -> f64 {
        let Some((p, penalty)) = self.partition(x) else {
            return f64::INFINITY;
        };
        let leaves = cloud.leaf_statistics(&p, self.center);
        match section_from_stats(&p, self.f, &leaves) {
            Ok(s) => s.residual() + penalty,
            Err(_) => f64::INFINITY,
        }
    }

    fn descend(
        &self,
        cloud: &SampleCloud,
        x0: &[f64],
        step: f64,
        stop_below: f64,
        label: &str,
        trace: Option<&mut Vec<TraceEntry>>,
    ) -> StageResult {
        let mut entries = Vec::new();
        let record = trace.is_some();
        let m = nelder_mead(
            |x| self.objective(cloud, x),
            x0,
            step,
            self.opts.max_iterations,
            |v| v < stop_below,
            |it, x, _| {
                if record {
                    if let Some((p, _)) = self.partition(x) {
                        let leaves = cloud.leaf_statistics(&p, self.center);
                        if let Ok(r) = PartitionReport::new(&p, self.f, &leaves, cloud.len()) {
                            entries.push(TraceEntry {
                                iteration: it,
                                stage: label.to_string(),
                                residual: r.residual,
                                volumes: r.volumes,
                                center_images: r.center_images,
                            });
                        }
                    }
                }
            },
        );
        if let Some(t) = trace {
            t.extend(entries);
        }
        StageResult { x: m.x, value: m.value, evaluations: m.evaluations }
    }

    fn run(&self) -> Result<SolveOutcome> {
        self.opts.validate()?;
        let root = RngStream::new(self.opts.seed, 0x5e_c710);
        let n = self.f.n();
        let coarse: Vec<StageResult> = (0..self.opts.restarts)
            .into_par_iter()
            .map(|r| {
                let s = root.substream(r as u64);
                let cloud = SampleCloud::antithetic(n, self.opts.coarse_samples, s.substream(0));
                let x0 = self.param.random_start(self.nodes(), s.substream(1));
                self.descend(&cloud, &x0, 0.3, 10.0 * self.opts.tolerance, "coarse", None)
            })
            .collect();
        let fine_cloud = SampleCloud::antithetic(n, self.opts.fine_samples, root.substream(u64::MAX));
        let mut best: Option<SolveOutcome> = None;
        for (r, c) in coarse.iter().enumerate() {
            if !(c.value < 10.0 * self.opts.tolerance) {
                continue;
            }
            let mut trace = Vec::new();
            let fine = self.descend(&fine_cloud, &c.x, 0.02, 0.25 * self.opts.tolerance, "fine", Some(&mut trace));
            let Some((p, _)) = self.partition(&fine.x) else { continue };
            let report = PartitionReport::new(&p, self.f, &fine_cloud.leaf_statistics(&p, self.center), fine_cloud.len())?;
            let mut outcome = SolveOutcome {
                partition: p,
                residual: report.residual,
                report,
                verification: None,
                restart: r,
                evaluations: c.evaluations + fine.evaluations,
                trace,
                pancake_widths: Vec::new(),
            };
            if outcome.report.meets(self.opts.tolerance) {
                let check = verify(
                    &outcome.partition,
                    self.f,
                    self.center,
                    self.opts.verify_samples,
                    root.substream(u64::MAX - 1 - r as u64),
                )?;
                let sound = check.meets(2.0 * self.opts.tolerance);
                outcome.verification = Some(check);
                if sound {
                    return Ok(outcome);
                }
            }
            if best.as_ref().is_none_or(|b| outcome.residual < b.residual) {
                best = Some(outcome);
            }
        }
        let best = match best {
            Some(b) => b,
            None => {
                let (r, c) = coarse
                    .iter()
                    .enumerate()
                    .min_by(|a, b| a.1.value.total_cmp(&b.1.value))
                    .expect("at least one restart");
                let (p, _) = self.partition(&c.x).ok_or_else(|| invalid("solver produced a zero normal"))?;
                let report =
                    PartitionReport::new(&p, self.f, &fine_cloud.leaf_statistics(&p, self.center), fine_cloud.len())?;
                SolveOutcome {
                    partition: p,
                    residual: report.residual,
                    report,
                    verification: None,
                    restart: r,
                    evaluations: c.evaluations,
                    trace: Vec::new(),
                    pancake_widths: Vec::new(),
                }
            }
        };
        Err(Error::NotConverged(Box::new(best)))
    }
}

fn check_depth(depth: usize, f: &dyn SphereMap) -> Result<()> {
    if depth == 0 || depth > MAX_ORBIT_DEPTH {
        return Err(invalid(format!("depth must lie in 1..={MAX_ORBIT_DEPTH}, got {depth}")));
    }
    if f.k() > f.n() {
        return Err(invalid("map target dimension exceeds the sphere dimension"));
    }
    PartitionTree::new(depth).map(|_| ())
}

/// Multistart search for a zero of `F` on depth-`depth` oriented partitions.
pub fn solve(depth: usize, f: &dyn SphereMap, center: CenterMap, opts: &SolveOptions) -> Result<SolveOutcome> {
    check_depth(depth, f)?;
    Problem { depth, f, center, param: Param::Free { n1: f.n() + 1 }, opts }.run()
}

/// A linear subspace of `R^{n+1}` given by an orthonormal basis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Plane {
    pub basis: Vec<Vec<f64>>,
}

impl Plane {
    /// Orthonormalizes `vectors` (Gram–Schmidt); fails if they are dependent.
    pub fn span(vectors: &[Vec<f64>]) -> Result<Plane> {
        let mut basis: Vec<Vec<f64>> = Vec::new();
        for v in vectors {
            let w = reject(v, &basis);
            let r = dot(&w, &w).sqrt();
            if r < 1e-9 {
                return Err(invalid("plane spanning vectors are linearly dependent"));
            }
            basis.push(w.iter().map(|a| a / r).collect());
        }
        Ok(Plane { basis })
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    /// Norm of the orthogonal projection of `x` onto the plane.
    pub fn projection_norm(&self, x: &[f64]) -> f64 {
        self.basis.iter().map(|e| dot(e, x).powi(2)).sum::<f64>().sqrt()
    }

    /// An orthonormal basis of the orthogonal complement in `R^{n1}`.
    pub fn complement(&self, n1: usize) -> Vec<Vec<f64>> {
        let mut all = self.basis.clone();
        let mut out = Vec::new();
        for i in 0..n1 {
            let mut e = vec![0.0; n1];
            e[i] = 1.0;
            let w = reject(&e, &all);
            let r = dot(&w, &w).sqrt();
            if r > 1e-6 {
                let w: Vec<f64> = w.iter().map(|a| a / r).collect();
                all.push(w.clone());
                out.push(w);
            }
        }
        out
    }
}

fn reject(v: &[f64], basis: &[Vec<f64>]) -> Vec<f64> {
    let mut w = v.to_vec();
    // Two passes keep the result orthogonal to working precision.
    for _ in 0..2 {
        for e in basis {
            let c = dot(&w, e);
            w.iter_mut().zip(e).for_each(|(a, b)| *a -= c * b);
        }
    }
    w
}

/// Like [`solve`], but every cut at tree level `ℓ` must contain the plane
/// `planes[ℓ mod N]` (its normal lies in the `(k+2)`-dimensional complement,
/// a great `S^{k+1}` of directions). Successful and failed outcomes both
/// carry per-cell pancake widths measured with `opts.coarse_samples` points.
pub fn constrained_solve(
    depth: usize,
    f: &dyn SphereMap,
    center: CenterMap,
    planes: &[Plane],
    opts: &SolveOptions,
) -> Result<SolveOutcome> {
    check_depth(depth, f)?;
    let (n1, k) = (f.n() + 1, f.k());
    if planes.is_empty() {
        return Err(invalid("at least one plane is required"));
    }
    let mut level_bases = Vec::with_capacity(planes.len());
    for pl in planes {
        if pl.dim() + k + 2 != n1 || pl.basis.iter().any(|e| e.len() != n1) {
            return Err(invalid(format!("planes must have dimension n−k−1 = {} in R^{n1}", n1 as isize - k as isize - 2)));
        }
        level_bases.push(pl.complement(n1));
    }
    let nodes = (1usize << depth) - 1;
    let bases = (1..=nodes).map(|m| level_bases[PartitionTree::level(m) % planes.len()].clone()).collect();
    let result = Problem { depth, f, center, param: Param::Subspace { bases, n1 }, opts }.run();
    let widths = |o: &OrientedPartition| -> Result<Vec<f64>> {
        let stream = RngStream::new(opts.seed, 0x9a_7cae);
        (0..o.tree().leaf_count())
            .map(|leaf| {
                let cell = cell_constraints(o, leaf)?;
                pancake_width(&cell, k, opts.coarse_samples, stream.substream(leaf as u64))
            })
            .collect()
    };
    match result {
        Ok(mut o) => {
            o.pancake_widths = widths(&o.partition)?;
            Ok(o)
        }
        Err(Error::NotConverged(mut o)) => {
            o.pancake_widths = widths(&o.partition)?;
            Err(Error::NotConverged(o))
        }
        Err(e) => Err(e),
    }
}

/// A finite family of `(n−k−1)`-planes whose unit spheres come within
/// `eps` of every one of `test_points` sampled points of `S^n`.
///
/// Planes are added through the first uncovered test point until all are
/// covered.
pub fn grassmann_net(n: usize, k: usize, eps: f64, test_points: usize, stream: RngStream) -> Result<Vec<Plane>> {
    const MAX_PLANES: usize = 1_000_000;
    if n < k + 2 {
        return Err(invalid(format!("net planes need n − k − 1 ≥ 1, got n={n}, k={k}")));
    }
    if !(eps > 0.0) {
        return Err(invalid("net radius must be positive"));
    }
    let (n1, d) = (n + 1, n - k - 1);
    let mut rng = stream.rng();
    let mut tests = vec![0.0; test_points * n1];
    for x in tests.chunks_exact_mut(n1) {
        fill_uniform(&mut rng, x);
    }
    let threshold = eps.min(std::f64::consts::FRAC_PI_2).cos();
    let covered_by = |pl: &Plane, x: &[f64]| {
        if eps >= std::f64::consts::FRAC_PI_2 {
            pl.projection_norm(x) > 0.0
        } else {
            pl.projection_norm(x) > threshold
        }
    };
    let mut covered = vec![false; test_points];
    let mut planes = Vec::new();
    let mut cursor = 0;
    while let Some(i) = (cursor..test_points).find(|&i| !covered[i]) {
        cursor = i;
        if planes.len() == MAX_PLANES {
            return Err(Error::BudgetExceeded(MAX_PLANES));
        }
        let plane = loop {
            let mut vecs = vec![tests[i * n1..(i + 1) * n1].to_vec()];
            for _ in 1..d {
                vecs.push((0..n1).map(|_| rng.sample::<f64, _>(StandardNormal)).collect());
            }
            if let Ok(p) = Plane::span(&vecs) {
                break p;
            }
        };
        for (j, x) in tests.chunks_exact(n1).enumerate() {
            if !covered[j] && covered_by(&plane, x) {
                covered[j] = true;
            }
        }
        planes.push(plane);
    }
    Ok(planes)
}

/// Estimated `ε` for which the cell is a `(k, ε)`-pancake: the largest
/// distance from sample points to the great `k`-sphere spanned by their top
/// `k+1` principal directions.
pub fn pancake_width(cell: &ConvexCell, k: usize, samples: usize, stream: RngStream) -> Result<f64> {
    let pts = cell.sample(samples, 64 * samples.max(1), stream);
    if pts.is_empty() {
        return Err(Error::EmptyCell);
    }
    pancake_width_points(&pts, k)
}

/// [`pancake_width`] for an explicit point set.
pub fn pancake_width_points(points: &[Vec<f64>], k: usize) -> Result<f64> {
    let n1 = points.first().ok_or(Error::EmptyCell)?.len();
    if k + 1 > n1 {
        return Err(invalid("pancake dimension exceeds the ambient dimension"));
    }
    let mut m = DMatrix::<f64>::zeros(n1, n1);
    for x in points {
        for a in 0..n1 {
            for b in a..n1 {
                m[(a, b)] += x[a] * x[b];
            }
        }
    }
    for a in 0..n1 {
        for b in 0..a {
            m[(a, b)] = m[(b, a)];
        }
    }
    let eig = SymmetricEigen::new(m);
    let mut idx: Vec<usize> = (0..n1).collect();
    idx.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let top: Vec<Vec<f64>> = idx[..k + 1].iter().map(|&j| eig.eigenvectors.column(j).iter().copied().collect()).collect();
    let plane = Plane { basis: top };
    Ok(points
        .iter()
        .map(|x| (plane.projection_norm(x) / dot(x, x).sqrt()).min(1.0).acos())
        .fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::maps::{FnMap, MapSpec};
    use crate::partition::{apply_automorphism, TreeAutomorphism};
    use proptest::prelude::*;

    fn x3() -> crate::maps::BuiltMap {
        MapSpec::projection(2, 1).build().unwrap()
    }

    fn part(normals: &[[f64; 3]]) -> OrientedPartition {
        OrientedPartition::new(normals.iter().map(|v| normalize(v).unwrap()).collect()).unwrap()
    }

    #[test]
    fn equatorial_cut_is_a_zero() {
        let p = part(&[[1.0, 0.0, 0.0]]);
        let s = section_f(&p, &x3(), CenterMap::Centroid, 400_000, RngStream::new(1, 0)).unwrap();
        assert_eq!(s.packed().len(), 2);
        assert!(s.residual() < 1e-2, "{}", s.residual());
    }

    #[test]
    fn polar_cut_separates_the_images() {
        let p = part(&[[0.0, 0.0, 1.0]]);
        let s = section_f(&p, &x3(), CenterMap::Centroid, 400_000, RngStream::new(2, 0)).unwrap();
        // Hemisphere centroids are the poles, so Δφ = ½·1 − ½·(−1).
        assert!(s.nodes[0].dv.abs() < 5e-3);
        assert!((s.nodes[0].dphi[0] - 1.0).abs() < 5e-3);
        assert!((s.residual() - 1.0).abs() < 5e-3);
    }

    #[test]
    fn constant_map_sees_only_volumes() {
        let c = MapSpec::parse("const:2.5", 2, 1).unwrap().build().unwrap();
        let p = part(&[[0.3, 0.2, 1.0], [1.0, 0.1, 0.0], [0.0, 1.0, 0.4]]);
        let s = section_f(&p, &c, CenterMap::Centroid, 100_000, RngStream::new(3, 0)).unwrap();
        for node in &s.nodes {
            assert!((node.dphi[0] - 2.5 * node.dv).abs() < 1e-12);
        }
    }

    #[test]
    fn residual_basics() {
        let z = SectionValue { nodes: vec![NodeSection { node: 1, dv: 0.0, dphi: vec![0.0] }], degenerate_leaves: vec![] };
        assert_eq!(residual(&z), 0.0);
        let s = SectionValue {
            nodes: vec![
                NodeSection { node: 1, dv: 0.3, dphi: vec![-0.4] },
                NodeSection { node: 2, dv: 1.2, dphi: vec![0.0] },
            ],
            degenerate_leaves: vec![],
        };
        assert!((residual(&s) - 1.3).abs() < 1e-15);
        let t = 2.5;
        let scaled = SectionValue {
            nodes: s.nodes.iter().map(|n| NodeSection { node: n.node, dv: t * n.dv, dphi: n.dphi.iter().map(|v| t * v).collect() }).collect(),
            degenerate_leaves: vec![],
        };
        assert!((residual(&scaled) - t * residual(&s)).abs() < 1e-14);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn section_is_equivariant(seed in 0u64..1000, mask in 0u64..128) {
            let f = MapSpec::perturbed(2, 1, 0.2).build().unwrap();
            let mut rng = RngStream::new(seed, 9).rng();
            let normals = (0..7).map(|_| crate::sphere::sample_uniform(&mut rng, 2)).collect();
            let p = OrientedPartition::new(normals).unwrap();
            let g = TreeAutomorphism::from_mask(3, mask);
            let q = apply_automorphism(&g, &p).unwrap();
            let stream = RngStream::new(seed, 1);
            let a = section_f(&p, &f, CenterMap::Centroid, 20_000, stream).unwrap().residual();
            let b = section_f(&q, &f, CenterMap::Centroid, 20_000, stream).unwrap().residual();
            prop_assert!((a - b).abs() < 1e-9, "{} vs {}", a, b);
        }
    }

    #[test]
    fn nelder_mead_minimizes_a_quadratic() {
        let m = nelder_mead(
            |x| (x[0] - 1.0).powi(2) + 10.0 * (x[1] + 2.0).powi(2) + x[2] * x[2],
            &[0.0, 0.0, 0.0],
            0.5,
            5000,
            |v| v < 1e-14,
            |_, _, _| {},
        );
        assert!(m.value < 1e-12);
        assert!((m.x[0] - 1.0).abs() < 1e-5 && (m.x[1] + 2.0).abs() < 1e-5);
    }

    #[test]
    fn constant_map_solves_immediately() {
        let c = MapSpec::parse("const:1", 2, 1).unwrap().build().unwrap();
        let opts = SolveOptions { tolerance: 1e-3, verify_samples: 1_000_000, ..Default::default() };
        let o = solve(1, &c, CenterMap::Centroid, &opts).unwrap();
        // Antipodal clouds split exactly in half under any single cut.
        assert!(o.residual < 1e-3);
        assert!(o.verification.unwrap().residual < 2e-3);
    }

    #[test]
    fn one_cut_for_a_coordinate_is_equatorial() {
        let opts = SolveOptions { tolerance: 1e-3, seed: 5, ..Default::default() };
        let o = solve(1, &x3(), CenterMap::Centroid, &opts).unwrap();
        assert!(o.residual < 1e-3);
        assert!(o.partition.normal(1).coords()[2].abs() < 1e-2, "{:?}", o.partition.normal(1));
        assert!(!o.trace.is_empty());
        assert!(o.trace_jsonl().lines().all(|l| serde_json::from_str::<TraceEntry>(l).is_ok()));
    }

    #[test]
    fn depth_is_capped() {
        let opts = SolveOptions::default();
        assert!(matches!(solve(5, &x3(), CenterMap::Centroid, &opts), Err(Error::InvalidArgument(_))));
        assert!(matches!(solve(0, &x3(), CenterMap::Centroid, &opts), Err(Error::InvalidArgument(_))));
        let bad = SolveOptions { tolerance: 0.0, ..Default::default() };
        assert!(solve(1, &x3(), CenterMap::Centroid, &bad).is_err());
    }

    #[test]
    fn single_plane_restricts_the_normal() {
        // n = 3, k = 1: one line L; the normal must be orthogonal to it.
        let f = MapSpec::projection(3, 1).build().unwrap();
        let line = Plane::span(&[vec![1.0, 1.0, 0.0, 0.0]]).unwrap();
        let opts = SolveOptions { tolerance: 2e-3, seed: 3, ..Default::default() };
        let o = constrained_solve(1, &f, CenterMap::Centroid, std::slice::from_ref(&line), &opts).unwrap();
        assert!(line.projection_norm(o.partition.normal(1).coords()) < 1e-12);
        assert_eq!(o.pancake_widths.len(), 2);
    }

    #[test]
    fn complement_is_orthonormal() {
        let pl = Plane::span(&[vec![1.0, 2.0, 0.0, 1.0], vec![0.0, 1.0, 1.0, 0.0]]).unwrap();
        let c = pl.complement(4);
        assert_eq!(c.len(), 2);
        for a in pl.basis.iter().chain(&c) {
            for b in pl.basis.iter().chain(&c) {
                let d = dot(a, b);
                assert!(if std::ptr::eq(a, b) { (d - 1.0).abs() < 1e-12 } else { d.abs() < 1e-12 });
            }
        }
    }

    #[test]
    fn net_covers_its_test_points() {
        let stream = RngStream::new(11, 0);
        let net = grassmann_net(3, 1, 0.5, 10_000, stream).unwrap();
        assert!(net.len() > 1 && net.len() < 10_000);
        // Fresh points: almost all covered.
        let mut rng = RngStream::new(12, 0).rng();
        let mut miss = 0;
        for _ in 0..2000 {
            let x = crate::sphere::sample_uniform(&mut rng, 3);
            if !net.iter().any(|p| p.projection_norm(x.coords()) > 0.5f64.cos()) {
                miss += 1;
            }
        }
        assert!(miss < 40, "{miss} of 2000 fresh points uncovered");
        let coarse = grassmann_net(3, 1, std::f64::consts::FRAC_PI_2, 10_000, stream).unwrap();
        assert!(coarse.len() <= 2);
        assert!(grassmann_net(3, 2, 0.5, 100, stream).is_err());
    }

    #[test]
    fn pancake_of_an_arc_is_flat() {
        let pts: Vec<Vec<f64>> = (0..200)
            .map(|j| {
                let t = j as f64 * 0.01;
                vec![t.cos(), t.sin(), 0.0]
            })
            .collect();
        assert!(pancake_width_points(&pts, 1).unwrap() < 1e-6);
    }

    #[test]
    fn pancake_of_a_lune_matches_its_half_width() {
        let delta = 0.2f64;
        let cell = ConvexCell::new(vec![
            (normalize(&[delta.sin(), delta.cos(), 0.0]).unwrap(), 1),
            (normalize(&[delta.sin(), -delta.cos(), 0.0]).unwrap(), 1),
        ])
        .unwrap();
        let w = pancake_width(&cell, 1, 50_000, RngStream::new(4, 0)).unwrap();
        assert!((w - delta).abs() < 0.1 * delta, "{w}");
    }

    #[test]
    fn pancake_of_a_hemisphere_is_positive() {
        let cell = ConvexCell::new(vec![(UnitVector::basis(2, 2), 1)]).unwrap();
        let w = pancake_width(&cell, 1, 20_000, RngStream::new(5, 0)).unwrap();
        // The hemisphere is π/2 away from flat at its pole direction.
        assert!(w > 1.0 && w <= std::f64::consts::FRAC_PI_2 + 1e-12, "{w}");
        let empty = ConvexCell::new(vec![(UnitVector::basis(2, 0), 1), (UnitVector::basis(2, 0), -1)]).unwrap();
        assert!(matches!(pancake_width(&empty, 1, 100, RngStream::new(5, 1)), Err(Error::EmptyCell)));
    }

    #[test]
    fn pancake_width_shrinks_under_refinement() {
        let mut rng = RngStream::new(21, 0).rng();
        for trial in 0..5 {
            let mut cell = ConvexCell::new(vec![(crate::sphere::sample_uniform(&mut rng, 2), 1)]).unwrap();
            let mut prev = pancake_width(&cell, 1, 20_000, RngStream::new(22, trial)).unwrap();
            for step in 0..3 {
                let pts = cell.sample(1, 1 << 20, RngStream::new(24, trial * 10 + step));
                let Some(c) = pts.into_iter().next() else { break };
                // A cut through a point of the cell keeps it nonempty.
                let u = crate::sphere::sample_uniform(&mut rng, 2);
                let w: Vec<f64> = u.coords().iter().zip(&c).map(|(a, b)| a - dot(u.coords(), &c) * b).collect();
                cell = cell.refine(normalize(&w).unwrap(), 1).unwrap();
                let next = pancake_width(&cell, 1, 20_000, RngStream::new(23, trial * 10 + step)).unwrap();
                assert!(next <= prev + 0.02, "trial {trial}: {next} > {prev}");
                prev = next;
            }
        }
    }

    #[test]
    fn fn_map_adapter() {
        let f = FnMap { n: 2, k: 1, f: |x: &[f64], o: &mut [f64]| o[0] = x[2] };
        let p = part(&[[0.0, 0.0, 1.0]]);
        let s = section_f(&p, &f, CenterMap::Centroid, 100_000, RngStream::new(2, 0)).unwrap();
        assert!((s.residual() - 1.0).abs() < 1e-2);
    }
}
