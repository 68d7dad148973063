//! Seeded property suites over random instances, one [`CheckRecord`] per property.

use std::cmp::Ordering;
use std::f64::consts::{FRAC_PI_2, PI};

use rand::Rng;
use serde_json::json;

use crate::concavity::{
    cos_comparison, grid_argmax, is_sin_concave, random_density, random_max_at_zero, ratio_bound, unique_max_check,
    Density1D,
};
use crate::error::Result;
use crate::measure::{
    ball_concavity_check, ball_lower_bound_check, ball_mass_upper_check, bishop_gromov_check,
    density_max_bound_check, desintegration_check, random_arc_measure, random_polygon_measure, CheckRecord,
    ConcaveDensity, KDimMeasure, TestSet,
};
use crate::partition::{
    apply_automorphism, canonical_form, cell_constraints, cell_volume_mc, orbit, ConvexCell, OrientedPartition,
    TreeAutomorphism,
};
use crate::rng::RngStream;
use crate::sphere::{normalize, sample_uniform, UnitVector};

/// Suites exposed by name.
pub const SUITES: [&str; 3] = ["concavity", "measure", "partition"];

pub fn run_suite(name: &str, seed: u64) -> Option<Result<Vec<CheckRecord>>> {
    match name {
        "concavity" => Some(concavity_suite(seed)),
        "measure" => Some(measure_suite(seed)),
        "partition" => Some(partition_suite(seed)),
        _ => None,
    }
}

fn record(check: &str, params: serde_json::Value, measured: f64, bound: f64, pass: bool, seed: u64) -> CheckRecord {
    CheckRecord { check: check.into(), params, measured, bound, sigma: 0.0, pass, seed }
}

/// Folds many per-instance records into one, keeping the worst margin.
fn summarize(check: &str, seed: u64, records: &[CheckRecord], upper: bool) -> CheckRecord {
    let failures = records.iter().filter(|r| !r.pass).count();
    let margin = |r: &CheckRecord| if upper { r.bound - r.measured } else { r.measured - r.bound };
    let worst = records.iter().min_by(|a, b| margin(a).total_cmp(&margin(b)));
    let (measured, bound, sigma) = worst.map_or((0.0, 0.0, 0.0), |w| (w.measured, w.bound, w.sigma));
    CheckRecord {
        check: check.into(),
        params: json!({"instances": records.len(), "failures": failures, "worst": worst.map(|w| &w.params)}),
        measured,
        bound,
        sigma,
        pass: failures == 0 && !records.is_empty(),
        seed,
    }
}

pub fn ratio_bound_records(seed: u64, instances: usize) -> Result<Vec<CheckRecord>> {
    let mut rng = RngStream::new(seed, 0x1b).rng();
    (0..instances)
        .map(|_| {
            let k = rng.random_range(1..=5) as f64;
            let tau = rng.random_range(0.2..=FRAC_PI_2);
            let alpha = rng.random_range(0.0..=4.0);
            let eps = rng.random_range(0.02..=FRAC_PI_2);
            let d = random_max_at_zero(&mut rng, k, tau);
            let r = ratio_bound(&d, alpha, eps, 1e-12)?;
            Ok(record(
                "ratio_bound",
                json!({"k": k, "alpha": alpha, "eps": eps, "tau": tau, "lines": d.lines()}),
                r.lhs,
                r.rhs,
                r.holds(),
                seed,
            ))
        })
        .collect()
}

pub fn cos_equality_records(seed: u64) -> Result<Vec<CheckRecord>> {
    let mut out = Vec::new();
    for k in 1..=5 {
        let d = Density1D::cos_power(k as f64, (0.0, FRAC_PI_2))?;
        for alpha in [0.0, 1.0, 2.5, 4.0] {
            for eps in [0.1, 0.5, 1.0, 1.5] {
                let r = ratio_bound(&d, alpha, eps, 1e-12)?;
                out.push(record(
                    "ratio_bound_equality",
                    json!({"k": k, "alpha": alpha, "eps": eps}),
                    (r.lhs - r.rhs).abs(),
                    1e-10,
                    (r.lhs - r.rhs).abs() <= 1e-10,
                    seed,
                ));
            }
        }
    }
    Ok(out)
}

/// Lemma imp (ratio bound and its equality case), Lemma compa, Lemma minima
/// and sin-concavity of the generators.
pub fn concavity_suite(seed: u64) -> Result<Vec<CheckRecord>> {
    let mut out = vec![
        summarize("ratio_bound", seed, &ratio_bound_records(seed, 500)?, false),
        summarize("ratio_bound_equality", seed, &cos_equality_records(seed)?, true),
    ];
    let mut rng = RngStream::new(seed, 0x2c).rng();
    let mut comps = Vec::new();
    let mut maxima = Vec::new();
    let mut concave = Vec::new();
    for _ in 0..200 {
        let k = rng.random_range(1..=5) as f64;
        let tau = rng.random_range(0.3..=FRAC_PI_2);
        let d = random_max_at_zero(&mut rng, k, tau);
        let eps = rng.random_range(0.05..tau - 0.01);
        let c = cos_comparison(&d, eps, tau)?;
        comps.push(record("cos_comparison", json!({"k": k, "eps": eps, "tau": tau}), c.c, 0.0, c.crossing_verified, seed));
        let g = random_density(&mut rng, k);
        let unique = unique_max_check(&g, 1e-3)?;
        let at = grid_argmax(&g, 1e-3);
        maxima.push(record("unique_max", json!({"k": k, "domain": g.domain()}), at, 0.0, unique, seed));
        let s = g.sample_step(1e-3);
        let kth = s.root(k);
        concave.push(record("sin_concave", json!({"k": k}), 0.0, 0.0, is_sin_concave(&kth.values, kth.step), seed));
    }
    out.push(summarize("cos_comparison", seed, &comps, false));
    out.push(summarize("unique_max", seed, &maxima, false));
    out.push(summarize("sin_concave", seed, &concave, false));
    Ok(out)
}

/// Random arc (k = 1) or polygon (k = 2) measure in `S^n`, `n ∈ 2..=4`.
fn random_kdim<R: Rng + ?Sized>(rng: &mut R) -> KDimMeasure {
    let n = rng.random_range(2..=4);
    if n >= 3 && rng.random_bool(0.5) {
        random_polygon_measure(rng, n)
    } else {
        random_arc_measure(rng, n)
    }
}

pub fn ball_lower_bound_records(seed: u64, instances: usize) -> Result<Vec<CheckRecord>> {
    let mut rng = RngStream::new(seed, 0x3d).rng();
    (0..instances)
        .map(|_| {
            let mu = random_kdim(&mut rng);
            let eps = rng.random_range(0.05..1.5);
            ball_lower_bound_check(&mu, eps)
        })
        .collect()
}

pub fn density_bound_records(seed: u64, instances: usize) -> Result<Vec<CheckRecord>> {
    let mut rng = RngStream::new(seed, 0x4e).rng();
    (0..instances).map(|_| density_max_bound_check(&random_kdim(&mut rng))).collect()
}

pub fn ball_mass_upper_records(seed: u64, instances: usize) -> Result<Vec<CheckRecord>> {
    let mut rng = RngStream::new(seed, 0x5f).rng();
    (0..instances)
        .map(|_| {
            let mu = random_kdim(&mut rng);
            let rho = mu.diameter() * rng.random_range(0.1..=1.0);
            let r = rho / 8.0 * rng.random_range(0.05..=1.0);
            let x = if rng.random_bool(0.5) {
                mu.sample_support(&mut rng, 1).remove(0)
            } else {
                sample_uniform(&mut rng, mu.ambient_dim()).into()
            };
            ball_mass_upper_check(&mu, rho, &x, r)
        })
        .collect()
}

/// A nonempty random cell of a random partition, with a point inside it.
fn random_cell<R: Rng + ?Sized>(rng: &mut R, stream: RngStream) -> Result<(ConvexCell, UnitVector)> {
    loop {
        let n = rng.random_range(2..=3);
        let depth = rng.random_range(1..=3);
        let p = OrientedPartition::new((0..(1 << depth) - 1).map(|_| sample_uniform(rng, n)).collect())?;
        let cell = cell_constraints(&p, rng.random_range(0..1 << depth))?;
        if let Some(x) = cell.sample(1, 1 << 18, stream.substream(rng.random())).into_iter().next() {
            return Ok((cell, normalize(&x)?));
        }
    }
}

pub fn bishop_gromov_records(seed: u64, instances: usize, samples: usize) -> Result<Vec<CheckRecord>> {
    let stream = RngStream::new(seed, 0x60);
    let mut rng = stream.rng();
    (0..instances)
        .map(|j| {
            let (cell, x) = random_cell(&mut rng, stream.substream(1_000_000 + j as u64))?;
            let radii = [0.1, 0.3, 0.7, 1.2, 2.0, PI];
            bishop_gromov_check(&cell, &x, &radii, samples, stream.substream(j as u64))
        })
        .collect()
}

pub fn gpl_records(seed: u64, instances: usize, samples: usize) -> Result<Vec<CheckRecord>> {
    let stream = RngStream::new(seed, 0x71);
    let mut rng = stream.rng();
    let thetas: Vec<f64> = (0..=8).map(|j| j as f64 / 8.0).collect();
    (0..instances)
        .map(|j| {
            let d = rng.random_range(1..=3);
            let m = rng.random_range(0.5..3.0);
            let phi = ConcaveDensity::random(&mut rng, d, m);
            let x = phi.sample_point(&mut rng);
            let y = phi.sample_point(&mut rng);
            let r = rng.random_range(0.05..0.4);
            ball_concavity_check(&phi, &x, &y, r, &thetas, samples, stream.substream(j as u64))
        })
        .collect()
}

pub fn desintegration_records(seed: u64, instances: usize, samples: usize) -> Result<Vec<CheckRecord>> {
    let stream = RngStream::new(seed, 0x82);
    let mut rng = stream.rng();
    (0..instances)
        .map(|j| {
            let n = rng.random_range(2..=3);
            let depth = rng.random_range(1..=3);
            let p = OrientedPartition::new((0..(1 << depth) - 1).map(|_| sample_uniform(&mut rng, n)).collect())?;
            let set = if j % 4 == 3 {
                TestSet::Tube { k: 1, eps: rng.random_range(0.1..1.2) }
            } else {
                TestSet::Cap { center: sample_uniform(&mut rng, n), radius: rng.random_range(0.2..2.5) }
            };
            desintegration_check(&p, &set, samples, stream.substream(j as u64))
        })
        .collect()
}

/// Lemma ne lower bound, density and ball-mass upper bounds, Bishop–Gromov,
/// ball concavity and desintegration.
pub fn measure_suite(seed: u64) -> Result<Vec<CheckRecord>> {
    Ok(vec![
        summarize("ball_lower_bound", seed, &ball_lower_bound_records(seed, 100)?, false),
        summarize("density_max_bound", seed, &density_bound_records(seed, 100)?, true),
        summarize("ball_mass_upper", seed, &ball_mass_upper_records(seed, 100)?, true),
        summarize("bishop_gromov", seed, &bishop_gromov_records(seed, 50, 20_000)?, false),
        summarize("ball_concavity", seed, &gpl_records(seed, 50, 20_000)?, false),
        summarize("desintegration", seed, &desintegration_records(seed, 20, 100_000)?, true),
    ])
}

fn random_partition<R: Rng + ?Sized>(rng: &mut R, depth: usize, n: usize) -> Result<OrientedPartition> {
    OrientedPartition::new((0..(1 << depth) - 1).map(|_| sample_uniform(rng, n)).collect())
}

fn tuple_cmp(a: &[Vec<f64>], b: &[Vec<f64>]) -> Ordering {
    a.iter().flatten().zip(b.iter().flatten()).map(|(u, v)| u.total_cmp(v)).find(|o| o.is_ne()).unwrap_or(Ordering::Equal)
}

/// The eight depth-two tuples obtained from `(x, y, z)` by the tree automorphisms.
pub fn example_orbit_matches(p: &OrientedPartition) -> Result<bool> {
    let (x, y, z) = (p.normal(1).clone(), p.normal(2).clone(), p.normal(3).clone());
    let want = [
        [x.clone(), y.clone(), z.clone()],
        [x.clone(), y.neg(), z.clone()],
        [x.clone(), y.clone(), z.neg()],
        [x.clone(), y.neg(), z.neg()],
        [x.neg(), z.clone(), y.clone()],
        [x.neg(), z.neg(), y.clone()],
        [x.neg(), z.clone(), y.neg()],
        [x.neg(), z.neg(), y.neg()],
    ];
    let mut want: Vec<Vec<Vec<f64>>> =
        want.iter().map(|t| t.iter().map(|v| v.coords().to_vec()).collect()).collect();
    let mut got: Vec<Vec<Vec<f64>>> =
        orbit(p)?.iter().map(|q| q.normals().iter().map(|v| v.coords().to_vec()).collect()).collect();
    want.sort_by(|a, b| tuple_cmp(a, b));
    got.sort_by(|a, b| tuple_cmp(a, b));
    Ok(got == want)
}

/// Orbit sizes, the depth-two example orbit, canonical forms and volume additivity.
pub fn partition_suite(seed: u64) -> Result<Vec<CheckRecord>> {
    let stream = RngStream::new(seed, 0x93);
    let mut rng = stream.rng();
    let mut out = Vec::new();
    for depth in 1..=3 {
        let p = random_partition(&mut rng, depth, 2)?;
        let size = orbit(&p)?.len() as f64;
        let want = TreeAutomorphism::group_order(depth) as f64;
        out.push(record("orbit_size", json!({"depth": depth}), size, want, size == want, seed));
    }
    let p = random_partition(&mut rng, 2, 2)?;
    let ok = example_orbit_matches(&p)?;
    out.push(record("example_orbit", json!({"depth": 2}), ok as u8 as f64, 1.0, ok, seed));

    let mut canon = Vec::new();
    for j in 0..100 {
        let depth = 1 + j % 3;
        let p = random_partition(&mut rng, depth, 2 + j % 2)?;
        let c = canonical_form(&p)?;
        let mask = rng.random_range(0..TreeAutomorphism::group_order(depth) as u64);
        let q = apply_automorphism(&TreeAutomorphism::from_mask(depth, mask), &p)?;
        let same = canonical_form(&q)? == c;
        canon.push(record("canonical_form", json!({"depth": depth}), same as u8 as f64, 1.0, same, seed));
    }
    out.push(summarize("canonical_form", seed, &canon, false));

    let mut additivity = Vec::new();
    for j in 0..20u64 {
        let (cell, _) = random_cell(&mut rng, stream.substream(500 + j))?;
        let v = sample_uniform(&mut rng, cell.dim());
        let whole = cell_volume_mc(&cell, 200_000, stream.substream(3 * j))?;
        let a = cell_volume_mc(&cell.refine(v.clone(), 1)?, 200_000, stream.substream(3 * j + 1))?;
        let b = cell_volume_mc(&cell.refine(v, -1)?, 200_000, stream.substream(3 * j + 2))?;
        let sigma = (whole.std_error.powi(2) + a.std_error.powi(2) + b.std_error.powi(2)).sqrt();
        let gap = (whole.fraction - a.fraction - b.fraction).abs();
        additivity.push(CheckRecord {
            check: "volume_additivity".into(),
            params: json!({"dim": cell.dim()}),
            measured: gap,
            bound: 4.0 * sigma,
            sigma,
            pass: gap <= 4.0 * sigma.max(1e-12),
            seed,
        });
    }
    out.push(summarize("volume_additivity", seed, &additivity, true));
    Ok(out)
}
