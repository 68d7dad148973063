//! End-to-end acceptance run: one PASS/FAIL line per criterion, with the
//! measured worst case and the wall time against its budget.

use std::collections::BTreeMap;
use std::f64::consts::FRAC_PI_2;
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use spherewaist::concavity::ratio_bound;
use spherewaist::equalizer::{solve, verify, SolveOptions};
use spherewaist::measure::tube_fraction_mc;
use spherewaist::partition::{apply_automorphism, canonical_form, cell_constraints, cell_volume_mc, orbit};
use spherewaist::sphere::{fill_uniform, sample_uniform};
use spherewaist::suites;
use spherewaist::waist::{theorem_check, waist_estimate_spec};
use spherewaist::{
    tube_fraction, CenterMap, Density1D, MapSpec, OrientedPartition, RngStream, TreeAutomorphism, TubeSpec,
    WaistOptions,
};

const SEED: u64 = 20_240_601;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict { pass, detail: detail.into() }
}

/// Composite Simpson rule with `m` (even) panels.
fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, m: usize) -> f64 {
    let h = (b - a) / m as f64;
    let inner: f64 = (1..m).map(|j| f(a + j as f64 * h) * if j % 2 == 1 { 4.0 } else { 2.0 }).sum();
    (f(a) + f(b) + inner) * h / 3.0
}

fn tube_oracle(n: usize, k: usize, eps: f64) -> f64 {
    if eps >= FRAC_PI_2 {
        return 1.0;
    }
    let w = |t: f64| t.cos().powi((n - k) as i32) * t.sin().powi(k as i32 - 1);
    simpson(w, 0.0, eps, 20_000) / simpson(w, 0.0, FRAC_PI_2, 20_000)
}

fn tube_formula() -> Verdict {
    let mut worst: f64 = 0.0;
    for j in 1..=15 {
        let eps = j as f64 / 10.0;
        let a = tube_fraction(&TubeSpec::new(2, 1, eps).unwrap());
        let b = tube_fraction(&TubeSpec::new(3, 2, eps).unwrap());
        worst = worst.max((a - eps.sin()).abs()).max((b - eps.sin().powi(2)).abs());
    }
    let mut worst_z: f64 = 0.0;
    for (j, (n, k)) in [(2, 1), (3, 1), (3, 2)].into_iter().enumerate() {
        for (l, eps) in [0.2, 0.5, 1.0].into_iter().enumerate() {
            let spec = TubeSpec::new(n, k, eps).unwrap();
            let mc = tube_fraction_mc(&spec, 1_000_000, RngStream::new(SEED, 10 + j as u64).substream(l as u64));
            worst_z = worst_z.max((mc.fraction - spec.fraction()).abs() / mc.std_error);
        }
    }
    verdict(worst <= 1e-10 && worst_z <= 4.0, format!("closed-form error {worst:.1e}, worst MC deviation {worst_z:.2}σ"))
}

fn ratio_bound_suite() -> Verdict {
    let records = suites::ratio_bound_records(SEED, 500).unwrap();
    let in_range = records.iter().all(|r| r.params["k"].as_f64().unwrap() <= 5.0 && r.params["alpha"].as_f64().unwrap() <= 4.0);
    let worst = records.iter().map(|r| r.measured - r.bound).fold(f64::INFINITY, f64::min);
    let mut eq_err: f64 = 0.0;
    for k in 1..=5 {
        let d = Density1D::cos_power(k as f64, (0.0, FRAC_PI_2)).unwrap();
        for alpha in [0.0, 1.0, 2.5, 4.0] {
            for eps in [0.1, 0.5, 1.0, 1.5] {
                let r = ratio_bound(&d, alpha, eps, 1e-12).unwrap();
                let w = |t: f64| t.cos().powi(k) * t.sin().powf(alpha);
                let oracle = simpson(w, 0.0, eps, 40_000) / simpson(w, 0.0, FRAC_PI_2, 40_000);
                eq_err = eq_err.max((r.lhs - r.rhs).abs()).max((r.lhs - oracle).abs());
            }
        }
    }
    verdict(
        records.len() == 500 && in_range && worst >= -1e-8 && eq_err <= 1e-10,
        format!("{} instances, min lhs − rhs {worst:.2e}, cos^k equality error {eq_err:.1e}", records.len()),
    )
}

fn ball_lower_bound_suite() -> Verdict {
    let records = suites::ball_lower_bound_records(SEED, 100).unwrap();
    let mut worst = f64::INFINITY;
    let mut bound_err: f64 = 0.0;
    let mut shapes_ok = true;
    for r in &records {
        let n = r.params["n"].as_u64().unwrap() as usize;
        let k = r.params["k"].as_u64().unwrap() as usize;
        let eps = r.params["eps"].as_f64().unwrap();
        shapes_ok &= (k == 1 || k == 2) && n <= 4;
        bound_err = bound_err.max((r.bound - tube_oracle(n, k, eps)).abs());
        worst = worst.min(r.measured - r.bound);
    }
    verdict(
        records.len() == 100 && shapes_ok && worst >= -1e-6 && bound_err <= 1e-9,
        format!("min μ(B) − tube {worst:.2e}, tube bound error {bound_err:.1e}"),
    )
}

fn random_partition(stream: RngStream, depth: usize, n: usize) -> OrientedPartition {
    let mut rng = stream.rng();
    OrientedPartition::new((0..(1 << depth) - 1).map(|_| sample_uniform(&mut rng, n)).collect()).unwrap()
}

fn partition_suite() -> Verdict {
    let stream = RngStream::new(SEED, 40);
    let mut draws = 0u64;
    let mut random_partition = |depth: usize, n: usize| {
        draws += 1;
        random_partition(stream.substream(1_000_000 + draws), depth, n)
    };
    let mut sizes_ok = true;
    for depth in 1..=3 {
        let p = random_partition(depth, 2);
        sizes_ok &= orbit(&p).unwrap().len() == 1usize << ((1 << depth) - 1);
    }
    let p = random_partition(2, 2);
    let (x, y, z) = (p.normal(1).clone(), p.normal(2).clone(), p.normal(3).clone());
    let expected = [
        [x.clone(), y.clone(), z.clone()],
        [x.clone(), y.neg(), z.clone()],
        [x.clone(), y.clone(), z.neg()],
        [x.clone(), y.neg(), z.neg()],
        [x.neg(), z.clone(), y.clone()],
        [x.neg(), z.neg(), y.clone()],
        [x.neg(), z.clone(), y.neg()],
        [x.neg(), z.neg(), y.neg()],
    ];
    let key = |t: &[Vec<f64>]| t.iter().flatten().map(|v| v.to_bits()).collect::<Vec<u64>>();
    let mut want: Vec<Vec<u64>> =
        expected.iter().map(|t| key(&t.iter().map(|v| v.coords().to_vec()).collect::<Vec<_>>())).collect();
    let mut got: Vec<Vec<u64>> = orbit(&p)
        .unwrap()
        .iter()
        .map(|q| key(&q.normals().iter().map(|v| v.coords().to_vec()).collect::<Vec<_>>()))
        .collect();
    want.sort();
    got.sort();
    let example_ok = want == got;

    let mut canon_ok = true;
    for j in 0..100 {
        let depth = 1 + j % 3;
        let p = random_partition(depth, 2 + j % 2);
        let c = canonical_form(&p).unwrap().flat();
        for m in 0..4u64 {
            let mask = (m * 0x9e37_79b9 + j as u64) % TreeAutomorphism::group_order(depth) as u64;
            let q = apply_automorphism(&TreeAutomorphism::from_mask(depth, mask), &p).unwrap();
            canon_ok &= canonical_form(&q).unwrap().flat() == c;
        }
    }

    let mut worst_z: f64 = 0.0;
    for j in 0..10u64 {
        let p = random_partition(3, 2);
        let (mut total, mut var) = (0.0, 0.0);
        for leaf in 0..8 {
            let cell = cell_constraints(&p, leaf).unwrap();
            let v = cell_volume_mc(&cell, 200_000, stream.substream(100 * j + leaf as u64)).unwrap();
            total += v.fraction;
            var += v.std_error * v.std_error;
        }
        worst_z = worst_z.max((total - 1.0).abs() / var.sqrt());
    }
    verdict(
        sizes_ok && example_ok && canon_ok && worst_z <= 4.0,
        format!(
            "orbit sizes {sizes_ok}, example orbit {example_ok}, canonical forms {canon_ok}, additivity {worst_z:.2}σ"
        ),
    )
}

/// Volumes and center images of the cells from an independent uniform cloud.
fn census(p: &OrientedPartition, samples: usize, stream: RngStream) -> (Vec<f64>, Vec<f64>) {
    let n1 = p.dim() + 1;
    let leaves = 1 << p.depth();
    let mut rng = stream.rng();
    let mut counts = vec![0u64; leaves];
    let mut sums = vec![0.0; leaves * n1];
    let mut x = vec![0.0; n1];
    for _ in 0..samples {
        fill_uniform(&mut rng, &mut x);
        if let Some(l) = p.locate(&x) {
            counts[l] += 1;
            for (s, v) in sums[l * n1..(l + 1) * n1].iter_mut().zip(&x) {
                *s += v;
            }
        }
    }
    let volumes = counts.iter().map(|&c| c as f64 / samples as f64).collect();
    let images = (0..leaves)
        .map(|l| {
            let s = &sums[l * n1..(l + 1) * n1];
            s[n1 - 1] / s.iter().map(|v| v * v).sum::<f64>().sqrt()
        })
        .collect();
    (volumes, images)
}

fn equalizer() -> Verdict {
    let f = MapSpec::projection(2, 1).build().unwrap();
    let mut ok = true;
    let mut parts = Vec::new();
    for depth in [1, 2] {
        let opts = SolveOptions { seed: SEED, ..Default::default() };
        let Ok(o) = solve(depth, &f, CenterMap::Centroid, &opts) else {
            ok = false;
            parts.push(format!("i={depth} did not converge"));
            continue;
        };
        let check = verify(&o.partition, &f, CenterMap::Centroid, 10_000_000, RngStream::new(SEED ^ 0xfeed, 1)).unwrap();
        let (vols, images) = census(&o.partition, 10_000_000, RngStream::new(SEED ^ 0xfeed, 2));
        let target = 0.5f64.powi(depth as i32);
        let vol_gap = vols.iter().map(|v| (v - target).abs()).fold(0.0, f64::max);
        let spread = images.iter().copied().fold(f64::NEG_INFINITY, f64::max)
            - images.iter().copied().fold(f64::INFINITY, f64::min);
        ok &= check.residual < 5e-3 && vol_gap <= 5e-3 && spread <= 5e-3;
        parts.push(format!("i={depth}: residual {:.1e}, volume gap {vol_gap:.1e}, image spread {spread:.1e}", check.residual));
    }
    verdict(ok, parts.join("; "))
}

fn waist_desk_check() -> Verdict {
    let mut ok = true;
    let mut worst_proj_gap: f64 = 0.0;
    let mut worst_margin = f64::INFINITY;
    let mut failures = Vec::new();
    for (n, k) in [(2, 1), (3, 1), (3, 2)] {
        for eps in [0.2, 0.5, 1.0] {
            let opts = WaistOptions { seed: SEED, ..Default::default() };
            let proj = waist_estimate_spec(&MapSpec::projection(n, k), eps, &opts).unwrap();
            let c = proj.gap.abs() / proj.delta;
            worst_proj_gap = worst_proj_gap.max(proj.gap.abs());
            ok &= proj.gap.abs() <= 0.02;
            for spec in [MapSpec::projection(n, k), MapSpec::perturbed(n, k, 0.1), MapSpec::parse("radial", n, k).unwrap()] {
                let report = if spec == MapSpec::projection(n, k) {
                    proj.clone()
                } else {
                    waist_estimate_spec(&spec, eps, &opts).unwrap()
                };
                let t = theorem_check(&report, c);
                worst_margin = worst_margin.min(t.max_fraction - (t.bound - t.allowance));
                if !t.pass {
                    ok = false;
                    failures.push(format!("{spec} n={n} k={k} ε={eps}"));
                }
            }
        }
    }
    verdict(
        ok,
        format!(
            "27 runs, worst |projection gap| {worst_proj_gap:.4}, min margin over bound − allowance {worst_margin:.4}{}",
            if failures.is_empty() { String::new() } else { format!(", failed: {}", failures.join(", ")) }
        ),
    )
}

fn measure_suites() -> Verdict {
    let all_pass = |rs: &[spherewaist::CheckRecord]| rs.iter().all(|r| r.pass);
    let upper_ok = |rs: &[spherewaist::CheckRecord]| rs.iter().all(|r| r.measured <= r.bound + 1e-9);
    let bg = suites::bishop_gromov_records(SEED, 50, 20_000).unwrap();
    let density = suites::density_bound_records(SEED, 100).unwrap();
    let upper = suites::ball_mass_upper_records(SEED, 100).unwrap();
    let gpl = suites::gpl_records(SEED, 50, 20_000).unwrap();
    let desint = suites::desintegration_records(SEED, 20, 100_000).unwrap();
    let counts = [bg.len(), density.len(), upper.len(), gpl.len(), desint.len()];
    let flags = [
        all_pass(&bg),
        upper_ok(&density) && all_pass(&density),
        upper_ok(&upper) && all_pass(&upper),
        all_pass(&gpl),
        all_pass(&desint),
    ];
    verdict(
        counts == [50, 100, 100, 50, 20] && flags.iter().all(|&f| f),
        format!("Bishop–Gromov, density max, ball mass, ball concavity, desintegration: {flags:?}"),
    )
}

fn dir_contents(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect()
}

fn determinism() -> Verdict {
    let commands: [&[&str]; 4] = [
        &["tube", "--n", "3", "--k", "2", "--eps", "0.2,0.7", "--mc", "1e6"],
        &[
            "equalize", "--i", "2", "--restarts", "3", "--coarse-samples", "40000", "--fine-samples", "200000",
            "--verify-samples", "200000", "--tolerance", "1e-2",
        ],
        &["waist", "--map", "perturbed:0.1", "--n", "3", "--k", "2", "--eps", "0.5", "--slab-samples", "400000",
            "--query-samples", "20000"],
        &["check", "all"],
    ];
    let mut same = 0;
    for args in commands {
        let run = |threads: &str| {
            let dir = tempfile::tempdir().unwrap();
            let o = Command::new(env!("CARGO_BIN_EXE_spherewaist"))
                .args(["--threads", threads, "--seed", "7", "--out", dir.path().to_str().unwrap()])
                .args(args)
                .output()
                .unwrap();
            (dir_contents(dir.path()), o.stdout, o.status.code())
        };
        let (a, b) = (run("1"), run("8"));
        if a == b && a.0.contains_key("manifest.json") {
            same += 1;
        }
    }
    verdict(same == commands.len(), format!("{same}/{} commands byte-identical at 1 and 8 threads", commands.len()))
}

fn main() -> ExitCode {
    type Criterion = (&'static str, fn() -> Verdict, u64);
    let criteria: [Criterion; 8] = [
        ("tube formula", tube_formula, 10),
        ("ratio bound suite", ratio_bound_suite, 60),
        ("ball lower bound suite", ball_lower_bound_suite, 120),
        ("partition and group suite", partition_suite, 60),
        ("equalizer", equalizer, 600),
        ("waist desk check", waist_desk_check, 900),
        ("measure property suites", measure_suites, 300),
        ("determinism", determinism, 1800),
    ];
    let mut failed = 0;
    for (j, (name, run, budget)) in criteria.into_iter().enumerate() {
        let t = Instant::now();
        let v = run();
        let elapsed = t.elapsed();
        let in_time = elapsed <= Duration::from_secs(budget);
        let pass = v.pass && in_time;
        failed += usize::from(!pass);
        println!(
            "criterion {} ({name}): {} [{}; {:.1}s of {budget}s]",
            j + 1,
            if pass { "PASS" } else { "FAIL" },
            v.detail,
            elapsed.as_secs_f64()
        );
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
