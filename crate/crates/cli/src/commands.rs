use std::fmt::Write as _;

use serde::Serialize;
use serde_json::json;
use spherewaist::equalizer::{solve, PartitionReport, SolveOptions, SolveOutcome};
use spherewaist::measure::tube_fraction_mc;
use spherewaist::partition::to_text;
use spherewaist::waist::{calibrate_slab_bias, theorem_check, waist_estimate};
use spherewaist::{suites, CenterMap, Error, MapSpec, RngStream, TubeSpec, WaistOptions};

use crate::config::{CheckArgs, EqualizeArgs, TubeArgs, WaistArgs};
use crate::output::Artifacts;
use crate::{Failure, Globals};

fn required<T>(v: Option<T>, flag: &str) -> Result<T, Failure> {
    v.ok_or_else(|| Failure::Usage(format!("missing --{flag} (flag or config entry)")))
}

fn options_json<T: Serialize>(v: &T) -> serde_json::Value {
    serde_json::to_value(v).expect("options serialize")
}

pub fn tube(g: &Globals, a: TubeArgs) -> Result<(), Failure> {
    let n = required(a.n, "n")?;
    let k = required(a.k, "k")?;
    let radii = required(a.eps.clone(), "eps")?;
    if radii.is_empty() {
        return Err(Failure::Usage("--eps needs at least one value".into()));
    }
    let mut shown = String::from(if a.mc.is_some() { "eps,fraction,mc,sigma,agree\n" } else { "eps,fraction\n" });
    let mut csv = shown.clone();
    let mut all_agree = true;
    for (j, &eps) in radii.iter().enumerate() {
        let spec = TubeSpec::new(n, k, eps)?;
        let exact = spec.fraction();
        let _ = write!(shown, "{eps},{exact:.6}");
        let _ = write!(csv, "{eps},{exact:.12}");
        if let Some(samples) = a.mc {
            if samples == 0 {
                return Err(Failure::Usage("--mc needs a positive sample count".into()));
            }
            let est = tube_fraction_mc(&spec, samples, RngStream::new(g.seed, 0x7b).substream(j as u64));
            let agree = (est.fraction - exact).abs() <= 4.0 * est.std_error + 1e-12;
            all_agree &= agree;
            let _ = write!(shown, ",{:.6},{:.2e},{agree}", est.fraction, est.std_error);
            let _ = write!(csv, ",{:.12},{:.6e},{agree}", est.fraction, est.std_error);
        }
        shown.push('\n');
        csv.push('\n');
    }
    print!("{shown}");
    let mut out = Artifacts::new(g.out.clone())?;
    out.write("tube.csv", &csv)?;
    out.finish("tube", g.seed, &options_json(&a))?;
    if all_agree {
        Ok(())
    } else {
        Err(Failure::CheckFailed)
    }
}

#[derive(Serialize)]
struct EqualizeSummary<'a> {
    converged: bool,
    depth: usize,
    n: usize,
    k: usize,
    map: String,
    seed: u64,
    residual: f64,
    restart: usize,
    evaluations: usize,
    report: &'a PartitionReport,
    verification: Option<&'a PartitionReport>,
    options: &'a SolveOptions,
}

pub fn equalize(g: &Globals, a: EqualizeArgs) -> Result<(), Failure> {
    let depth = required(a.i, "i")?;
    if !(1..=4).contains(&depth) {
        return Err(Failure::Usage(format!("--i {depth} is outside the supported depths 1..=4")));
    }
    let (n, k) = (a.n.unwrap_or(2), a.k.unwrap_or(1));
    let spec = MapSpec::parse(a.map.as_deref().unwrap_or("proj"), n, k)?;
    let map = spec.build()?;
    let d = SolveOptions::default();
    let opts = SolveOptions {
        restarts: a.restarts.unwrap_or(d.restarts),
        max_iterations: a.max_iterations.unwrap_or(d.max_iterations),
        tolerance: a.tolerance.unwrap_or(d.tolerance),
        coarse_samples: a.coarse_samples.unwrap_or(d.coarse_samples),
        fine_samples: a.fine_samples.unwrap_or(d.fine_samples),
        verify_samples: a.verify_samples.unwrap_or(d.verify_samples),
        seed: g.seed,
    };
    let (outcome, converged): (SolveOutcome, bool) = match solve(depth, &map, CenterMap::Centroid, &opts) {
        Ok(o) => (o, true),
        Err(Error::NotConverged(best)) => (*best, false),
        Err(e) => return Err(e.into()),
    };
    let summary = EqualizeSummary {
        converged,
        depth,
        n,
        k,
        map: spec.to_string(),
        seed: g.seed,
        residual: outcome.residual,
        restart: outcome.restart,
        evaluations: outcome.evaluations,
        report: &outcome.report,
        verification: outcome.verification.as_ref(),
        options: &opts,
    };
    println!("converged: {converged}");
    println!("residual: {:.6e}", outcome.residual);
    if let Some(v) = &outcome.verification {
        println!("verified residual: {:.6e} ({} samples)", v.residual, v.samples);
    }
    let shown = outcome.verification.as_ref().unwrap_or(&outcome.report);
    let vols: Vec<String> = shown.volumes.iter().map(|v| format!("{v:.6}")).collect();
    println!("volumes: {}", vols.join(" "));
    println!("volume gap: {:.6e}", shown.volume_gap);
    println!("center image diameter: {:.6e}", shown.image_diameter);

    let mut out = Artifacts::new(g.out.clone())?;
    out.write("partition.txt", &to_text(&outcome.partition))?;
    out.write("trace.jsonl", &outcome.trace_jsonl())?;
    out.write_json("summary.json", &summary)?;
    out.finish("equalize", g.seed, &json!({ "depth": depth, "n": n, "k": k, "map": spec.to_string(), "solver": opts }))?;
    if converged {
        Ok(())
    } else {
        Err(Failure::NotConverged)
    }
}

pub fn waist(g: &Globals, a: WaistArgs) -> Result<(), Failure> {
    let eps = required(a.eps, "eps")?;
    let (n, k) = (a.n.unwrap_or(2), a.k.unwrap_or(1));
    let spec = MapSpec::parse(a.map.as_deref().unwrap_or("proj"), n, k)?;
    let map = spec.build()?;
    let d = WaistOptions::default();
    let opts = WaistOptions {
        slab_samples: a.slab_samples.unwrap_or(d.slab_samples),
        query_samples: a.query_samples.unwrap_or(d.query_samples),
        coarse_queries: a.coarse_queries.unwrap_or(d.coarse_queries),
        delta: a.delta.or(d.delta),
        grid_step: a.grid_step.unwrap_or(d.grid_step),
        refine_top: a.refine_top.unwrap_or(d.refine_top),
        seed: g.seed,
    };
    let label = spec.to_string();
    let report = waist_estimate(&map, &label, eps, &opts)?;
    let (bias, calibrated) = match a.bias_per_delta {
        Some(c) => (c, false),
        None if spec == MapSpec::projection(n, k) => (report.gap.abs() / report.delta, true),
        None => (calibrate_slab_bias(n, k, eps, &opts)?, true),
    };
    let check = theorem_check(&report, bias);
    if report.empty_slabs > 0 {
        eprintln!("warning: {} grid points had empty slabs and were skipped", report.empty_slabs);
    }
    println!("map {label} on S^{n} -> R^{k}, eps {eps}, delta {:.4e}", report.delta);
    let z: Vec<String> = report.argmax_z.iter().map(|v| format!("{v:.6}")).collect();
    println!("max fraction: {:.6} ± {:.2e} at z = ({})", report.max_fraction, report.max_sigma, z.join(", "));
    println!("tube bound: {:.6}", report.bound);
    println!("gap: {:+.6}", report.gap);
    println!("allowance: {:.6}", check.allowance);
    println!("theorem check: {}", if check.pass { "PASS" } else { "FAIL" });

    let mut out = Artifacts::new(g.out.clone())?;
    let mut text = report.to_json();
    text.push('\n');
    out.write("waist.json", &text)?;
    out.write("waist.csv", &report.to_csv())?;
    out.write("waist_plot.txt", &report.plot_data())?;
    out.write_json("theorem_check.json", &json!({ "check": check, "calibrated": calibrated }))?;
    out.finish("waist", g.seed, &json!({ "map": label, "n": n, "k": k, "eps": eps, "estimator": opts }))?;
    if check.pass {
        Ok(())
    } else {
        Err(Failure::CheckFailed)
    }
}

pub fn check(g: &Globals, a: CheckArgs) -> Result<(), Failure> {
    let suite = required(a.suite.clone(), "suite")?;
    let names: Vec<&str> = match suite.as_str() {
        "all" => suites::SUITES.to_vec(),
        s if suites::SUITES.contains(&s) => vec![s],
        s => return Err(Failure::Usage(format!("unknown suite '{s}'"))),
    };
    let mut out = Artifacts::new(g.out.clone())?;
    let mut failed = 0;
    for name in names {
        let records = suites::run_suite(name, g.seed).expect("known suite")?;
        let mut lines = String::new();
        for r in &records {
            println!(
                "{} {name}/{} measured={:.6e} bound={:.6e}",
                if r.pass { "PASS" } else { "FAIL" },
                r.check,
                r.measured,
                r.bound
            );
            failed += usize::from(!r.pass);
            lines.push_str(&serde_json::to_string(r).expect("record serializes"));
            lines.push('\n');
        }
        out.write(&format!("check_{name}.jsonl"), &lines)?;
    }
    out.finish("check", g.seed, &json!({ "suite": suite }))?;
    if failed == 0 {
        Ok(())
    } else {
        Err(Failure::CheckFailed)
    }
}
