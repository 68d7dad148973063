use std::collections::BTreeMap;
use std::path::Path;
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spherewaist")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn read_json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
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

#[test]
fn tube_prints_closed_form() {
    let o = run(&["tube", "--n", "2", "--k", "1", "--eps", "0.5"]);
    assert_eq!(code(&o), 0);
    assert_eq!(stdout(&o), "eps,fraction\n0.5,0.479426\n");
    let o = run(&["tube", "--n", "3", "--k", "2", "--eps", "1.5708"]);
    assert_eq!(stdout(&o).lines().nth(1), Some("1.5708,1.000000"));
}

#[test]
fn tube_monte_carlo_column_agrees() {
    let o = run(&["tube", "--n", "3", "--k", "2", "--eps", "0.5", "--mc", "1e6"]);
    assert_eq!(code(&o), 0);
    let row: Vec<String> = stdout(&o).lines().nth(1).unwrap().split(',').map(String::from).collect();
    let exact: f64 = row[1].parse().unwrap();
    let mc: f64 = row[2].parse().unwrap();
    let sigma: f64 = row[3].parse().unwrap();
    assert!((exact - 0.5f64.sin().powi(2)).abs() < 1e-6);
    assert!((mc - exact).abs() <= 4.0 * sigma, "{mc} vs {exact} ± {sigma}");
    assert_eq!(row[4], "true");
}

#[test]
fn tube_accepts_a_list_and_writes_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = run(&["--out", out, "tube", "--n", "2", "--k", "1", "--eps", "0.1,0.2,0.3"]);
    assert_eq!(code(&o), 0);
    assert_eq!(stdout(&o).lines().count(), 4);
    let m = read_json(&dir.path().join("manifest.json"));
    let entry = &m["artifacts"][0];
    assert_eq!(entry["path"], "tube.csv");
    let bytes = std::fs::read(dir.path().join("tube.csv")).unwrap();
    let digest = {
        use sha2::{Digest, Sha256};
        hex::encode(Sha256::digest(&bytes))
    };
    assert_eq!(entry["sha256"], digest);
}

#[test]
fn usage_errors_exit_with_two() {
    assert_eq!(code(&run(&["equalize", "--i", "5"])), 2);
    assert_eq!(code(&run(&["check", "bogus"])), 2);
    assert_eq!(code(&run(&["tube", "--n", "2", "--k", "1"])), 2);
    assert_eq!(code(&run(&["tube", "--n", "2", "--k", "3", "--eps", "0.1"])), 2);
    assert_eq!(code(&run(&["waist", "--map", "nonsense", "--eps", "0.5"])), 2);
    assert_eq!(code(&run(&["frobnicate"])), 2);
}

#[test]
fn equalize_depth_one_projection() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["--out", dir.path().to_str().unwrap(), "equalize", "--i", "1", "--n", "2", "--k", "1", "--map", "proj"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let s = read_json(&dir.path().join("summary.json"));
    assert_eq!(s["converged"], true);
    assert!(s["verification"]["residual"].as_f64().unwrap() < 1e-3);
    for name in ["partition.txt", "trace.jsonl", "summary.json", "manifest.json"] {
        assert!(dir.path().join(name).exists(), "{name}");
    }
    let trace = std::fs::read_to_string(dir.path().join("trace.jsonl")).unwrap();
    assert!(trace.lines().all(|l| serde_json::from_str::<serde_json::Value>(l).is_ok()));
}

#[test]
fn equalize_depth_two_volumes() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["--out", dir.path().to_str().unwrap(), "equalize", "--i", "2", "--n", "2", "--k", "1", "--map", "proj"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let s = read_json(&dir.path().join("summary.json"));
    let vols = s["verification"]["volumes"].as_array().unwrap();
    assert_eq!(vols.len(), 4);
    for v in vols {
        assert!((v.as_f64().unwrap() - 0.25).abs() <= 5e-3, "{v}");
    }
}

#[test]
fn unreachable_tolerance_is_not_converged() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&[
        "--out",
        dir.path().to_str().unwrap(),
        "equalize",
        "--i",
        "2",
        "--tolerance",
        "1e-12",
        "--restarts",
        "1",
        "--max-iterations",
        "30",
        "--coarse-samples",
        "2000",
        "--fine-samples",
        "2000",
        "--verify-samples",
        "2000",
    ]);
    assert_eq!(code(&o), 3);
    assert_eq!(read_json(&dir.path().join("summary.json"))["converged"], false);
}

#[test]
fn waist_projection_gap_within_allowance() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["--out", dir.path().to_str().unwrap(), "waist", "--map", "proj", "--n", "2", "--k", "1", "--eps", "0.5"]);
    assert_eq!(code(&o), 0);
    let c = read_json(&dir.path().join("theorem_check.json"));
    let r = read_json(&dir.path().join("waist.json"));
    let allowance = c["check"]["allowance"].as_f64().unwrap();
    assert!(r["gap"].as_f64().unwrap().abs() <= allowance);
    assert!(std::fs::read_to_string(dir.path().join("waist.csv")).unwrap().starts_with("z,fraction"));
    assert!(std::fs::read_to_string(dir.path().join("waist_plot.txt")).unwrap().lines().count() > 10);
}

#[test]
fn waist_perturbed_passes() {
    let o = run(&["waist", "--map", "perturbed:0.1", "--n", "2", "--k", "1", "--eps", "0.5"]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).contains("theorem check: PASS"));
}

#[test]
fn waist_circle_fibers_match_sin_squared() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["--out", dir.path().to_str().unwrap(), "waist", "--map", "proj", "--n", "3", "--k", "2", "--eps", "0.2"]);
    assert_eq!(code(&o), 0);
    let r = read_json(&dir.path().join("waist.json"));
    let c = read_json(&dir.path().join("theorem_check.json"));
    let max = r["max_fraction"].as_f64().unwrap();
    assert!((max - 0.2f64.sin().powi(2)).abs() <= c["check"]["allowance"].as_f64().unwrap(), "{max}");
}

#[test]
fn impossible_bias_fails_theorem_check() {
    // A negative bias allowance demands more than the estimator delivers.
    let o = run(&[
        "waist", "--map", "proj", "--eps", "0.5", "--slab-samples", "200000", "--query-samples", "20000",
        "--bias-per-delta=-20",
    ]);
    assert_eq!(code(&o), 4);
}

#[test]
fn check_suites_pass() {
    for suite in ["concavity", "partition"] {
        let dir = tempfile::tempdir().unwrap();
        let o = run(&["--out", dir.path().to_str().unwrap(), "check", suite]);
        assert_eq!(code(&o), 0, "{suite}");
        let text = std::fs::read_to_string(dir.path().join(format!("check_{suite}.jsonl"))).unwrap();
        for line in text.lines() {
            let r: serde_json::Value = serde_json::from_str(line).unwrap();
            assert_eq!(r["pass"], true, "{line}");
        }
    }
}

#[test]
fn config_file_supplies_options_and_flags_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "seed = 5\n[tube]\nn = 3\nk = 2\neps = [0.5]\n").unwrap();
    let cfg = cfg.to_str().unwrap();
    assert_eq!(stdout(&run(&["--config", cfg, "tube"])), "eps,fraction\n0.5,0.229849\n");
    // S^3 with k = 1: (ε/2 + sin 2ε/4) / (π/4).
    let expected = (0.25 + 1f64.sin() / 4.0) / std::f64::consts::FRAC_PI_4;
    let row = stdout(&run(&["--config", cfg, "tube", "--k", "1"]));
    assert_eq!(row.lines().nth(1), Some(format!("0.5,{expected:.6}").as_str()));
    std::fs::write(dir.path().join("bad.toml"), "[tube]\nradius = 1\n").unwrap();
    assert_eq!(code(&run(&["--config", dir.path().join("bad.toml").to_str().unwrap(), "tube"])), 2);
}

fn outputs_at(threads: &str, args: &[&str]) -> (BTreeMap<String, Vec<u8>>, Vec<u8>) {
    let dir = tempfile::tempdir().unwrap();
    let mut full = vec!["--threads", threads, "--seed", "11", "--out", dir.path().to_str().unwrap()];
    full.extend_from_slice(args);
    let o = run(&full);
    assert!(matches!(code(&o), 0 | 3 | 4), "{}", String::from_utf8_lossy(&o.stderr));
    (dir_contents(dir.path()), o.stdout)
}

#[test]
fn outputs_do_not_depend_on_thread_count() {
    let commands: [&[&str]; 4] = [
        &["tube", "--n", "3", "--k", "2", "--eps", "0.2,0.7", "--mc", "300000"],
        &[
            "equalize", "--i", "2", "--restarts", "3", "--coarse-samples", "40000", "--fine-samples", "60000",
            "--verify-samples", "60000", "--tolerance", "2e-2",
        ],
        &["waist", "--map", "radial", "--n", "3", "--k", "2", "--eps", "0.5", "--slab-samples", "100000",
            "--query-samples", "20000", "--coarse-queries", "5000"],
        &["check", "partition"],
    ];
    for args in commands {
        let (a, out_a) = outputs_at("1", args);
        let (b, out_b) = outputs_at("8", args);
        assert!(a.contains_key("manifest.json"), "{args:?}");
        assert_eq!(a, b, "{args:?}");
        assert_eq!(out_a, out_b, "{args:?}");
    }
}
