use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tvpvarx_core::analysis::is_stable;
use tvpvarx_core::io::{read_benchmark_table, read_chain};

const BIN: &str = env!("CARGO_BIN_EXE_tvpvarx");

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Simulated data in `dir/data.csv`.
fn simulate(dir: &Path, periods: &str) -> PathBuf {
    ok(&["simulate", "--output", p(dir), "--seed", "11", "--periods", periods]);
    dir.join("data.csv")
}

const SHORT: [&str; 6] = ["--burn-in", "60", "--draws", "8", "--thin", "5"];

fn estimate(data: &Path, out: &Path, extra: &[&str]) {
    let mut args = vec!["estimate", "--data", p(data), "--output", p(out)];
    args.extend(SHORT);
    args.extend(extra);
    ok(&args);
}

#[test]
fn same_seed_gives_byte_identical_chains() {
    let dir = tempfile::tempdir().unwrap();
    let data = simulate(dir.path(), "90");
    let (a, b, c) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("c"));
    estimate(&data, &a, &["--seed", "5", "--chains", "2"]);
    estimate(&data, &b, &["--seed", "5", "--chains", "2", "--workers", "2"]);
    estimate(&data, &c, &["--seed", "6", "--chains", "2"]);
    let read = |d: &Path| std::fs::read(d.join("chain.txt")).unwrap();
    assert_eq!(read(&a), read(&b));
    assert_ne!(read(&a), read(&c));
    assert_eq!(std::fs::read(a.join("summary.csv")).unwrap(), std::fs::read(b.join("summary.csv")).unwrap());
}

#[test]
fn every_run_writes_a_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let data = simulate(dir.path(), "90");
    estimate(&data, dir.path(), &[]);
    let manifest = std::fs::read_to_string(dir.path().join("estimate-manifest.txt")).unwrap();
    for key in ["config_hash = ", "seed = 1", "tvpvarx_version = ", "data_sha256 = ", "output0 = "] {
        assert!(manifest.contains(key), "{key} missing:\n{manifest}");
    }
    assert!(dir.path().join("simulate-manifest.txt").exists());
    assert!(dir.path().join("estimate-config.toml").exists());
}

#[test]
fn config_file_and_flags_agree() {
    let dir = tempfile::tempdir().unwrap();
    let data = simulate(dir.path(), "90");
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "burn-in = 60\ndraws = 8\nthin = 5\nseed = 4\n").unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    ok(&["estimate", "--config", p(&cfg), "--data", p(&data), "--output", p(&a)]);
    estimate(&data, &b, &["--seed", "4"]);
    assert_eq!(std::fs::read(a.join("chain.txt")).unwrap(), std::fs::read(b.join("chain.txt")).unwrap());
    // A flag beats the file.
    let c = dir.path().join("c");
    ok(&["estimate", "--config", p(&cfg), "--data", p(&data), "--output", p(&c), "--seed", "5"]);
    assert_ne!(std::fs::read(a.join("chain.txt")).unwrap(), std::fs::read(c.join("chain.txt")).unwrap());
}

#[test]
fn irf_long_horizon_equals_scaled_theta() {
    let dir = tempfile::tempdir().unwrap();
    let data = simulate(dir.path(), "90");
    estimate(&data, dir.path(), &[]);
    ok(&["irf", "--output", p(dir.path()), "--shock", "0.10", "--irf-horizon", "200", "--irf-origins", "60,89"]);
    let (_, records) = read_chain(std::fs::File::open(dir.path().join("chain.txt")).unwrap()).unwrap();
    let text = std::fs::read_to_string(dir.path().join("irf_draws.csv")).unwrap();
    let mut checked = 0;
    for line in text.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        let origin: usize = f[0].parse().unwrap();
        let draw: usize = f[2].parse().unwrap();
        let var = if f[3] == "er" { 0 } else { 1 };
        let rec = &records[draw];
        if !is_stable(&rec.coef.path[origin - 40]) {
            continue;
        }
        let h200: f64 = f.last().unwrap().parse().unwrap();
        assert!((h200 - 1.1f64.ln() * rec.theta.as_ref().unwrap()[var]).abs() < 1e-6);
        checked += 1;
    }
    assert!(checked > 0);
    let bands = std::fs::read_to_string(dir.path().join("irf_bands.csv")).unwrap();
    assert_eq!(bands.lines().count(), 1 + 2 * 200 * 2);
}

#[test]
fn growth_and_forecast_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let data = simulate(dir.path(), "90");
    estimate(&data, dir.path(), &[]);
    ok(&["growth", "--output", p(dir.path())]);
    let growth = std::fs::read_to_string(dir.path().join("growth.csv")).unwrap();
    assert_eq!(growth.lines().next().unwrap(), "origin,date,variable,q0.2,q0.5,q0.8,used,excluded");
    assert_eq!(growth.lines().count(), 1 + 50 * 2);

    ok(&["forecast", "--data", p(&data), "--output", p(dir.path()), "--origin", "80"]);
    let fc = std::fs::read_to_string(dir.path().join("forecast.csv")).unwrap();
    assert_eq!(fc.lines().count(), 1 + 5 * 2);
    for line in fc.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        assert!(f[4].parse::<f64>().unwrap() > 0.0);
        assert!(!f[7].is_empty());
    }
    ok(&["forecast", "--data", p(&data), "--output", p(dir.path()), "--exo-path", "0.01,0.02", "--horizon", "2"]);
    let fc = std::fs::read_to_string(dir.path().join("forecast.csv")).unwrap();
    assert!(fc.lines().skip(1).all(|l| l.ends_with(',')));
}

#[test]
fn benchmark_table_matches_golden_layout() {
    let dir = tempfile::tempdir().unwrap();
    let data = simulate(dir.path(), "70");
    let mut args = vec!["benchmark", "--data", p(&data), "--output", p(dir.path()), "--first-origin", "60", "--seed", "3"];
    args.extend(SHORT);
    ok(&args);
    let produced = std::fs::read(dir.path().join("benchmark.csv")).unwrap();
    let golden_path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden/benchmark_small.csv");
    let golden = std::fs::read(golden_path).unwrap();
    let a = read_benchmark_table(produced.as_slice()).unwrap();
    let b = read_benchmark_table(golden.as_slice()).unwrap();
    assert_eq!(a.methods, vec!["constrained", "tvp", "var"]);
    assert_eq!((a.variables.len(), a.horizon), (2, 5));
    assert_eq!(a.methods, b.methods);
    for (x, y) in a.tables.iter().zip(&b.tables) {
        assert!((&x.mean - &y.mean).amax() < 1e-9 * (1.0 + y.mean.amax()));
        let (xs, ys) = (x.std.iter().filter(|v| v.is_finite()), y.std.iter().filter(|v| v.is_finite()));
        for (u, v) in xs.zip(ys) {
            assert!((u - v).abs() < 1e-9 * (1.0 + v.abs()));
        }
    }
    // Rerun: byte-identical table.
    ok(&args);
    assert_eq!(std::fs::read(dir.path().join("benchmark.csv")).unwrap(), produced);
}

#[test]
fn exit_codes_follow_error_class() {
    let dir = tempfile::tempdir().unwrap();
    let out = p(dir.path());
    assert_eq!(run(&["estimate", "--output", out]).status.code(), Some(2));
    assert_eq!(run(&["estimate", "--output", out, "--thin", "0"]).status.code(), Some(2));
    assert_eq!(run(&["estimate", "--output", out, "--mode", "sideways"]).status.code(), Some(2));

    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "date,a,b,x\n2000-Q1,1,1,1\n2000-Q2,0,1,1\n").unwrap();
    let res = run(&["estimate", "--data", p(&bad), "--output", out]);
    assert_eq!(res.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&res.stderr).contains("row 2"));
    assert_eq!(run(&["irf", "--output", out, "--chain", p(&dir.path().join("missing.txt"))]).status.code(), Some(3));

    // Constant exogenous level: the oil regressors are all zero.
    let mut flat = String::from("date,a,b,x\n");
    let mut q = (2000, 1);
    for t in 0..80 {
        let v = 100.0 * (1.0 + 0.01 * ((t * 7 % 11) as f64 - 5.0));
        let w = 50.0 * (1.0 + 0.01 * ((t * 5 % 13) as f64 - 6.0));
        flat.push_str(&format!("{}-Q{},{v},{w},20\n", q.0, q.1));
        q = if q.1 == 4 { (q.0 + 1, 1) } else { (q.0, q.1 + 1) };
    }
    let flat_path = dir.path().join("flat.csv");
    std::fs::write(&flat_path, flat).unwrap();
    assert_eq!(run(&["estimate", "--data", p(&flat_path), "--output", out]).status.code(), Some(4));
}
