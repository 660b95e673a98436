use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cubic-gda")).args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn read_csv(p: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_path(p).unwrap();
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r.records().map(|x| x.unwrap().iter().map(String::from).collect()).collect();
    (header, rows)
}

#[test]
fn run_writes_all_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let o = cli(&["run", "--problem", "strict_saddle", "--eps", "0.2", "--seed", "3", "--out", path(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["trace.csv", "summary.json", "convergence.svg"] {
        assert!(out.join(f).is_file(), "missing {f}");
    }
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["termination"], "threshold_met");
    assert_eq!(summary["algorithm"], "cubic_gda");
    assert_eq!(summary["eps"], 0.2);
    let t_prime = summary["t_prime"].as_u64().unwrap();
    assert!(t_prime <= summary["iteration_budget"].as_u64().unwrap());

    let (header, rows) = read_csv(&out.join("trace.csv"));
    assert_eq!(header[0], "t");
    assert_eq!(header.len(), 15);
    assert_eq!(rows.len() as u64, summary["iterations"].as_u64().unwrap() + 1);
    let svg = fs::read_to_string(out.join("convergence.svg")).unwrap();
    assert!(svg.starts_with("<svg") && svg.contains("polyline"));
}

#[test]
fn same_seed_gives_identical_traces() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    fs::write(
        &cfg,
        r#"{"problem": {"kind": "robust_sum", "n_samples": 100, "d": 4, "seed": 2},
            "algorithm": "stochastic_cubic_gda", "eps": 0.1, "run": {"max_iters": 200}}"#,
    )
    .unwrap();
    let mut traces = Vec::new();
    for (name, seed) in [("a", "5"), ("b", "5"), ("c", "6")] {
        let out = dir.path().join(name);
        let o = cli(&["run", "--config", path(&cfg), "--seed", seed, "--out", path(&out)]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        traces.push(fs::read(out.join("trace.csv")).unwrap());
    }
    assert_eq!(traces[0], traces[1]);
    assert_ne!(traces[0], traces[2]);
}

#[test]
fn malformed_config_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    for (i, text) in [
        r#"{"problem": {"kind": "strict_saddle"}, "eps": "big"}"#,
        r#"{"problem": {"kind": "nope"}}"#,
        r#"{"problem": {"kind": "strict_saddle"}, "unknown_field": 1}"#,
        "not json",
    ]
    .iter()
    .enumerate()
    {
        let cfg = dir.path().join(format!("bad{i}.json"));
        fs::write(&cfg, text).unwrap();
        let o = cli(&["run", "--config", path(&cfg), "--out", path(&out)]);
        assert_eq!(code(&o), 2, "config {text}");
    }
    assert!(!out.exists());
    let o = cli(&["run", "--config", path(&dir.path().join("missing.json")), "--out", path(&out)]);
    assert_eq!(code(&o), 2);
}

#[test]
fn invalid_values_are_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o_str = path(&out);
    assert_eq!(code(&cli(&["run", "--problem", "banana", "--out", o_str])), 2);
    assert_eq!(code(&cli(&["run", "--algo", "adam", "--out", o_str])), 2);
    assert_eq!(code(&cli(&["run", "--eps", "-1", "--out", o_str])), 2);
    assert_eq!(code(&cli(&["run", "--eps", "abc", "--out", o_str])), 2);
    assert_eq!(code(&cli(&["frobnicate"])), 2);
    // The strict saddle is not a finite sum.
    assert_eq!(code(&cli(&["run", "--algo", "stochastic", "--out", o_str])), 2);
    assert_eq!(code(&cli(&["verify", "--only", "99"])), 2);
    assert!(!out.exists());
}

#[test]
fn scaling_needs_three_accuracies() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("s");
    let o = cli(&["scale", "--grid", "0.1", "--out", path(&out)]);
    assert_eq!(code(&o), 2);
    let o = cli(&["scale", "--grid", "0.1,0.05", "--out", path(&out)]);
    assert_eq!(code(&o), 2);
    assert!(!out.exists());
}

#[test]
fn scaling_table_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("s");
    let o = cli(&["scale", "--problem", "quadratic", "--grid", "0.1,0.05,0.02", "--out", path(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let (header, rows) = read_csv(&out.join("scaling.csv"));
    assert_eq!(header, ["eps", "t_prime", "budget", "within_budget", "termination", "mu_measure"]);
    let eps: Vec<f64> = rows.iter().map(|r| r[0].parse().unwrap()).collect();
    assert_eq!(eps, [0.1, 0.05, 0.02]);
    for (i, r) in rows.iter().enumerate() {
        assert_eq!(r[3], "true");
        assert_eq!(r[4], "threshold_met");
        let run = out.join(format!("eps_{i:02}_{}", eps[i]));
        let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(run.join("summary.json")).unwrap()).unwrap();
        assert_eq!(summary["t_prime"].as_u64().unwrap(), r[1].parse::<u64>().unwrap());
        assert_eq!(summary["final"]["mu_measure"].as_f64().unwrap(), r[5].parse::<f64>().unwrap());
        // Trace floats carry 17 significant digits.
        let (_, trace) = read_csv(&run.join("trace.csv"));
        let s_norm: f64 = trace[1][1].parse().unwrap();
        assert_eq!(cubic_gda_harness::output::format_f64(s_norm), trace[1][1]);
    }
    assert!(out.join("scaling.svg").is_file());
}

#[test]
fn gda_baseline_runs_from_the_cli() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("g.json");
    fs::write(
        &cfg,
        r#"{"problem": {"kind": "strict_saddle"}, "algorithm": "gda_baseline", "x0": [0.0, 0.0], "gda": {"max_iters": 500}}"#,
    )
    .unwrap();
    let out = dir.path().join("g");
    let o = cli(&["run", "--config", path(&cfg), "--out", path(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["x_out"], serde_json::json!([0.0, 0.0]));
}
