use std::process::{Command, Output};

use serde_json::Value;

fn symindex(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_symindex")).args(args).env_remove("SYMINDEX_THREADS").output().expect("binary runs")
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("stdout is a JSON report")
}

#[test]
fn usage_errors_exit_with_two() {
    for args in [
        vec!["no-such-verb"],
        vec!["clifford-s3", "--resolutions"],
        vec!["clifford-s3", "--resolutions", "32,4"],
        vec!["equator-sn", "--n", "4"],
        vec!["clifford-s3", "--model", "cp2"],
        vec!["berger-scan", "--r-min", "1.0", "--r-max", "0.5"],
        vec!["convergence"],
        vec!["simdiag", "--example", "custom"],
        vec![],
    ] {
        let out = symindex(&args);
        assert_eq!(out.status.code(), Some(2), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    }
}

#[test]
fn identity_failure_exits_with_one_and_names_residual() {
    // the zero-trace tolerance is out of reach on a 16² grid
    let out = symindex(&["trace-zero", "--resolutions", "16"]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("relative_zero_trace@16"), "{err}");
}

#[test]
fn clifford_report_contents() {
    let out = symindex(&["clifford-s3", "--resolutions", "48", "--json"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let r = json(&out);
    assert_eq!(r["passed"], true);
    assert_eq!(r["results"]["grids"][0]["index"], 5);
    assert_eq!(r["results"]["grids"][0]["nullity"], r["results"]["analytic_nullity"]);
    assert_eq!(r["results"]["bound"]["constant"], "1/18");
    assert_eq!(r["results"]["bound"]["pass"], true);
    assert!(r["results"]["relative_zero_trace"].as_f64().unwrap() <= 1e-3);
    assert!(r["version"].as_str().unwrap().starts_with(env!("CARGO_PKG_VERSION")));
    assert_eq!(r["config"]["resolutions"], serde_json::json!([48]));
    assert_eq!(r["config"]["model"], "s3");
}

#[test]
fn reports_are_deterministic() {
    let args = ["berger-scan", "--samples", "200", "--points", "12", "--seed", "3", "--json"];
    let a = symindex(&args);
    let b = symindex(&args);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    let other = symindex(&["berger-scan", "--samples", "200", "--points", "12", "--seed", "4", "--json"]);
    assert_ne!(a.stdout, other.stdout);
}

#[test]
fn berger_threshold_reports_all_three_roots() {
    let r = json(&symindex(&["berger-threshold", "--json"]));
    assert_eq!(r["passed"], true);
    let bound = r["results"]["bound_root_tan"].as_f64().unwrap();
    let exact = r["results"]["exact_root_tan"].as_f64().unwrap();
    let sampled = r["results"]["sampled_root_tan"].as_f64().unwrap();
    assert!((bound - 1.652).abs() <= 0.01);
    assert!(sampled >= exact - 1e-9 && sampled <= exact + 0.05);
}

#[test]
fn files_written_and_config_file_used() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    let out_dir = dir.path().join("reports");
    std::fs::write(
        &cfg,
        format!(
            "[experiment]\nname = \"simdiag\"\nresolutions = [12, 24]\nseed = 5\n\n[output]\ndir = \"{}\"\n\n[params]\nexample = \"clifford-shape\"\n",
            out_dir.display()
        ),
    )
    .unwrap();
    let out = symindex(&["--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let report: Value = serde_json::from_str(&std::fs::read_to_string(out_dir.join("simdiag.json")).unwrap()).unwrap();
    assert_eq!(report["config"]["seed"], 5);
    assert_eq!(report["config"]["params"]["example"], "clifford-shape");
    assert_eq!(report["results"]["runs"].as_array().unwrap().len(), 2);
    let csv = std::fs::read_to_string(out_dir.join("simdiag.csv")).unwrap();
    assert!(csv.starts_with("example,grid,h,smoothness,smoothness_over_h\n"));
    assert_eq!(csv.lines().count(), 3);
    assert!(std::fs::read_to_string(out_dir.join("simdiag.txt")).unwrap().contains("status: PASS"));
}

#[test]
fn custom_simdiag_pair_from_file() {
    let dir = tempfile::tempdir().unwrap();
    let n = 6;
    let mut metric = Vec::new();
    let mut alpha = Vec::new();
    let mut beta = Vec::new();
    for i in 0..n {
        for j in 0..n {
            let (x, y) = (i as f64 * 0.1, j as f64 * 0.1);
            metric.push(vec![vec![1.0 + x, 0.0], vec![0.0, 1.0]]);
            alpha.push(vec![vec![(1.0 + x) * (2.0 + y), 0.0], vec![0.0, -1.0]]);
            beta.push(vec![vec![1.0 + x, 0.0], vec![0.0, 3.0]]);
        }
    }
    let body = serde_json::json!({"shape": [n, n], "origin": [0.0, 0.0], "spacing": [0.1, 0.1], "metric": metric, "alpha": alpha, "beta": beta});
    let path = dir.path().join("pair.json");
    std::fs::write(&path, body.to_string()).unwrap();
    let out = symindex(&["simdiag", "--example", "custom", "--input", path.to_str().unwrap(), "--json"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let r = json(&out);
    assert_eq!(r["results"]["runs"][0]["multiplicities"], serde_json::json!([1, 1]));
}

#[test]
fn thread_count_is_echoed_and_validated() {
    let run = |t: &str| {
        Command::new(env!("CARGO_BIN_EXE_symindex"))
            .args(["bound-check", "--resolutions", "16", "--json"])
            .env("SYMINDEX_THREADS", t)
            .output()
            .unwrap()
    };
    let ok = run("2");
    assert_eq!(ok.status.code(), Some(0));
    assert_eq!(json(&ok)["config"]["threads"], 2);
    assert_eq!(run("zero").status.code(), Some(2));
}

#[test]
fn csv_and_convergence() {
    let out = symindex(&["convergence", "--verb", "trace-zero", "--resolutions", "16,24,32", "--csv"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let rows: Vec<&str> = text.lines().collect();
    assert_eq!(rows[0], "grid,error,order_from_previous");
    assert_eq!(rows.len(), 4);
    // seventeen significant digits in every float cell
    let err = rows[1].split(',').nth(1).unwrap();
    assert_eq!(err.split('e').next().unwrap().replace('.', "").len(), 17, "{err}");
}
