//! End-to-end tests of the command-line driver.

use std::path::Path;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_dilstar"))
}

fn tmpdir(name: &str) -> std::path::PathBuf {
    let dir = std::env::temp_dir().join(format!("dilstar-cli-{name}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

/// Fast solver flags for tests.
fn fast_args(out: &Path) -> Vec<String> {
    [
        "--gamma", "0.1", "--lambda-self", "10", "--b", "1", "--sigma-c", "0.4", "--mu-c", "1.2",
        "--cells-inner", "60", "--cells-outer", "120", "--eps", "1e-8",
    ]
    .iter()
    .map(|s| s.to_string())
    .chain(["--out-dir".to_string(), out.display().to_string()])
    .collect()
}

#[test]
fn solve_emits_and_is_deterministic() {
    let d1 = tmpdir("det1");
    let d2 = tmpdir("det2");
    for d in [&d1, &d2] {
        let mut args = fast_args(d);
        args.extend(["--emit".into(), "csv,json,svg".into()]);
        let out = bin().arg("solve").args(&args).output().unwrap();
        assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    }
    for name in [
        "profiles_inner.csv",
        "profiles_outer.csv",
        "summary.json",
        "plot_sigma.svg",
        "plot_phi.svg",
        "plot_nu.svg",
        "plot_mu.svg",
    ] {
        let a = std::fs::read(d1.join(name)).unwrap();
        let b = std::fs::read(d2.join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between identical runs");
    }
    let summary = std::fs::read_to_string(d1.join("summary.json")).unwrap();
    let v: serde_json::Value = serde_json::from_str(&summary).unwrap();
    assert!(v["converged"].as_bool().unwrap());
    assert!(v["residual"].as_f64().unwrap() < 1e-8);
    assert!(v["R_s"].as_f64().unwrap() > 0.0);
}

#[test]
fn csv_roundtrip_matches_in_memory_solution() {
    // Re-reading the emitted CSV reproduces the in-memory profiles
    // bit-exactly.
    let d = tmpdir("roundtrip");
    let out = bin().arg("solve").args(fast_args(&d)).output().unwrap();
    assert!(out.status.success());

    let params = dilstar::model::ModelParams::new(0.1, 10.0, 1.0, 0.4, 1.2).unwrap();
    let cfg = dilstar::canm::CanmConfig {
        cells_inner: 60,
        cells_outer: 120,
        epsilon: 1e-8,
        ..dilstar::canm::CanmConfig::default()
    };
    let sol = dilstar::canm::solve(&params, &cfg, None).unwrap();

    let text = std::fs::read_to_string(d.join("profiles_inner.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "x,r,lambda,nu,phi,xi,sigma,eta,mu");
    for (j, line) in lines.enumerate() {
        let vals: Vec<f64> = line.split(',').map(|v| v.parse().unwrap()).collect();
        assert_eq!(vals.len(), 9);
        assert_eq!(vals[0], sol.inner.mesh().nodes()[j], "x at row {j}");
        assert_eq!(vals[1], sol.spectral.r_s * sol.inner.mesh().nodes()[j], "r at row {j}");
        for c in 0..7 {
            assert_eq!(vals[2 + c], sol.inner.value(j, c), "component {c} at row {j}");
        }
    }
}

#[test]
fn config_file_flag_precedence_and_unknown_keys() {
    let d = tmpdir("cfg");
    let cfg_path = d.join("run.cfg");
    std::fs::write(&cfg_path, "sigma-c = 0.4\nmu-c = 0.8\nlambda-self = 10\ncells-inner = 60\ncells-outer = 120\neps = 1e-8\n").unwrap();
    // Flag overrides the file's mu-c; provenance goes to stderr.
    let out = bin()
        .arg("solve")
        .args([
            "--config",
            cfg_path.to_str().unwrap(),
            "--mu-c",
            "1.2",
            "--out-dir",
            d.join("out").to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("mu-c = 1.2 (flag, overrides file value 0.8)"), "stderr: {err}");

    // Unknown keys are rejected with exit code 3.
    let bad = d.join("bad.cfg");
    std::fs::write(&bad, "sigma-c = 0.4\nmu-c = 1.0\nunknown-key = 7\n").unwrap();
    let out = bin()
        .arg("solve")
        .args(["--config", bad.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown-key"));
}

#[test]
fn out_of_range_eps_rejected_with_range_message() {
    let d = tmpdir("eps");
    let mut args = fast_args(&d);
    let pos = args.iter().position(|a| a == "1e-8").unwrap();
    args[pos] = "1e-6".into();
    let out = bin().arg("solve").args(&args).output().unwrap();
    assert_eq!(out.status.code(), Some(3));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("[1e-12, 1e-8]"), "message must name the accepted range: {err}");
}

#[test]
fn missing_required_params_is_config_error() {
    let out = bin().arg("solve").output().unwrap();
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn single_point_sweep_equals_solve() {
    let ds = tmpdir("sw1");
    let dp = tmpdir("sw2");
    let mut args = fast_args(&ds);
    args.extend([
        "--sweep-param".into(),
        "mu_c".into(),
        "--sweep-range".into(),
        "1.2:1.2".into(),
        "--sweep-count".into(),
        "1".into(),
    ]);
    let out = bin().arg("sweep").args(&args).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let out = bin().arg("solve").args(fast_args(&dp)).output().unwrap();
    assert!(out.status.success());

    // The sweep's single row agrees with the single solve.
    let sweep = std::fs::read_to_string(ds.join("sweep.csv")).unwrap();
    let row: Vec<&str> = sweep.lines().nth(1).unwrap().split(',').collect();
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dp.join("summary.json")).unwrap()).unwrap();
    let r_s_sweep: f64 = row[1].parse().unwrap();
    let m_sweep: f64 = row[4].parse().unwrap();
    assert_eq!(r_s_sweep, summary["R_s"].as_f64().unwrap());
    assert_eq!(m_sweep, summary["M"].as_f64().unwrap());
    assert_eq!(row[8], "true");
}

#[test]
fn pure_fermion_run_reports_absent_omega() {
    let d = tmpdir("pf");
    let out = bin()
        .arg("solve")
        .args([
            "--sigma-c", "0", "--mu-c", "1.0", "--cells-inner", "60", "--cells-outer", "120",
            "--eps", "1e-8", "--out-dir", d.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.join("summary.json")).unwrap()).unwrap();
    assert!(v["Omega"].is_null());
    assert_eq!(v["M_RB"].as_f64().unwrap(), 0.0);
}

#[test]
fn nonconvergence_exit_code_and_partial_diagnostics() {
    let d = tmpdir("fail");
    let mut args = fast_args(&d);
    args.extend(["--max-iter".into(), "2".into()]);
    let out = bin().arg("solve").args(&args).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.join("summary.json")).unwrap()).unwrap();
    assert_eq!(v["converged"].as_bool().unwrap(), false);
    assert!(v["residual_history"].is_array());
}
