use std::path::Path;
use std::process::{Command, Output};

use refprior::cli::{parse_run_output, validate_config, CommandResult};

fn refprior(dir: &Path, args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_refprior"));
    cmd.args(args).current_dir(dir).env_remove("REFPRIOR_THREADS");
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().unwrap()
}

fn write(dir: &Path, name: &str, body: &str) -> String {
    std::fs::write(dir.join(name), body).unwrap();
    name.to_string()
}

fn read_result(dir: &Path, prefix: &str) -> CommandResult {
    let text = std::fs::read_to_string(dir.join(format!("{prefix}.json"))).unwrap();
    let out = parse_run_output(&text).unwrap();
    // the echoed config validates again
    let echoed = serde_json::to_vec(&out.config).unwrap();
    assert_eq!(validate_config(&echoed).unwrap(), out.config);
    assert_eq!(out.version, env!("CARGO_PKG_VERSION"));
    out.result
}

/// `l` for the uniform prior restricted to `[lo, hi]` under α = ½, by Simpson's rule.
fn restricted_uniform_alpha_half(lo: f64, hi: f64) -> f64 {
    let g = |t: f64| (t * (1.0 - t)).powf(0.25);
    let n = 20_000;
    let h = (hi - lo) / n as f64;
    let mut s = g(lo) + g(hi);
    for i in 1..n {
        s += if i % 2 == 1 { 4.0 } else { 2.0 } * g(lo + i as f64 * h);
    }
    let partial = s * h / 3.0;
    let c = (2.0 * std::f64::consts::PI).powf(0.25) * 0.5f64.powf(-0.5);
    -4.0 * c * partial * (hi - lo).powf(-1.5)
}

#[test]
fn jeffreys_table_is_arcsine_density() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "j.json",
        r#"{"command": "jeffreys", "model": "bernoulli", "output": "jt"}"#,
    );
    let out = refprior(dir.path(), &["jeffreys", "--config", &cfg], &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("jt.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().collect();
    assert_eq!(rows[0], "theta,density");
    assert_eq!(rows.len(), 1002);
    for row in &rows[1..] {
        let (t, p) = row.split_once(',').unwrap();
        let (t, p): (f64, f64) = (t.parse().unwrap(), p.parse().unwrap());
        let oracle = 1.0 / (std::f64::consts::PI * (t * (1.0 - t)).sqrt());
        assert!((p - oracle).abs() <= 1e-8, "{t}: {p} vs {oracle}");
    }
    let CommandResult::Jeffreys { theta, .. } = read_result(dir.path(), "jt") else {
        panic!()
    };
    assert!((theta[0] - 0.001).abs() < 1e-15 && (theta[1000] - 0.999).abs() < 1e-15);
}

#[test]
fn converge_last_scaled_is_near_limit() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "c.json",
        r#"{"command": "converge", "model": "bernoulli", "prior": "uniform", "divergence": "alpha:a=0.5",
            "ks": [16, 64, 256, 1024, 4096], "seed": 1, "theta": [0.5], "sigma": 0.05, "n_samples": 2000}"#,
    );
    let out = refprior(
        dir.path(),
        &["converge", "--config", &cfg, "--output", "conv", "--threads", "1"],
        &[],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("conv.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("k,mi_raw,mi_shifted,scaled,limit,stderr"));
    let last: Vec<f64> = lines.last().unwrap().split(',').map(|v| v.parse().unwrap()).collect();
    assert_eq!(last[0], 4096.0);
    assert!(((last[3] - last[4]) / last[4]).abs() <= 0.05);
    let CommandResult::Converge { series, subgaussian } = read_result(dir.path(), "conv") else {
        panic!()
    };
    let rate = series.fitted_rate.unwrap();
    assert!((rate + 0.25).abs() < 0.05, "fitted rate {rate}");
    assert!(subgaussian.unwrap().passes);
}

#[test]
fn search_writes_sample_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "s.json",
        r#"{"command": "search", "model": "bernoulli", "divergence": "alpha:a=0.5", "family": "mean-beta:c=1.5",
            "grid_n": 512, "seed": 2, "n_samples": 100000}"#,
    );
    let out = refprior(
        dir.path(),
        &["search", "--config", &cfg, "--output", "fig"],
        &[("REFPRIOR_THREADS", "1")],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let CommandResult::Search {
        search, sample_files, ..
    } = read_result(dir.path(), "fig")
    else {
        panic!()
    };
    assert_eq!(sample_files.len(), search.maximizers.len() + 1);
    for name in &sample_files {
        let body = std::fs::read_to_string(dir.path().join(format!("fig_samples_{name}.csv"))).unwrap();
        assert_eq!(body.lines().count(), 100_001);
    }
    let csv = std::fs::read_to_string(dir.path().join("fig.csv")).unwrap();
    assert_eq!(csv.lines().count(), 513);
}

#[test]
fn config_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "bad.json",
        r#"{"command": "mi", "model": "bernoulli", "prior": "uniform", "divergence": "alpha:a=1.0", "ks": [4]}"#,
    );
    let out = refprior(dir.path(), &["mi", "--config", &cfg, "--output", "x"], &[]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("'seed'") && err.contains("open interval"), "{err}");
    assert!(!dir.path().join("x.json").exists());

    let out = refprior(dir.path(), &["mi", "--config", "missing.json"], &[]);
    assert_eq!(out.status.code(), Some(2));
    let out = refprior(dir.path(), &["sideways", "--config", &cfg], &[]);
    assert_eq!(out.status.code(), Some(2));
    let ok = write(dir.path(), "ok.json", r#"{"model": "bernoulli"}"#);
    let out = refprior(
        dir.path(),
        &["fisher", "--config", &ok, "--output", "f"],
        &[("REFPRIOR_THREADS", "many")],
    );
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn numeric_errors_exit_three_with_error_name() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "l.json",
        r#"{"command": "limit", "model": "bernoulli", "prior": "beta:a=0.1,b=0.1", "divergence": "alpha:a=0.5"}"#,
    );
    let out = refprior(dir.path(), &["limit", "--config", &cfg, "--output", "l"], &[]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("IntegrabilityError"));
}

#[test]
fn every_command_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let configs = [
        ("fisher", r#"{"model": "gauss-loc-scale", "theta": [0.0, 2.0]}"#),
        (
            "mi",
            r#"{"model": "binomial:n=3", "prior": "beta:a=2,b=2", "divergence": "kl", "ks": [1, 4], "seed": 1}"#,
        ),
        (
            "limit",
            r#"{"model": "gauss-loc:sigma=2", "prior": "uniform:lo=-1,hi=1", "divergence": "alpha:a=0.3"}"#,
        ),
        (
            "verify",
            r#"{"model": "bernoulli", "prior": "uniform", "divergence": "alpha:a=0.5", "family": "var-beta:V=0.05",
                "compact": [[0.05, 0.95]], "n_probe": 16}"#,
        ),
        (
            "diagnose",
            r#"{"model": "bernoulli", "divergence": "power:coeff=1,beta=-0.5", "theta": [0.3], "seed": 4}"#,
        ),
    ];
    for (command, body) in configs {
        let cfg = write(dir.path(), &format!("{command}.in"), body);
        let out = refprior(dir.path(), &[command, "--config", &cfg, "--output", command], &[]);
        assert!(
            out.status.success(),
            "{command}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
        let result = read_result(dir.path(), command);
        match (command, result) {
            ("fisher", CommandResult::Fisher { points }) => {
                assert!((points[0].matrix[0][0] - 0.25).abs() < 1e-9 && (points[0].matrix[1][1] - 0.5).abs() < 1e-9);
            }
            ("mi", CommandResult::Mi { estimates }) => assert!(estimates[1].value > estimates[0].value),
            ("limit", CommandResult::Limit { value, conditions, .. }) => {
                assert!(value < 0.0 && conditions.unwrap().all_ok());
            }
            ("verify", CommandResult::Verify { report }) => {
                assert!(report.passed() && report.probes == 16, "{report:?}");
                let oracle = restricted_uniform_alpha_half(0.05, 0.95);
                assert!(
                    (report.l_candidate - oracle).abs() < 1e-9,
                    "{} vs {oracle}",
                    report.l_candidate
                );
            }
            ("diagnose", CommandResult::Diagnose { conditions, .. }) => assert!(conditions.subgaussian.is_some()),
            (c, r) => panic!("{c} produced {r:?}"),
        }
    }
}
