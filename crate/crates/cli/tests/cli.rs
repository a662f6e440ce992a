//! End-to-end tests for the `heatbeam` binary: exit codes, byte-stable
//! artifacts, and the simulate/verify round trip.

use std::path::PathBuf;
use std::process::{Command, Output};

fn heatbeam(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_heatbeam"))
        .args(args)
        .output()
        .expect("binary launches")
}

fn tmp_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("heatbeam-cli-{}-{tag}", std::process::id()));
    if dir.exists() {
        std::fs::remove_dir_all(&dir).expect("stale test dir removed");
    }
    std::fs::create_dir_all(&dir).expect("test dir created");
    dir
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

const FAST_STATIC: &str = "\
[grid]
n = 8
[time]
dt = 0.001
T = 0.2
record_every = 10
[controller]
kind = \"static\"
xi1 = 1.0
xi2 = 1.0
[initial]
z0 = \"sine(1)\"
v1 = \"gaussian(0.5, 0.2)\"
[output]
snapshots = true
";

#[test]
fn constants_prints_the_canonical_table() {
    let out = heatbeam(&["constants"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let text = stdout(&out);
    for line in [
        "a1 = 12",
        "M = 24",
        "delta_star = 0.020833333333333332",
        "sigma_max = 0.08333333333333333",
        "delta_star_attainable = true",
    ] {
        assert!(text.contains(line), "missing `{line}` in:\n{text}");
    }
}

#[test]
fn simulate_twice_produces_byte_identical_artifacts() {
    let dir = tmp_dir("determinism");
    let cfg = dir.join("run.toml");
    std::fs::write(&cfg, FAST_STATIC).unwrap();
    let cfg = cfg.to_str().unwrap();
    let (a, b) = (dir.join("a"), dir.join("b"));
    for out_dir in [&a, &b] {
        let out = heatbeam(&[
            "simulate",
            "--config",
            cfg,
            "--out",
            out_dir.to_str().unwrap(),
            "--quiet",
        ]);
        assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
        assert!(stdout(&out).is_empty(), "--quiet must silence progress");
    }
    for name in ["timeseries.csv", "report.txt", "states.csv"] {
        let lhs = std::fs::read(a.join(name)).unwrap();
        let rhs = std::fs::read(b.join(name)).unwrap();
        assert_eq!(lhs, rhs, "{name} differs between identical runs");
    }
}

#[test]
fn simulate_then_verify_agree_on_the_same_directory() {
    let dir = tmp_dir("roundtrip");
    let cfg = dir.join("run.toml");
    std::fs::write(&cfg, FAST_STATIC).unwrap();
    let run = dir.join("run");
    let out = heatbeam(&[
        "simulate",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        run.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let simulate_lines: Vec<String> = stdout(&out)
        .lines()
        .filter(|l| l.contains(" = PASS") || l.contains(" = FAIL"))
        .map(str::to_owned)
        .collect();
    assert!(!simulate_lines.is_empty());

    let out = heatbeam(&["verify", "--out", run.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let text = stdout(&out);
    let verify_lines: Vec<String> = text
        .lines()
        .filter(|l| l.contains(" = PASS") || l.contains(" = FAIL"))
        .map(str::to_owned)
        .collect();
    assert_eq!(simulate_lines, verify_lines, "verdicts must be identical");
    assert!(text.contains("stored verdicts match recomputation: yes"));
}

#[test]
fn static_runs_leave_controller_columns_empty() {
    let dir = tmp_dir("columns");
    let cfg = dir.join("run.toml");
    std::fs::write(&cfg, FAST_STATIC).unwrap();
    let run = dir.join("run");
    let out = heatbeam(&[
        "simulate",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        run.to_str().unwrap(),
        "--quiet",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let csv = std::fs::read_to_string(run.join("timeseries.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "t,E_h,E_hybrid,L_h,w1_end,w2_end,q_norm,dissipation_residual"
    );
    let first: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(first.len(), 8);
    assert!(first[2].is_empty(), "E_hybrid must be empty for static laws");
    assert!(first[6].is_empty(), "q_norm must be empty for static laws");
    assert!(!first[3].is_empty(), "L_h must be filled");
}

#[test]
fn hybrid_without_certificate_is_solved_and_recorded() {
    let dir = tmp_dir("hybrid");
    let cfg = dir.join("run.toml");
    std::fs::write(
        &cfg,
        "[grid]\nn = 8\n[time]\ndt = 0.001\nT = 0.2\nrecord_every = 10\n\
         [controller]\nkind = \"hybrid\"\nxi1 = 1.0\na = [[-2.0]]\nb = [1.0]\nc = [1.0]\nd = 1.0\n\
         [initial]\np1 = \"sine(1)\"\nv1 = \"sine(1)\"\n",
    )
    .unwrap();
    let run = dir.join("run");
    let out = heatbeam(&[
        "simulate",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        run.to_str().unwrap(),
        "--quiet",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert!(run.join("certificate.txt").exists());
    let csv = std::fs::read_to_string(run.join("timeseries.csv")).unwrap();
    let first: Vec<&str> = csv.lines().nth(1).unwrap().split(',').collect();
    assert!(!first[2].is_empty(), "E_hybrid must be filled for dynamic laws");
    assert!(!first[6].is_empty(), "q_norm must be filled for dynamic laws");

    let out = heatbeam(&["verify", "--out", run.to_str().unwrap(), "--quiet"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
}

#[test]
fn scalar_controller_yields_the_unit_certificate() {
    let dir = tmp_dir("scalar-cert");
    let cfg = dir.join("ctrl.toml");
    std::fs::write(
        &cfg,
        "[controller]\nkind = \"scalar\"\nxi1 = 1.0\nxi2 = 1.0\n",
    )
    .unwrap();
    let out_dir = dir.join("ctrl");
    let out = heatbeam(&[
        "check-controller",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let cert = std::fs::read_to_string(out_dir.join("certificate.txt")).unwrap();
    let unit = "1.0000000000000000e0";
    for section in ["P", "q1", "delta", "Q"] {
        let value = cert
            .lines()
            .skip_while(|l| *l != section)
            .nth(1)
            .unwrap_or_else(|| panic!("certificate lacks section {section}:\n{cert}"));
        assert_eq!(value, unit, "{section} should be the unit value");
    }
    let assumptions = std::fs::read_to_string(out_dir.join("assumptions.txt")).unwrap();
    assert!(assumptions.contains("pass = true"), "{assumptions}");
}

#[test]
fn unknown_keys_and_bad_gains_exit_with_code_2() {
    let dir = tmp_dir("badcfg");
    let unknown = dir.join("unknown.toml");
    std::fs::write(&unknown, "[grid]\nm = 3\n").unwrap();
    let out = heatbeam(&["simulate", "--config", unknown.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
    assert!(stderr(&out).contains("unknown field"), "{}", stderr(&out));

    let zero_gain = dir.join("gain.toml");
    std::fs::write(&zero_gain, "[controller]\nkind = \"static\"\nxi1 = 0.0\n").unwrap();
    let out = heatbeam(&["simulate", "--config", zero_gain.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
    assert!(stderr(&out).contains("xi1"), "{}", stderr(&out));

    let bad_delta = dir.join("delta.toml");
    std::fs::write(&bad_delta, "[lyapunov]\ndelta = \"soon\"\n").unwrap();
    let out = heatbeam(&["simulate", "--config", bad_delta.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
}

#[test]
fn failed_assumptions_exit_with_code_3() {
    let dir = tmp_dir("assumptions");
    let cfg = dir.join("unstable.toml");
    std::fs::write(
        &cfg,
        "[controller]\nkind = \"hybrid\"\nxi1 = 1.0\na = [[1.0]]\nb = [1.0]\nc = [1.0]\nd = 1.0\n",
    )
    .unwrap();
    let out = heatbeam(&[
        "simulate",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        dir.join("run").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(3), "{}", stderr(&out));

    let out = heatbeam(&[
        "check-controller",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        dir.join("ctrl").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(3), "{}", stderr(&out));
}

#[test]
fn tampered_artifacts_exit_with_code_4() {
    let dir = tmp_dir("tamper");
    let cfg = dir.join("run.toml");
    std::fs::write(&cfg, FAST_STATIC).unwrap();
    let run = dir.join("run");
    let out = heatbeam(&[
        "simulate",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        run.to_str().unwrap(),
        "--quiet",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));

    let report_path = run.join("report.txt");
    let report = std::fs::read_to_string(&report_path).unwrap();
    std::fs::write(
        &report_path,
        report.replace("decay_envelope = PASS", "decay_envelope = FAIL"),
    )
    .unwrap();
    let out = heatbeam(&["verify", "--out", run.to_str().unwrap(), "--quiet"]);
    assert_eq!(out.status.code(), Some(4), "{}", stderr(&out));
    assert!(stderr(&out).contains("do not match"), "{}", stderr(&out));
}

#[test]
fn verify_on_a_missing_directory_exits_with_code_2() {
    let dir = tmp_dir("missing");
    let out = heatbeam(&["verify", "--out", dir.join("absent").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
}

#[test]
fn tune_attains_the_rate_ceiling_on_canonical_params() {
    let dir = tmp_dir("tune");
    let cfg = dir.join("tune.toml");
    std::fs::write(&cfg, "[tune]\nxi1 = [0.5, 2.0]\nxi2 = [0.5, 2.0]\nresolution = 3\n").unwrap();
    let run = dir.join("run");
    let out = heatbeam(&[
        "tune",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        run.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let report = std::fs::read_to_string(run.join("tune.txt")).unwrap();
    assert!(report.contains("ceiling_attained = true"), "{report}");
    assert!(
        report.contains("best_sigma = 8.3333333333333329e-2"),
        "{report}"
    );
    let table = std::fs::read_to_string(run.join("tune.csv")).unwrap();
    assert_eq!(table.lines().next().unwrap(), "xi1,xi2,delta,sigma");
    assert_eq!(table.lines().count(), 10, "header plus nine evaluations");
}
