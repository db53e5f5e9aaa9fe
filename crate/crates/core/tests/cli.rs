use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use cbe_core::model::InitialCondition;
use tempfile::TempDir;

fn cbe(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cbe"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn run_into(dir: &Path, args: &[&str]) {
    let mut all = vec!["run"];
    all.extend_from_slice(args);
    all.extend_from_slice(&["--out", dir.to_str().unwrap()]);
    let out = cbe(&all);
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

/// Data rows of a CSV written by the tool, split into fields.
fn rows(path: &Path) -> Vec<Vec<String>> {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("# cbe-output/"));
    lines.next().unwrap();
    lines
        .map(|l| l.split(',').map(str::to_owned).collect())
        .collect()
}

fn f(s: &str) -> f64 {
    s.parse().unwrap()
}

#[test]
fn case_one_density_contains_probe_row() {
    let dir = TempDir::new().unwrap();
    run_into(dir.path(), &["--case", "1"]);
    let rows = rows(&dir.path().join("density.csv"));
    let row = rows
        .iter()
        .find(|r| f(&r[0]) == 0.9 && f(&r[1]) == 6.0)
        .expect("row at tau = 0.9, n = 6");
    assert!((f(&row[3]) - 4.042e-5).abs() < 5e-9, "reference {}", row[3]);
    assert!((f(&row[4]) - (f(&row[2]) - f(&row[3])).abs()).abs() < 1e-18);
    for name in [
        "moments.csv",
        "error_vs_k.csv",
        "diagnostics.csv",
        "manifest.toml",
    ] {
        assert!(dir.path().join(name).exists(), "{name} missing");
    }
}

#[test]
fn order_zero_reproduces_initial_condition() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("k0.toml");
    fs::write(
        &cfg,
        "case = 5\norder = 0\nfvm = false\nerror_orders = [0]\n",
    )
    .unwrap();
    run_into(
        &dir.path().join("out"),
        &["--config", cfg.to_str().unwrap()],
    );
    let rows = rows(&dir.path().join("out/density.csv"));
    assert!(!rows.is_empty());
    for r in &rows {
        let n = f(&r[1]);
        assert_eq!(f(&r[2]), InitialCondition::Gaussian.eval(n), "n = {n}");
        assert_eq!(r[3], "NaN");
    }
}

#[test]
fn case_six_initial_mass() {
    let dir = TempDir::new().unwrap();
    run_into(dir.path(), &["--case", "6"]);
    let rows = rows(&dir.path().join("moments.csv"));
    let row = rows
        .iter()
        .find(|r| f(&r[0]) == 0.0 && r[1] == "1")
        .unwrap();
    assert!((f(&row[2]) - 6.0).abs() <= 1e-6, "epdtm {}", row[2]);
    assert!((f(&row[3]) - 6.0).abs() <= 1e-6, "reference {}", row[3]);
}

fn deterministic_part(dir: &Path, name: &str) -> String {
    let text = fs::read_to_string(dir.join(name)).unwrap();
    if name != "error_vs_k.csv" {
        return text;
    }
    // wall-clock column varies between runs
    text.lines()
        .map(|l| l.rsplit_once(',').map_or(l, |(head, _)| head).to_owned())
        .collect::<Vec<_>>()
        .join("\n")
}

const CSV: [&str; 4] = [
    "density.csv",
    "moments.csv",
    "error_vs_k.csv",
    "diagnostics.csv",
];

#[test]
fn identical_configs_give_identical_tables() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    run_into(a.path(), &["--case", "4"]);
    run_into(b.path(), &["--case", "4", "--threads", "2"]);
    for name in CSV {
        assert_eq!(
            deterministic_part(a.path(), name),
            deterministic_part(b.path(), name),
            "{name}"
        );
    }
}

#[test]
fn manifest_round_trips() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    let cfg = a.path().join("custom.toml");
    fs::write(
        &cfg,
        "case = 3\ncells = 96\norder = 4\ntimes = [0.0, 0.2, 0.4]\nprobe_n = 2.5\nfvm_cells = 64\nfvm_dt = 0.002\n",
    )
    .unwrap();
    run_into(
        &a.path().join("first"),
        &["--config", cfg.to_str().unwrap()],
    );
    let manifest = a.path().join("first/manifest.toml");
    run_into(b.path(), &["--config", manifest.to_str().unwrap()]);
    for name in CSV {
        assert_eq!(
            deterministic_part(&a.path().join("first"), name),
            deterministic_part(b.path(), name),
            "{name}"
        );
    }
}

#[test]
fn list_prints_six_presets() {
    let out = cbe(&["list"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), 6);
    assert!(rows[0].contains("binary") && rows[0].contains("exponential"));
    assert!(rows[3].contains("3 daughters"));
}

#[test]
fn exit_codes() {
    let dir = TempDir::new().unwrap();
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "case = 2\nfvm_dt = -1.0\n").unwrap();
    let out = cbe(&[
        "run",
        "--config",
        bad.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("config stage"));
    assert!(!dir.path().join("density.csv").exists());

    let missing = cbe(&["run", "--config", "/nonexistent/run.toml"]);
    assert_eq!(missing.status.code(), Some(2));

    let stiff = dir.path().join("stiff.toml");
    fs::write(
        &stiff,
        "case = 1\nfvm = true\nfvm_dt = 0.5\nkernel_scale = 1e12\n",
    )
    .unwrap();
    let out = cbe(&[
        "run",
        "--config",
        stiff.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(
        out.status.code(),
        Some(3),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );

    assert_eq!(cbe(&["run", "--case", "0"]).status.code(), Some(2));
}
