//! Exit-code contract and output formats of the command-line tool.

use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

const SMALL: &[&str] = &["--n-modes", "64", "--grid", "256", "--time-samples", "32"];

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_travelling-string"))
        .args(args)
        .env_remove("TRAVELLING_STRING_OUT")
        .output()
        .expect("binary runs")
}

fn code(args: &[&str]) -> i32 {
    let out = run(args);
    out.status
        .code()
        .unwrap_or_else(|| panic!("terminated by signal: {out:?}"))
}

fn with_small(args: &[&str]) -> Vec<String> {
    args.iter().chain(SMALL).map(|s| s.to_string()).collect()
}

fn code_small(args: &[&str]) -> i32 {
    let v = with_small(args);
    code(&v.iter().map(String::as_str).collect::<Vec<_>>())
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("config.json");
    std::fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_string()
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r
        .records()
        .map(|rec| rec.unwrap().iter().map(String::from).collect())
        .collect();
    (header, rows)
}

#[test]
fn simulate_writes_energy_and_fields() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().to_str().unwrap();
    assert_eq!(
        code_small(&["simulate", "--L", "1", "--v", "0.3", "--eta", "0.5", "--out", out]),
        0
    );
    let (header, rows) = read_csv(&dir.path().join("energy.csv"));
    assert_eq!(header, ["t", "E", "calE", "S", "env_lo", "env_hi"]);
    assert_eq!(rows.len(), 32);
    for r in &rows {
        assert!(r[2].is_empty(), "calE only for eta = 0");
        assert!(r[3].parse::<f64>().is_ok(), "S populated for damped runs");
        let (lo, e, hi): (f64, f64, f64) = (
            r[4].parse().unwrap(),
            r[1].parse().unwrap(),
            r[5].parse().unwrap(),
        );
        assert!(lo <= e * 1.005 && e <= hi * 1.005);
    }
    let (header, slices) = read_csv(&dir.path().join("slices.csv"));
    assert_eq!(header, ["index", "t", "file"]);
    assert_eq!(slices.len(), 4);
    let (header, field) = read_csv(&dir.path().join(&slices[0][2]));
    assert_eq!(header, ["x", "phi", "phi_x", "phi_t"]);
    assert_eq!(field.len(), 257);
}

#[test]
fn simulate_undamped_populates_conserved_energy_only() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().to_str().unwrap();
    let args = [
        "simulate",
        "--L",
        "1",
        "--v",
        "0.2",
        "--eta",
        "0",
        "--out",
        out,
        "--slice-times",
        "0,0.5",
    ];
    assert_eq!(code_small(&args), 0);
    let (_, rows) = read_csv(&dir.path().join("energy.csv"));
    assert!(rows.iter().all(|r| !r[2].is_empty() && r[3].is_empty()));
    let (_, slices) = read_csv(&dir.path().join("slices.csv"));
    assert_eq!(slices.len(), 2);
}

#[test]
fn transparent_case_needs_characteristics() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().to_str().unwrap();
    let base = [
        "simulate", "--L", "1", "--v", "0.4", "--eta", "1", "--out", out,
    ];
    let spectral: Vec<&str> = base
        .iter()
        .copied()
        .chain(["--solver", "spectral"])
        .collect();
    let o = run(&with_small(&spectral)
        .iter()
        .map(String::as_str)
        .collect::<Vec<_>>());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("characteristics"));
    assert_eq!(code_small(&base), 0);
    let (_, rows) = read_csv(&dir.path().join("energy.csv"));
    assert!(rows.iter().all(|r| r[3].is_empty() && r[4].is_empty()));
}

#[test]
fn verify_reference_run_exits_zero() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().to_str().unwrap();
    assert_eq!(
        code(&["verify", "--L", "1", "--v", "0.3", "--eta", "0", "--out", out]),
        0
    );
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("report.json")).unwrap())
            .unwrap();
    assert_eq!(report["overall"], true);
    assert!(report["checks"].as_array().unwrap().len() > 10);
}

#[test]
fn verify_failing_check_exits_one() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"L": 1, "v": 0.2, "eta": 0.5, "numerics.parseval_tolerance": 1e-30}"#,
    );
    let out = dir.path().to_str().unwrap();
    assert_eq!(code_small(&["verify", "--config", &cfg, "--out", out]), 1);
}

#[test]
fn sweep_writes_csv() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().to_str().unwrap();
    let args = [
        "sweep",
        "--L",
        "1",
        "--v-values",
        "0,0.3",
        "--eta-values",
        "0.5,3",
        "--workers",
        "2",
        "--out",
        out,
    ];
    assert_eq!(code_small(&args), 0);
    let text = std::fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next(),
        Some("v,eta,theory_rate,fitted_rate,rel_rate_err,envelope_ok,M1,M2,runtime_s")
    );
    assert_eq!(lines.count(), 4);
}

#[test]
fn sweep_failing_cell_exits_one() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"L": 1, "sweep.v_values": [0.1], "sweep.eta_values": [0.5], "numerics.rate_tolerance": 1e-12}"#,
    );
    let out = dir.path().to_str().unwrap();
    assert_eq!(code_small(&["sweep", "--config", &cfg, "--out", out]), 1);
}

#[test]
fn observe_contract() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().to_str().unwrap();
    assert_eq!(
        code(&["observe", "--L", "1", "--v", "0.5", "--eta", "0", "--out", out]),
        0
    );
    let obs: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(dir.path().join("observability.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(obs["check"]["passed"], true);
    assert_eq!(
        code(&["observe", "--L", "1", "--v", "0", "--eta", "0", "--out", out]),
        2
    );
    assert_eq!(
        code(&["observe", "--L", "1", "--v", "0.5", "--eta", "0.5", "--out", out]),
        2
    );
}

#[test]
fn configuration_errors_exit_two() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().to_str().unwrap();
    for body in [
        "{ not json",
        r#"{"L": 1, "v": 0.2, "eta": 0.5, "numerics.modes": 3}"#,
        r#"{"L": 1, "v": 1.2, "eta": 0.5}"#,
        r#"{"L": 1, "v": 0.2}"#,
        r#"{"L": 1, "v": 0.2, "eta": "high"}"#,
    ] {
        let cfg = write_config(dir.path(), body);
        let o = run(&["verify", "--config", &cfg, "--out", out]);
        assert_eq!(
            o.status.code(),
            Some(2),
            "{body}: {}",
            String::from_utf8_lossy(&o.stderr)
        );
    }
    assert_eq!(code(&["verify", "--config", "/nonexistent.json"]), 2);
    assert_eq!(
        code(&["verify", "--L", "1", "--v", "-0.1", "--eta", "0"]),
        2
    );
    assert_eq!(
        code(&["verify", "--L", "1", "--v", "0.1", "--eta", "0", "--preset", "square"]),
        2
    );
    assert_eq!(code(&["frobnicate"]), 2);
    assert_eq!(code(&["--help"]), 0);
}

#[test]
fn distinct_config_diagnostics() {
    let dir = TempDir::new().unwrap();
    let mut messages = Vec::new();
    for body in [
        "{ not json",
        r#"{"L": 1, "v": 0.2, "eta": 0.5, "bogus": 3}"#,
        r#"{"L": 1, "v": 1.2, "eta": 0.5}"#,
        r#"{"L": 1, "v": 0.2}"#,
    ] {
        let cfg = write_config(dir.path(), body);
        let o = run(&["verify", "--config", &cfg]);
        messages.push(
            String::from_utf8_lossy(&o.stderr)
                .lines()
                .next()
                .unwrap_or("")
                .split(':')
                .next()
                .unwrap()
                .to_string(),
        );
    }
    let stderr_first: Vec<&str> = messages.iter().map(String::as_str).collect();
    assert_eq!(stderr_first, ["error", "error", "error", "error"]);
    let full: Vec<String> = [
        "{ not json",
        r#"{"bogus": 1}"#,
        r#"{"L": 1, "v": 1.2, "eta": 0.5}"#,
        r#"{"L": 1, "v": 0.2}"#,
    ]
    .iter()
    .map(|body| {
        let cfg = write_config(dir.path(), body);
        String::from_utf8_lossy(&run(&["verify", "--config", &cfg]).stderr).to_string()
    })
    .collect();
    assert!(full[0].contains("malformed config"));
    assert!(full[1].contains("unknown config key \"bogus\""));
    assert!(full[2].contains("0 <= v < 1"));
    assert!(full[3].contains("missing required setting eta"));
}

#[test]
fn flags_override_config_file() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), r#"{"L": 1, "v": 1.5, "eta": 0.5}"#);
    let out = dir.path().to_str().unwrap();
    assert_eq!(
        code_small(&["simulate", "--config", &cfg, "--v", "0.1", "--out", out]),
        0
    );
}

#[test]
fn numerical_failure_exits_three() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"L": 1, "v": 0.3, "eta": 3, "numerics.residue_tolerance": 1e-300}"#,
    );
    let out = dir.path().to_str().unwrap();
    let o = run(&with_small(&["simulate", "--config", &cfg, "--out", out])
        .iter()
        .map(String::as_str)
        .collect::<Vec<_>>());
    assert_eq!(
        o.status.code(),
        Some(3),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
}

#[test]
fn data_file_input() {
    let dir = TempDir::new().unwrap();
    let data = dir.path().join("data.csv");
    let mut text = String::from("x,phi0,phi1\n");
    for j in 0..=200 {
        let x = j as f64 / 200.0;
        text.push_str(&format!(
            "{x},{},{}\n",
            (std::f64::consts::FRAC_PI_2 * x).cos(),
            0.0
        ));
    }
    std::fs::write(&data, text).unwrap();
    let out = dir.path().join("out");
    let (d, o) = (data.to_str().unwrap(), out.to_str().unwrap());
    assert_eq!(
        code_small(&["simulate", "--L", "1", "--v", "0", "--eta", "0.5", "--data", d, "--out", o]),
        0
    );
    // data cover [0, 1] but L = 2
    assert_eq!(
        code_small(&["simulate", "--L", "2", "--v", "0", "--eta", "0.5", "--data", d, "--out", o]),
        2
    );
    std::fs::write(&data, "s,u0,u1\n0,1,0\n").unwrap();
    assert_eq!(
        code_small(&["simulate", "--L", "1", "--v", "0", "--eta", "0.5", "--data", d, "--out", o]),
        2
    );
}

#[test]
fn output_directory_from_environment() {
    let dir = TempDir::new().unwrap();
    let status = Command::new(env!("CARGO_BIN_EXE_travelling-string"))
        .args(with_small(&[
            "simulate", "--L", "1", "--v", "0.1", "--eta", "0.5",
        ]))
        .env("TRAVELLING_STRING_OUT", dir.path())
        .output()
        .unwrap();
    assert_eq!(status.status.code(), Some(0));
    assert!(dir.path().join("energy.csv").exists());
}

#[test]
fn csv_outputs_are_column_stable() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    for d in [&a, &b] {
        assert_eq!(
            code_small(&[
                "simulate",
                "--L",
                "1",
                "--v",
                "0.25",
                "--eta",
                "3",
                "--out",
                d.path().to_str().unwrap()
            ]),
            0
        );
    }
    for name in ["energy.csv", "field_002.csv", "slices.csv"] {
        let x = std::fs::read_to_string(a.path().join(name)).unwrap();
        let y = std::fs::read_to_string(b.path().join(name)).unwrap();
        assert_eq!(x, y, "{name} differs between runs");
    }
}
