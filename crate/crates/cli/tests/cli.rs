use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

use modspace::catalog::Builtin;
use modspace::grid::GridSpec;
use modspace::io::load_field;

fn modspace(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_modspace"))
        .arg("--out")
        .arg(out)
        .args(args)
        .output()
        .unwrap()
}

fn json_file(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn norm_prints_a_record() {
    let dir = tempfile::tempdir().unwrap();
    let out = modspace(dir.path(), &["norm", "--fn", "gaussian", "--p", "2", "--q", "2", "--n", "256", "--L", "16"]);
    assert!(out.status.success());
    let record: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(record["N"], 256);
    assert_eq!(record["L"], 16.0);
    assert!((record["value"].as_f64().unwrap() - 0.5f64.sqrt()).abs() < 1e-6);
    assert_eq!(record, json_file(&dir.path().join("norm.json")));
    let manifest = json_file(&dir.path().join("manifest.json"));
    assert_eq!(manifest["status"], "ok");
    assert_eq!(manifest["outputs"][0], "norm.json");
}

#[test]
fn infinite_exponents_are_accepted() {
    let dir = tempfile::tempdir().unwrap();
    let out = modspace(dir.path(), &["norm", "--p", "inf", "--q", "1", "--n", "128", "--L", "16"]);
    assert!(out.status.success());
    let record: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(record["p"], "inf");
}

#[test]
fn propagate_at_time_zero_is_the_identity() {
    let dir = tempfile::tempdir().unwrap();
    let out = modspace(dir.path(), &["propagate", "--kind", "schrodinger", "--t", "0", "--fn", "gaussian"]);
    assert!(out.status.success());
    let field = load_field(&dir.path().join("output.bin")).unwrap();
    let input = Builtin::gaussian().sample(&GridSpec::new(1, 512, 32.0).unwrap()).unwrap();
    assert!(field.max_abs_diff(&input).unwrap() <= 1e-12);
    let csv = std::fs::read_to_string(dir.path().join("output.csv")).unwrap();
    assert!(csv.starts_with("index,x,re,im\n"));
}

#[test]
fn propagate_reads_containers() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("first");
    assert!(modspace(&first, &["propagate", "--kind", "schrodinger", "--t", "0.3", "--n", "128", "--L", "16"]).status.success());
    let second = dir.path().join("second");
    let input = first.join("output.bin");
    let out = modspace(&second, &["propagate", "--kind", "schrodinger", "--t", "-0.3", "--input", input.to_str().unwrap()]);
    assert!(out.status.success());
    let back = load_field(&second.join("output.bin")).unwrap();
    let g = Builtin::gaussian().sample(&GridSpec::new(1, 128, 16.0).unwrap()).unwrap();
    assert!(back.max_abs_diff(&g).unwrap() < 1e-12);
}

#[test]
fn usage_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = modspace(dir.path(), &["norm", "--bogus"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
    let out = modspace(dir.path(), &["verify", "--suite", "nope"]);
    assert_eq!(out.status.code(), Some(1));
    let out = modspace(dir.path(), &["norm", "--n", "100"]);
    assert_eq!(out.status.code(), Some(1));
    let out = modspace(dir.path(), &["frobnicate"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn help_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let out = modspace(dir.path(), &["solve", "--help"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("--t-end"));
}

#[test]
fn non_finite_input_exits_two_with_stage() {
    let dir = tempfile::tempdir().unwrap();
    let out = modspace(dir.path(), &["norm", "--scale", "nan", "--n", "64", "--L", "8"]);
    assert_eq!(out.status.code(), Some(2));
    let manifest = json_file(&dir.path().join("manifest.json"));
    assert_eq!(manifest["status"], "error");
    assert_eq!(manifest["exit_code"], 2);
    assert_eq!(manifest["failing_stage"], "sampling");
}

#[test]
fn diverging_solve_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = modspace(
        dir.path(),
        &["solve", "--scale", "20", "--n", "128", "--L", "16", "--t-end", "1", "--dt", "0.01", "--c1", "1e-6"],
    );
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(json_file(&dir.path().join("manifest.json"))["failing_stage"], "solve");
}

#[test]
fn solve_writes_series_and_snapshots() {
    let dir = tempfile::tempdir().unwrap();
    let out = modspace(
        dir.path(),
        &[
            "solve", "--eq", "nls", "--nonlinearity", "cubic", "--u0", "gaussian", "--scale", "0.1", "--n", "128",
            "--L", "16", "--t-end", "0.02", "--dt", "0.01", "--snapshots", "2",
        ],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("solve.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("t,mod_norm,L2_norm,T_window,contraction_factor"));
    let rows: Vec<Vec<f64>> = lines.map(|l| l.split(',').map(|v| v.parse().unwrap()).collect()).collect();
    assert_eq!(rows[0][0], 0.0);
    assert_eq!(rows.last().unwrap()[0], 0.02);
    assert!(rows.iter().all(|r| r.len() == 5 && r[3] > 0.0 && r[4] <= 0.55));
    let summary = json_file(&dir.path().join("solve.json"));
    assert_eq!(summary["termination"]["status"], "reached");
    assert_eq!(summary["c1_measured"], true);
    let last = rows.len() - 1;
    assert!(dir.path().join(format!("snapshots/u_{last:06}.bin")).exists());
    assert!(dir.path().join("snapshots/u_000000.bin").exists());
}

#[test]
fn second_order_solve_with_custom_series() {
    let dir = tempfile::tempdir().unwrap();
    let series = dir.path().join("f.json");
    // F(s, t) = s^3: real cubic.
    std::fs::write(&series, r#"{"coeffs": [[3, 0, 1.0, 0.0]]}"#).unwrap();
    let out = modspace(
        &dir.path().join("out"),
        &[
            "solve", "--eq", "nlkg", "--nonlinearity", series.to_str().unwrap(), "--u1", "gaussian", "--scale", "0.1",
            "--n", "128", "--L", "16", "--t-end", "0.02", "--dt", "0.01", "--c1", "1.5",
        ],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary = json_file(&dir.path().join("out/solve.json"));
    assert_eq!(summary["equation"], "nlkg");
    assert_eq!(summary["c1"], 1.5);
    assert_eq!(summary["c1_measured"], false);
}

#[test]
fn unknown_nonlinearity_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = modspace(dir.path(), &["solve", "--nonlinearity", "septic", "--n", "64", "--L", "8"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn stft_writes_csv_and_spectrogram() {
    let dir = tempfile::tempdir().unwrap();
    let out = modspace(dir.path(), &["stft", "--fn", "triangle", "--n", "64", "--L", "8"]);
    assert!(out.status.success());
    let csv = std::fs::read_to_string(dir.path().join("stft.csv")).unwrap();
    assert!(csv.starts_with("w,x,abs\n"));
    assert_eq!(csv.lines().count(), 64 * 64 + 1);
    let svg = std::fs::read_to_string(dir.path().join("stft.svg")).unwrap();
    assert!(svg.starts_with("<svg"));
}

#[test]
fn probe_single_family() {
    let dir = tempfile::tempdir().unwrap();
    let out = modspace(
        dir.path(),
        &["probe", "--kind", "kg_cosine", "--t-grid", "0,1", "--n", "128", "--L", "16", "--battery-size", "4"],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("probe_kg_cosine.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("t,ratio,normalized_ratio"));
    assert_eq!(csv.lines().count(), 3);
    let summary = json_file(&dir.path().join("probe.json"));
    assert_eq!(summary.as_array().unwrap().len(), 1);
    assert!((summary[0]["rows"][0]["ratio"].as_f64().unwrap() - 1.0).abs() < 1e-12);
}

#[test]
fn verify_algebra_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let args = ["verify", "--suite", "algebra", "--seed", "7", "--n", "256", "--L", "16", "--battery-size", "8"];
    assert!(modspace(&a, &args).status.success());
    assert!(modspace(&b, &args).status.success());
    let ra = std::fs::read(a.join("reports.json")).unwrap();
    assert_eq!(ra, std::fs::read(b.join("reports.json")).unwrap());
    let reports: Value = serde_json::from_slice(&ra).unwrap();
    assert_eq!(reports[0]["name"], "algebra_p1_q1_s0");
    assert_eq!(reports[1]["status"], "outside_hypothesis");
    for name in reports[0]["artifacts"].as_array().unwrap() {
        assert!(a.join("artifacts").join(name.as_str().unwrap()).exists());
    }
    assert!(a.join("battery.csv").exists());
}

#[test]
fn config_file_supplies_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("run.json");
    std::fs::write(&config, r#"{"fn": "triangle", "n": 128, "L": 16, "p": 2}"#).unwrap();
    let out = modspace(&dir.path().join("out"), &["--config", config.to_str().unwrap(), "norm", "--p", "1"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let record: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(record["N"], 128);
    assert_eq!(record["p"], 1.0);
    let manifest = json_file(&dir.path().join("out/manifest.json"));
    assert_eq!(manifest["config"]["command"]["field"]["fn"], "triangle");
}

#[test]
fn output_directory_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_modspace"))
        .env("MODSPACE_OUT", dir.path())
        .args(["norm", "--n", "64", "--L", "8"])
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(dir.path().join("norm.json").exists());
    assert!(dir.path().join("manifest.json").exists());
}

#[test]
fn thread_cap_is_accepted() {
    let dir = tempfile::tempdir().unwrap();
    let out = modspace(dir.path(), &["--threads", "1", "norm", "--n", "64", "--L", "8"]);
    assert!(out.status.success());
    assert_eq!(json_file(&dir.path().join("manifest.json"))["config"]["threads"], 1);
}
