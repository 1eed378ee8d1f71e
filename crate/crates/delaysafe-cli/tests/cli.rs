use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn scenario() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios/stabilize.toml")
}

fn out_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("delaysafe-cli-{}-{tag}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    dir
}

fn delaysafe(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_delaysafe"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

#[test]
fn run_writes_telemetry_and_passes_checks() {
    let out = out_dir("run");
    let s = scenario();
    let res = delaysafe(
        &["run", "--scenario", s.to_str().unwrap(), "--controller", "adaptive", "--tfinal", "8", "--checks", "residuals,decay,cbf"],
        &out,
    );
    assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));
    let csv = std::fs::read_to_string(out.join("stabilize_adaptive_stabilize.csv")).unwrap();
    let header = csv.lines().next().unwrap();
    assert!(header.starts_with("t,"));
    assert!(csv.lines().count() > 8000);
    let summary = std::fs::read_to_string(out.join("stabilize_adaptive_summary.txt")).unwrap();
    assert_eq!(summary, String::from_utf8_lossy(&res.stdout));
    assert!(!summary.contains("FAIL"));
    std::fs::remove_dir_all(&out).unwrap();
}

#[test]
fn compare_tabulates_every_controller() {
    let out = out_dir("compare");
    let s = scenario();
    let res = delaysafe(&["compare", "--scenario", s.to_str().unwrap(), "--tfinal", "4"], &out);
    assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));
    let table = String::from_utf8_lossy(&res.stdout);
    for name in ["nominal", "adaptive", "uncompensated"] {
        assert!(table.contains(name), "{table}");
    }
    assert!(out.join("stabilize_compare.csv").exists());
    assert!(out.join("stabilize_compare_summary.txt").exists());
    std::fs::remove_dir_all(&out).unwrap();
}

#[test]
fn unknown_controller_is_a_usage_error() {
    let out = out_dir("usage");
    let s = scenario();
    let res = delaysafe(&["run", "--scenario", s.to_str().unwrap(), "--controller", "optimal"], &out);
    assert_eq!(res.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&res.stderr).contains("unknown controller"));
    assert!(!out.exists());
}

#[test]
fn missing_scenario_file_is_reported() {
    let out = out_dir("missing");
    let res = delaysafe(&["run", "--scenario", "no/such/file.toml", "--controller", "nominal"], &out);
    assert_eq!(res.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&res.stderr).contains("no/such/file.toml"));
}

#[test]
fn invalid_numerics_are_rejected() {
    let out = out_dir("numerics");
    let s = scenario();
    let res = delaysafe(&["run", "--scenario", s.to_str().unwrap(), "--controller", "nominal", "--dt", "-1"], &out);
    assert_eq!(res.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&res.stderr).starts_with("error:"));
}
