use dotlab::grid::Grid;
use dotlab::io::read_dtn;
use std::path::Path;
use std::process::{Command, Output};
use std::time::{Duration, Instant};

const SMALL: &str = r#"
k = [1.0, 2.0, 4.0]
t_cut_min = 4.0
mode_budget = 24
[grid]
n = 3
N = 16
R_box = 2.0
L_Omega = 0.75
R = 1.6
"#;

const EMPTY_N8: &str = r#"
k = [1.0]
[grid]
n = 3
N = 8
R_box = 2.0
L_Omega = 0.5
R = 1.4
[phantom1]
bumps = []
[phantom2]
bumps = []
"#;

fn run(dir: &Path, config: &str, args: &[&str]) -> Output {
    let path = dir.join("run.toml");
    std::fs::write(&path, config).unwrap();
    Command::new(env!("CARGO_BIN_EXE_dotlab"))
        .arg("--config")
        .arg(&path)
        .args(args)
        .args(["--set", &format!("output=\"{}\"", dir.join("out").display())])
        .output()
        .unwrap()
}

fn identical(config: &str) -> String {
    format!("{config}\n[phantom2]\n[[phantom2.bumps]]\ncenter = [0.1, 0.0, 0.0]\nradius = 0.4\namplitude = 0.5\ntarget = \"gamma\"\n")
}

#[test]
fn identical_phantoms_give_zero_gap() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &identical(SMALL), &["dtn", "--set", "sigma=0.0", "--set", "k=[1.0]"]);
    assert_eq!(out.status.code(), Some(1), "{}", String::from_utf8_lossy(&out.stderr));
    let (_, gap) = read_dtn(dir.path().join("out/dtn_gap_k1.bin")).unwrap();
    assert!(gap.entries.iter().all(|v| *v == 0.0));
}

#[test]
fn dtn_output_is_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        assert!(run(d.path(), SMALL, &["dtn", "--set", "k=[1.0]"]).status.success());
    }
    let read = |d: &tempfile::TempDir| std::fs::read(d.path().join("out/dtn_gap_k1.bin")).unwrap();
    assert_eq!(read(&a), read(&b));
}

#[test]
fn sweep_flags_identical_data() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &identical(SMALL), &["sweep"]);
    assert_eq!(out.status.code(), Some(1));
    let csv = std::fs::read_to_string(dir.path().join("out/sweep.csv")).unwrap();
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("out/manifest.json")).unwrap()).unwrap();
    assert_eq!(csv.lines().count(), 4);
    for row in manifest["rows"].as_array().unwrap() {
        assert_eq!(row["status"], "identical_data");
    }
}

#[test]
fn sweep_is_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        run(d.path(), SMALL, &["sweep"]);
    }
    let read = |d: &tempfile::TempDir| std::fs::read(d.path().join("out/sweep.csv")).unwrap();
    let first = read(&a);
    assert!(String::from_utf8_lossy(&first).starts_with(
        "k,A,minus_log_A,recovery_error_hs,envelope_value,T_cut,modes_ok,modes_failed"
    ));
    assert_eq!(first, read(&b));
}

#[test]
fn tau_below_minimum_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), SMALL, &["recover", "--set", "mode.tau=0.01"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("mode.tau"));
}

#[test]
fn unknown_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), SMALL, &["phantom", "--set", "sigmaa=1"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn small_forward_run_is_fast() {
    let dir = tempfile::tempdir().unwrap();
    let start = Instant::now();
    let out = run(dir.path(), EMPTY_N8, &["forward"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(start.elapsed() < Duration::from_secs(10));
    let grid = Grid::new(3, 8, 2.0, 0.5, 1.4).unwrap();
    let (header, dtn) = read_dtn(dir.path().join("out/dtn_1_k1.bin")).unwrap();
    assert_eq!(header.n, grid.dim());
    assert!(dtn.entries.iter().all(|v| v.is_finite()));
}

#[test]
fn check_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), SMALL, &["check"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
}
