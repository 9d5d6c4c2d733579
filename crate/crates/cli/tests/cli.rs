use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn sfc(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sfc"))
        .args(args)
        .current_dir(cwd)
        .env("SFC_OUTPUT_ROOT", cwd.join("out"))
        .output()
        .expect("binary runs")
}

fn small_config(dir: &Path) {
    fs::write(dir.join("small.toml"), "dv = 3\ndc = 6\nL = 3\nalpha = \"1.1\"\nM = 40\n").unwrap();
}

#[test]
fn construct_then_simulate() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    small_config(d);
    let o = sfc(
        &["construct", "--config", "small.toml", "--seed", "3", "--out", "g.txt", "--profile", "profile.csv"],
        d,
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let profile = fs::read_to_string(d.join("profile.csv")).unwrap();
    assert!(profile.starts_with("position,variable_count"));

    let o = sfc(
        &["simulate", "--graph", "g.txt", "--epsilon", "0.3", "--trials", "5", "--record-trace", "traces"],
        d,
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = String::from_utf8(o.stdout).unwrap();
    assert_eq!(csv.lines().count(), 6);
    assert!(csv.starts_with("trial,erased,outcome"));
    assert_eq!(fs::read_dir(d.join("traces")).unwrap().count(), 5);
}

#[test]
fn evolve_writes_series() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    small_config(d);
    let o = sfc(
        &["evolve", "--config", "small.toml", "--epsilon", "0.4", "--ce", "--no-threshold", "--out", "ev"],
        d,
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["ege.csv", "ce.csv", "evolve.json"] {
        assert!(d.join("ev").join(f).exists(), "{f} missing");
    }
    let summary: serde_json::Value = serde_json::from_slice(&fs::read(d.join("ev/evolve.json")).unwrap()).unwrap();
    assert_eq!(summary["completed"], true);
}

#[test]
fn campaign_and_plot_data() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    fs::write(
        d.join("exp.json"),
        r#"{"dv":3,"dc":6,"L":3,"alpha":"1.1","M":30,"epsilons":[0.3,0.45],"codes":4,"codewords":10,"seed":1}"#,
    )
    .unwrap();
    let o = sfc(&["run", "--config", "exp.json", "--workers", "1"], d);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let run_dir = d.join("out/exp");
    assert!(run_dir.join("summary.json").exists());
    assert!(run_dir.join("results.csv").exists());

    let o = sfc(&["plot", "--dir", run_dir.to_str().unwrap()], d);
    assert!(o.status.success());
    assert!(run_dir.join("fig5.csv").exists());
    assert!(run_dir.join("fig6.csv").exists());
    assert!(String::from_utf8_lossy(&o.stderr).contains("skipped fig4.csv"));
}

#[test]
fn construction_table_passes() {
    let tmp = tempfile::tempdir().unwrap();
    let o = sfc(&["reproduce", "--table", "IV", "--out", "t4.json"], tmp.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(tmp.path().join("t4.json").exists());
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    assert_eq!(sfc(&["construct"], d).status.code(), Some(2));
    assert_eq!(sfc(&["reproduce", "--table", "IX"], d).status.code(), Some(1));

    let o = sfc(&["plot", "--dir", "."], d);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    for f in ["evolution.json", "summary.json", "prediction.json"] {
        assert!(err.contains(f), "{err}");
    }

    fs::write(d.join("bad.toml"), "dv = 3\ndc = 6\nL = 3\nalpha = \"0.9\"\nM = 40\n").unwrap();
    let o = sfc(&["construct", "--config", "bad.toml", "--out", "g.txt"], d);
    assert_eq!(o.status.code(), Some(1));
}
