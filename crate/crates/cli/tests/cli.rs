use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_affine-formation"));
    c.env_remove("AFFINE_FORMATION_OUT");
    c
}

fn scenarios() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn run_writes_artifacts() {
    let out = tempfile::tempdir().unwrap();
    let sim1 = scenarios().join("sim1.json");
    let o = run(&["run", s(&sim1), "--out", s(out.path())]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let dir = out.path().join("sim1");
    let csv = fs::read_to_string(dir.join("trajectory.csv")).unwrap();
    let mut lines = csv.lines();
    let header = lines.next().unwrap();
    assert!(header.starts_with("t,x_1,y_1,x_2,y_2,x_3,y_3,x_4,y_4,shape_error,velocity_error,segment,u_1"));
    assert_eq!(header.split(',').count(), 1 + 8 + 3 + 4);
    // 10 s at dt 1e-3, every 10th step, plus t = 0
    assert_eq!(lines.count(), 1001);
    let meta: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.join("metadata.json")).unwrap()).unwrap();
    assert_eq!(meta["segments"][0]["case"], "C5");
    // off-shape start: no closed form to report
    assert!(!dir.join("spectral_report.json").exists());
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("sim1: cases [C5]"), "{stdout}");
}

#[test]
fn runs_are_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let sc = scenarios().join("sim2_caseC4.json");
    for d in [&a, &b] {
        assert!(run(&["run", s(&sc), "--out", s(d.path())]).status.success());
    }
    let read = |d: &tempfile::TempDir, f: &str| fs::read(d.path().join("sim2_caseC4").join(f)).unwrap();
    assert_eq!(read(&a, "trajectory.csv"), read(&b, "trajectory.csv"));
    let spectral: serde_json::Value = serde_json::from_slice(&read(&a, "spectral_report.json")).unwrap();
    assert!(spectral.to_string().contains("\"C4\""));
}

#[test]
fn env_var_sets_output_root() {
    let out = tempfile::tempdir().unwrap();
    let o = bin()
        .env("AFFINE_FORMATION_OUT", out.path())
        .args(["run", s(&scenarios().join("sim2_caseC1.json"))])
        .output()
        .unwrap();
    assert!(o.status.success());
    assert!(out.path().join("sim2_caseC1/trajectory.csv").exists());
}

#[test]
fn design_reports_the_laplacian() {
    let out = tempfile::tempdir().unwrap();
    let o = run(&["design", s(&scenarios().join("sim1.json")), "--out", s(out.path())]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.path().join("sim1/design.json")).unwrap()).unwrap();
    assert_eq!(v["weights"]["zero_eigenvalues"], 3);
    let l00 = v["weights"]["laplacian"][0][0].as_f64().unwrap();
    assert!((l00 - 0.25).abs() < 1e-12);
    assert!(!out.path().join("sim1/trajectory.csv").exists());
}

#[test]
fn tree_framework_fails_design() {
    let out = tempfile::tempdir().unwrap();
    let o = run(&["run", s(&scenarios().join("design/tree.json")), "--out", s(out.path())]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error: "));
}

#[test]
fn input_errors_map_to_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["run", s(&dir.path().join("missing.json"))]);
    assert_eq!(o.status.code(), Some(1));

    let bad = dir.path().join("bad.json");
    let mut v: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(scenarios().join("sim1.json")).unwrap()).unwrap();
    v["unexpected"] = serde_json::json!(true);
    fs::write(&bad, v.to_string()).unwrap();
    assert_eq!(run(&["run", s(&bad)]).status.code(), Some(2));

    v.as_object_mut().unwrap().remove("unexpected");
    v["format_version"] = serde_json::json!(99);
    fs::write(&bad, v.to_string()).unwrap();
    assert_eq!(run(&["run", s(&bad)]).status.code(), Some(2));
}

#[test]
fn verify_passes() {
    let o = run(&["verify"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stdout));
    let out = String::from_utf8_lossy(&o.stdout);
    assert!(!out.contains("FAIL"), "{out}");
    assert!(out.contains("classifier exhaustive"));
}

#[test]
fn batch_runs_every_bundled_scenario() {
    let out = tempfile::tempdir().unwrap();
    let o = run(&["batch", s(&scenarios()), "--out", s(out.path())]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("8 scenarios, 0 failed"), "{stdout}");
    for name in ["sim1", "sim3", "sim2_caseC6"] {
        assert!(out.path().join(name).join("metadata.json").exists());
    }
}

#[test]
fn batch_reports_the_worst_exit_code() {
    let out = tempfile::tempdir().unwrap();
    let o = run(&["batch", s(&scenarios().join("design")), "--out", s(out.path())]);
    assert_eq!(o.status.code(), Some(3));
}
