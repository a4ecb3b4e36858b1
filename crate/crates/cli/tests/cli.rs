use std::path::Path;
use std::process::{Command, Output};

fn heatlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_heatlab")).args(args).output().expect("binary runs")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

const SPEC: &str = r#"{"dim":2,"side":16.0,"cells":16,"range":2.0,"model":{"kind":"checkerboard"},
"tails":{"lower":6.0,"upper":6.0},"speed":{"kind":"lambda"},"exponents":{"p":4.0,"q":4.0,"r":4.0},
"regime":"m2","seed":3}"#;

#[test]
fn help_succeeds() {
    let out = heatlab(&["--help"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("reproduce"));
}

#[test]
fn unknown_preset_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = heatlab(&["reproduce", "gaussian-sanity", "--preset", "huge", "--out", path(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn corrupt_environment_reports_location() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("spec.json");
    std::fs::write(&spec, SPEC).unwrap();
    let env = dir.path().join("env");
    let out = heatlab(&["env", "gen", "--spec", path(&spec), "--out", path(&env)]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(env.join("manifest.json").exists());
    std::fs::write(env.join("meta.json"), "{\n  \"format_version\": 1,\n  oops").unwrap();
    let out = heatlab(&["op", "export", "--env", path(&env), "--out", path(&dir.path().join("op"))]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("meta.json") && err.contains("line 3"), "{err}");
}

#[test]
fn gaussian_sanity_passes_and_detects_corruption() {
    let dir = tempfile::tempdir().unwrap();
    let clean = dir.path().join("clean");
    let out = heatlab(&["reproduce", "gaussian-sanity", "--preset", "small", "--out", path(&clean)]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    assert!(String::from_utf8_lossy(&out.stdout).contains("PASS"));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(clean.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["pass"], true);
    let bad = dir.path().join("bad");
    let out = heatlab(&["reproduce", "gaussian-sanity", "--preset", "small", "--corrupt", "--out", path(&bad)]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn reports_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for (out, workers) in [(&a, "1"), (&b, "4")] {
        let status = heatlab(&["--workers", workers, "reproduce", "rosenthal", "--seed", "5", "--out", path(out)]);
        assert_eq!(status.status.code(), Some(0));
    }
    let ra = std::fs::read(a.join("report.json")).unwrap();
    let rb = std::fs::read(b.join("report.json")).unwrap();
    assert_eq!(ra, rb);
}

#[test]
fn resource_caps_exit_three() {
    let dir = tempfile::tempdir().unwrap();
    let out = heatlab(&["reproduce", "upper-d2", "--max-cells", "100", "--out", path(dir.path())]);
    assert_eq!(out.status.code(), Some(3));
    let out = heatlab(&["reproduce", "green-d3", "--max-seconds", "0.05", "--out", path(dir.path())]);
    assert_eq!(out.status.code(), Some(3));
}
