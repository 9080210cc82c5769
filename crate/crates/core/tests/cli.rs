//! Exercises the installed binary end to end: artifact emission and the
//! exit-code contract (0 = gates passed, 1 = module error with JSON, 2 =
//! configuration error).

use std::process::Command;

fn divdraw() -> Command {
    Command::new(env!("CARGO_BIN_EXE_divdraw"))
}

#[test]
fn solve_emits_artifacts_and_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let out = divdraw()
        .args([
            "solve", "--mu", "0.3", "--sigma", "0.3", "--r", "0.05", "--cbar", "0.3", "--b",
            "0.6", "--nx", "400", "--nc", "20", "--xmax", "6",
        ])
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    for name in ["surface.csv", "boundaries.csv", "meta.json"] {
        assert!(dir.path().join(name).exists(), "{name} missing");
    }
    let meta: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("meta.json")).unwrap())
            .unwrap();
    assert_eq!(meta["regime"], "complicated");
}

#[test]
fn missing_flag_exits_two_with_usage_hint() {
    let out = divdraw().args(["solve", "--mu", "0.3"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("--sigma"), "stderr should name the missing flag: {err}");
}

#[test]
fn unknown_flag_exits_two() {
    let out = divdraw().args(["solve", "--nope", "1"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn module_error_exits_one_with_json() {
    let dir = tempfile::tempdir().unwrap();
    let out = divdraw()
        .args([
            "simulate", "--mu", "0.3", "--sigma", "0.3", "--r", "0.05", "--cbar", "0.3", "--b",
            "0.6", "--c0", "0.3", "--paths", "8", "--strategy", "constant:0.01",
        ])
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let json: serde_json::Value =
        serde_json::from_slice(&out.stdout).expect("stdout must carry an error JSON");
    assert_eq!(json["error"]["kind"], "admissibility");
}

#[test]
fn simple_regime_short_circuits_with_message() {
    let dir = tempfile::tempdir().unwrap();
    let out = divdraw()
        .args([
            "solve", "--mu", "0.1", "--sigma", "0.8", "--r", "0.08", "--cbar", "0.1", "--b",
            "0.5", "--nx", "200", "--nc", "10", "--xmax", "20",
        ])
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("closed form"), "stderr: {err}");
}
