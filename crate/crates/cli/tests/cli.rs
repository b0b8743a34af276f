use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn l_shape() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../instances/l_shape/config.toml")
}

fn motoplace(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_motoplace")).args(args).args(["--log-level", "error"]).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

#[test]
fn usage_errors_exit_with_two() {
    assert_eq!(code(&motoplace(&["solve"])), 2);
    assert_eq!(code(&motoplace(&["--config", "x.toml", "frobnicate"])), 2);
    assert_eq!(code(&motoplace(&["--clusters", "BP", "solve"])), 2);
}

#[test]
fn configuration_errors_exit_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("none.toml");
    assert_eq!(code(&motoplace(&["-c", missing.to_str().unwrap(), "build"])), 3);
    let cfg = l_shape();
    let o = motoplace(&["-c", cfg.to_str().unwrap(), "--clusters", "BP=7", "build"]);
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stderr).contains("N_com"));
}

#[test]
fn solve_verify_and_render_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let cfg = l_shape();
    let cfg = cfg.to_str().unwrap();
    assert_eq!(code(&motoplace(&["-c", cfg, "-o", out, "build"])), 0);
    assert!(dir.path().join("model.lp").exists() && dir.path().join("model.mps").exists());
    assert_eq!(code(&motoplace(&["-c", cfg, "-o", out, "--clusters", "BP=1", "solve"])), 0);
    assert_eq!(code(&motoplace(&["-c", cfg, "-o", out, "--clusters", "BP=1", "verify"])), 0);
    assert_eq!(code(&motoplace(&["-c", cfg, "-o", out, "render"])), 0);
    assert!(dir.path().join("placement.svg").exists());

    // pushing the pack into the fixed block must fail verification
    let result = dir.path().join("result.json");
    let mut json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&result).unwrap()).unwrap();
    let bp = json["placement"]["elements"].as_array_mut().unwrap().iter_mut().find(|e| e["name"] == "BP").unwrap();
    bp["center"] = serde_json::json!([0.4, 0.3]);
    for c in bp["clusters"].as_array_mut().unwrap() {
        c["center"] = serde_json::json!([0.4, 0.3]);
    }
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, json.to_string()).unwrap();
    let o = motoplace(&["-c", cfg, "-o", out, "verify", "--placement", bad.to_str().unwrap()]);
    assert_eq!(code(&o), 7);
    assert!(String::from_utf8_lossy(&o.stdout).contains("FAIL"));
}

#[test]
fn unfinished_search_exits_with_six() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = l_shape();
    let o = motoplace(&["-c", cfg.to_str().unwrap(), "-o", dir.path().to_str().unwrap(), "--node-limit", "0", "solve"]);
    assert_eq!(code(&o), 6);
    assert!(dir.path().join("result.json").exists());
}
