//! Command-line behaviour: exit codes, locking and config layering.

use std::path::Path;
use std::process::{Command, Output};

fn wmx(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wmx"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("spawn wmx")
}

fn config_echo(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("config.json")).unwrap()).unwrap()
}

#[test]
fn help_succeeds_and_lists_commands() {
    let tmp = tempfile::tempdir().unwrap();
    let out = wmx(&["--help"], tmp.path());
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    for cmd in [
        "scenario", "model", "rgae", "featviz", "latent", "cells", "lrp", "saliency",
    ] {
        assert!(text.contains(cmd), "help does not mention `{cmd}`");
    }
}

#[test]
fn usage_errors_exit_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(wmx(&["bogus"], tmp.path()).status.code(), Some(2));
    let missing_out = wmx(&["scenario", "gen", "--frames", "3"], tmp.path());
    assert_eq!(missing_out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&missing_out.stderr).contains("--out"));
    let bad_frames = wmx(&["scenario", "gen", "--frames", "401", "--out", "o"], tmp.path());
    assert_ne!(bad_frames.status.code(), Some(0));
}

#[test]
fn existing_lock_refuses_the_run() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("busy");
    std::fs::create_dir(&dir).unwrap();
    std::fs::write(dir.join(".wmx.lock"), b"").unwrap();
    let out = wmx(&["scenario", "gen", "--frames", "2", "--out", "busy"], tmp.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("lock"));
    assert!(!dir.join("frames.frm").exists());
    // The foreign lock is left alone.
    assert!(dir.join(".wmx.lock").exists());
}

#[test]
fn command_line_flags_override_config() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(
        tmp.path().join("c.json"),
        r#"{"frames": 5, "seed": 2, "scenario gen": {"seed": 4}}"#,
    )
    .unwrap();

    let out = wmx(
        &["scenario", "gen", "--config", "c.json", "--out", "sectioned"],
        tmp.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let echo = config_echo(&tmp.path().join("sectioned"));
    assert_eq!(echo["frames"], 5);
    assert_eq!(echo["seed"], 4);

    let out = wmx(
        &[
            "scenario", "gen", "--config", "c.json", "--seed", "7", "--out", "flagged",
        ],
        tmp.path(),
    );
    assert!(out.status.success());
    let echo = config_echo(&tmp.path().join("flagged"));
    assert_eq!(echo["frames"], 5);
    assert_eq!(echo["seed"], 7);
    assert!(!tmp.path().join("flagged/.wmx.lock").exists());
}

#[test]
fn malformed_config_is_a_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(tmp.path().join("c.json"), "[1, 2]").unwrap();
    let out = wmx(&["scenario", "gen", "--config", "c.json", "--out", "o"], tmp.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn same_parameters_give_identical_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    for dir in ["a", "b"] {
        let out = wmx(
            &["model", "init", "--kind", "lstm", "--seed", "5", "--out", dir],
            tmp.path(),
        );
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    for name in ["model.manifest.json", "model.weights.bin", "config.json"] {
        let a = std::fs::read(tmp.path().join("a").join(name)).unwrap();
        let b = std::fs::read(tmp.path().join("b").join(name)).unwrap();
        if name == "config.json" {
            let strip = |v: &[u8]| String::from_utf8_lossy(v).replace("\"a\"", "").replace("\"b\"", "");
            assert_eq!(strip(&a), strip(&b));
        } else {
            assert_eq!(a, b, "{name} differs between runs");
        }
    }
}
