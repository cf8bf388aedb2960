//! End-to-end tests of the `ripple` binary: argument handling, exit
//! codes, stage orchestration, and report output.

use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn ripple(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ripple"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("failed to spawn ripple")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// Overrides shrinking every stage so a full run takes well under a
/// second; quality is irrelevant here, only plumbing.
const TINY: &[&str] = &[
    "d=6",
    "layers=1",
    "families=6",
    "gibbs_sweeps=8",
    "walks_per_vertex=2",
    "walk_length=10",
    "pair_epochs=2",
    "pair_negatives=2",
    "text_epochs=1",
    "lm_epochs=1",
    "lm_negatives=3",
    "train_epochs=2",
    "train_learning_rate=0.3",
    "conv_filters=4",
    "conv_widths=2,3",
    "batch=16",
    "mutation_targets=2",
];

/// Generates a small synthetic world and returns its directory.
fn small_world() -> TempDir {
    let dir = TempDir::new().unwrap();
    let out = ripple(
        dir.path(),
        &[
            "gen-data",
            "--out",
            ".",
            "--groups",
            "6",
            "--keywords",
            "2",
            "--train-texts",
            "40",
            "--test-texts",
            "40",
            "--min-len",
            "4",
            "--max-len",
            "8",
        ],
    );
    assert!(out.status.success(), "gen-data failed: {}", stderr(&out));
    dir
}

fn tiny_args<'a>(rest: &[&'a str]) -> Vec<&'a str> {
    let mut args: Vec<&str> = rest.to_vec();
    args.extend_from_slice(TINY);
    args
}

#[test]
fn gen_data_writes_the_expected_files() {
    let dir = small_world();
    for file in ["encoding.tsv", "train.tsv", "test.tsv", "ripple.conf"] {
        assert!(dir.path().join(file).exists(), "{file} missing");
    }
}

#[test]
fn run_executes_all_stages_then_skips_when_current() {
    let dir = small_world();
    let out = ripple(dir.path(), &tiny_args(&["run", "--config", "ripple.conf"]));
    assert!(out.status.success(), "run failed: {}", stderr(&out));
    let text = stdout(&out);
    for stage in
        ["build-graph", "walk", "train-vfge", "pretrain-lm", "train", "mutate", "eval", "benchmark"]
    {
        assert!(text.contains(&format!("[{stage}] completed")), "missing stage in:\n{text}");
    }
    assert!(text.contains("not reproducible here"), "missing reference block:\n{text}");

    // Second run: everything is current.
    let out = ripple(dir.path(), &tiny_args(&["run", "--config", "ripple.conf"]));
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(!text.contains("completed"), "nothing should re-run:\n{text}");
    assert_eq!(text.matches("up to date").count(), 8, "all 8 stages skip:\n{text}");

    // Forced single stage runs again.
    let out = ripple(dir.path(), &tiny_args(&["eval", "--config", "ripple.conf", "--force"]));
    assert!(out.status.success());
    assert!(stdout(&out).contains("[eval] completed"));
}

#[test]
fn missing_dependency_exits_2_and_names_the_stage() {
    let dir = small_world();
    let out = ripple(dir.path(), &tiny_args(&["eval", "--config", "ripple.conf"]));
    assert_eq!(out.status.code(), Some(2), "stderr: {}", stderr(&out));
    assert!(stderr(&out).contains("train"), "should name the missing stage: {}", stderr(&out));
}

#[test]
fn validation_errors_exit_1() {
    let dir = small_world();
    // Unknown config key.
    let out = ripple(dir.path(), &["build-graph", "--config", "ripple.conf", "no_such_key=1"]);
    assert_eq!(out.status.code(), Some(1), "stderr: {}", stderr(&out));
    assert!(stderr(&out).contains("no_such_key"));
    // Invalid value.
    let out = ripple(dir.path(), &["build-graph", "--config", "ripple.conf", "mutation_rate=2.0"]);
    assert_eq!(out.status.code(), Some(1));
    // Missing config file.
    let out = ripple(dir.path(), &["build-graph", "--config", "nope.conf"]);
    assert_eq!(out.status.code(), Some(1));
    // Usage error (unknown flag) is also a validation failure, not a
    // missing dependency.
    let out = ripple(dir.path(), &["build-graph", "--config", "ripple.conf", "--bogus"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn seed_flag_overrides_the_config_seed() {
    let dir = small_world();
    let out = ripple(
        dir.path(),
        &tiny_args(&["build-graph", "--config", "ripple.conf", "--seed", "99"]),
    );
    assert!(out.status.success(), "stderr: {}", stderr(&out));
    let manifest = std::fs::read_to_string(dir.path().join("artifacts/manifest.txt")).unwrap();
    assert!(manifest.contains("build-graph.seed=99"), "manifest:\n{manifest}");
}

#[test]
fn nearest_prints_k_neighbors_excluding_the_query() {
    let dir = small_world();
    for stage in ["build-graph", "walk", "train-vfge"] {
        let out = ripple(dir.path(), &tiny_args(&[stage, "--config", "ripple.conf"]));
        assert!(out.status.success(), "{stage} failed: {}", stderr(&out));
    }
    // The synthetic vocabulary starts at U+4E00 (一).
    let out = ripple(
        dir.path(),
        &tiny_args(&["nearest", "一", "--k", "3", "--config", "ripple.conf"]),
    );
    assert!(out.status.success(), "stderr: {}", stderr(&out));
    let text = stdout(&out);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 3, "expected 3 neighbors:\n{text}");
    for line in &lines {
        assert!(!line.starts_with('一'), "query must not appear: {line}");
    }

    // Before train-vfge artifacts exist, nearest reports the missing stage.
    let fresh = small_world();
    let out = ripple(fresh.path(), &["nearest", "一", "--config", "ripple.conf"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("build-graph"), "stderr: {}", stderr(&out));
}

#[test]
fn help_and_version_exit_0() {
    let dir = TempDir::new().unwrap();
    let out = ripple(dir.path(), &["--help"]);
    assert!(out.status.success());
    assert!(stdout(&out).contains("gen-data"));
    let out = ripple(dir.path(), &["--version"]);
    assert!(out.status.success());
}
