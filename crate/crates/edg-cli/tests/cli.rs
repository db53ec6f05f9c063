//! Binary-level checks: the determinism guarantee as seen through `edg
//! train`, checkpoint replay through `edg eval`, and error reporting.

use edg_core::report::{read_records, records_equal_ignoring_wall_clock, SUMMARY_SEED};
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn edg() -> Command {
    Command::new(env!("CARGO_BIN_EXE_edg"))
}

fn tmp(name: &str) -> PathBuf {
    let p = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join(name);
    if p.exists() {
        if p.is_dir() {
            std::fs::remove_dir_all(&p).unwrap();
        } else {
            std::fs::remove_file(&p).unwrap();
        }
    }
    p
}

fn run_ok(cmd: &mut Command) -> Output {
    let out = cmd.output().expect("spawn edg");
    assert!(
        out.status.success(),
        "command failed\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn checkpoint_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "edgckpt"))
        .collect();
    files.sort();
    files
        .into_iter()
        .map(|p| {
            (
                p.file_name().unwrap().to_str().unwrap().to_string(),
                std::fs::read(&p).unwrap(),
            )
        })
        .collect()
}

const TRAIN_CFG: &str = "method=dda\ndataset=rotated_gaussian\nn_domains=6\nn_per_domain=40\n\
                         episodes=40\nval_every=10\nbatch=16\nseeds=3\n";

/// Repeating `edg train` with the same config reproduces the checkpoint
/// byte-for-byte and the CSV rows exactly (wall-clock excluded).
#[test]
fn train_is_deterministic_across_invocations() {
    let dir = tmp("cli-det");
    let cfg_path = tmp("cli-det.cfg");
    std::fs::write(&cfg_path, format!("{TRAIN_CFG}out_dir={}\n", dir.display())).unwrap();

    run_ok(edg().args(["train", "--config", cfg_path.to_str().unwrap()]));
    let ckpts_first = checkpoint_bytes(&dir);
    let records_first = read_records(&dir.join("results.csv")).unwrap();
    assert_eq!(ckpts_first.len(), 1, "one checkpoint for one seed");

    run_ok(edg().args(["train", "--config", cfg_path.to_str().unwrap()]));
    let ckpts_second = checkpoint_bytes(&dir);
    let records_second = read_records(&dir.join("results.csv")).unwrap();

    assert_eq!(ckpts_first, ckpts_second, "checkpoint bytes changed across re-run");
    assert!(
        records_equal_ignoring_wall_clock(&records_first, &records_second),
        "result rows changed across re-run"
    );
}

/// `edg eval` on the written checkpoint, against the same dataset file that
/// `edg gen` produces for the training seed, reproduces the recorded
/// accuracy exactly.
#[test]
fn eval_replays_training_accuracy() {
    let dir = tmp("cli-replay");
    let cfg_path = tmp("cli-replay.cfg");
    std::fs::write(&cfg_path, format!("{TRAIN_CFG}out_dir={}\n", dir.display())).unwrap();
    run_ok(edg().args(["train", "--config", cfg_path.to_str().unwrap()]));

    let ds_path = tmp("cli-replay.edgdata");
    run_ok(edg().args([
        "gen",
        "--dataset",
        "rotated_gaussian",
        "--n-domains",
        "6",
        "--n-per-domain",
        "40",
        "--seed",
        "3",
        "--out",
        ds_path.to_str().unwrap(),
    ]));

    let ckpt = dir.join("dda_rotated_gaussian_seed3.edgckpt");
    let out = run_ok(edg().args([
        "eval",
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--dataset",
        ds_path.to_str().unwrap(),
        "--horizon",
        "1",
    ]));
    let stdout = String::from_utf8(out.stdout).unwrap();
    let replayed: f64 = stdout
        .split_whitespace()
        .last()
        .and_then(|s| s.parse().ok())
        .unwrap_or_else(|| panic!("unexpected eval output: {stdout}"));

    let records = read_records(&dir.join("results.csv")).unwrap();
    let recorded = records
        .iter()
        .find(|r| r.seed != SUMMARY_SEED && r.horizon == 1)
        .unwrap()
        .accuracy;
    assert_eq!(
        replayed.to_bits(),
        recorded.to_bits(),
        "eval replay drifted from the recorded accuracy: {replayed} vs {recorded}"
    );
}

/// Errors surface as a nonzero exit code with the reason on stderr: a key
/// for the wrong method is rejected, and a missing file is reported.
#[test]
fn errors_exit_nonzero_with_reason() {
    let cfg_path = tmp("cli-bad.cfg");
    std::fs::write(&cfg_path, "method=dda\ndataset=sine\nerm_epochs=5\nout_dir=/tmp/x\n").unwrap();
    let out = edg()
        .args(["train", "--config", cfg_path.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(!out.status.success(), "misapplied key must fail");
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(
        stderr.contains("erm_epochs"),
        "stderr should name the offending key, got: {stderr}"
    );

    let out = edg()
        .args(["ldda", "--dataset", "/nonexistent/path.edgdata"])
        .output()
        .unwrap();
    assert!(!out.status.success(), "missing dataset must fail");
    assert!(!out.stderr.is_empty(), "missing dataset should print a reason");
}
