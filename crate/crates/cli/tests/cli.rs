//! End-to-end tests of the `radtouch` binary: the full stage sequence on a
//! small configuration, plus the exit-code contract.

use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

const TINY_CONFIG: &str = r#"
[grid]
rows = 3
cols = 3
origin_cm = [14.0, 6.0]
spacing_cm = 2.0

[sim.schedule]
lead_in_frames = 30
approach_frames = 2
dwell_frames = 6
retract_frames = 2
tail_frames = 10

[sim.clutter]
count = 2

[csp]
window_frames = 3

[features]
window_half = 4
r_max = 40

[model]
conv_filters = [4, 4, 4]
dense_units = 8
padding = "same"
input_shape = [9, 40, 4]

[train]
epochs = 2
batch_size = 4

[bench]
latency_trials = 5
warmup = 1

[sessions]
train_sessions = 1
valtest_sessions = 1
"#;

fn radtouch(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_radtouch"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn assert_exit(output: &Output, code: i32, context: &str) {
    assert_eq!(
        output.status.code(),
        Some(code),
        "{context}: stdout={} stderr={}",
        String::from_utf8_lossy(&output.stdout),
        String::from_utf8_lossy(&output.stderr)
    );
}

fn write_tiny_config(dir: &Path) -> String {
    let path = dir.join("tiny.toml");
    std::fs::write(&path, TINY_CONFIG).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn full_stage_sequence_succeeds() {
    let dir = TempDir::new().unwrap();
    let config = write_tiny_config(dir.path());
    let run = dir.path().join("run");
    let run = run.to_string_lossy();

    let out = radtouch(&[
        "simulate",
        "--config",
        &config,
        "--run-dir",
        &run,
        "--seed",
        "11",
    ]);
    assert_exit(&out, 0, "simulate");
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(
        stdout.contains("9 train / 2 val / 2 test"),
        "unexpected summary: {stdout}"
    );

    for (stage, needle) in [
        ("calibrate", "calibration offsets"),
        ("csp-eval", "csp: median"),
        ("train", "best epoch"),
        ("cnn-eval", "cnn: median"),
        ("bench-latency", "inference latency"),
    ] {
        let out = radtouch(&[stage, "--run-dir", &run]);
        assert_exit(&out, 0, stage);
        let stdout = String::from_utf8_lossy(&out.stdout);
        assert!(stdout.contains(needle), "{stage} output: {stdout}");
    }

    let out = radtouch(&["report", "--run-dir", &run, "--method", "both"]);
    assert_exit(&out, 0, "report");
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("csp: median"), "report output: {stdout}");
    assert!(stdout.contains("cnn: median"), "report output: {stdout}");
    assert!(stdout.contains("latency: median"), "report output: {stdout}");

    let report_dir = dir.path().join("run").join("report");
    for name in [
        "summary.csv",
        "report.json",
        "rmse_map_csp.csv",
        "rmse_map_cnn.csv",
        "cdf_csp.csv",
        "cdf_cnn.csv",
        "heatmap_csp.svg",
        "heatmap_cnn.svg",
    ] {
        assert!(report_dir.join(name).exists(), "missing report/{name}");
    }
}

#[test]
fn config_errors_exit_2() {
    let dir = TempDir::new().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "[radar]\nn_sensors = 0\n").unwrap();
    let run = dir.path().join("run");
    let out = radtouch(&[
        "simulate",
        "--config",
        bad.to_str().unwrap(),
        "--run-dir",
        run.to_str().unwrap(),
    ]);
    assert_exit(&out, 2, "invalid config");

    let missing = dir.path().join("nope.toml");
    let out = radtouch(&[
        "simulate",
        "--config",
        missing.to_str().unwrap(),
        "--run-dir",
        run.to_str().unwrap(),
    ]);
    assert_exit(&out, 2, "missing config file");
}

#[test]
fn missing_dependencies_exit_3() {
    let dir = TempDir::new().unwrap();
    let run = dir.path().join("empty");
    let run = run.to_string_lossy();
    for stage in ["calibrate", "csp-eval", "train", "cnn-eval", "bench-latency"] {
        let out = radtouch(&[stage, "--run-dir", &run]);
        assert_exit(&out, 3, stage);
        let stderr = String::from_utf8_lossy(&out.stderr);
        assert!(
            stderr.contains("run the `simulate` stage first")
                || stderr.contains("run the `train` stage first"),
            "{stage} stderr: {stderr}"
        );
    }
    let out = radtouch(&["report", "--run-dir", &run, "--method", "csp"]);
    assert_exit(&out, 3, "report without estimates");
}

#[test]
fn corrupt_artifacts_exit_4() {
    let dir = TempDir::new().unwrap();
    let config = write_tiny_config(dir.path());
    let run_path = dir.path().join("run");
    let run = run_path.to_string_lossy().into_owned();
    let out = radtouch(&[
        "simulate",
        "--config",
        &config,
        "--run-dir",
        &run,
        "--seed",
        "3",
    ]);
    assert_exit(&out, 0, "simulate");

    // Truncate a dataset blob: training must fail the checksum check.
    let blob = run_path.join("dataset").join("train.bin");
    let bytes = std::fs::read(&blob).unwrap();
    std::fs::write(&blob, &bytes[..bytes.len() / 2]).unwrap();
    let out = radtouch(&["train", "--run-dir", &run]);
    assert_exit(&out, 4, "train on truncated blob");
}
