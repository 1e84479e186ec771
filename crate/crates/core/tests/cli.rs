mod common;

use std::path::Path;
use std::process::{Command, Output};

fn cadstream(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cadstream"))
        .args(args)
        .current_dir(cwd)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap_or(-1)
}

#[test]
fn train_eval_and_plot_roc() {
    let dir = tempfile::tempdir().unwrap();
    let (train, test, labels) = common::dataset(dir.path());
    std::fs::write(dir.path().join("small.toml"), common::SMALL_TOML).unwrap();
    let o = cadstream(
        &[
            "train-eval",
            "--config",
            "small.toml",
            "--out-dir",
            "out",
            "--seed",
            "4",
            "--train-root",
            train.to_str().unwrap(),
            "--root",
            test.to_str().unwrap(),
            "--labels",
            labels.to_str().unwrap(),
        ],
        dir.path(),
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).contains("conventional: auc"));
    let scores = dir.path().join("out/scores_test.csv");
    assert!(scores.exists());

    let o = cadstream(&["plot-roc", "out/scores_test.csv", "-o", "plot/roc.svg"], dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let svg = std::fs::read_to_string(dir.path().join("plot/roc.svg")).unwrap();
    roxmltree::Document::parse(&svg).unwrap();
}

#[test]
fn mix_and_stream_run() {
    let dir = tempfile::tempdir().unwrap();
    let (_, test, labels) = common::dataset(dir.path());
    std::fs::write(dir.path().join("small.toml"), common::SMALL_TOML).unwrap();
    let root = test.to_str().unwrap();
    let labels = labels.to_str().unwrap();
    let o = cadstream(
        &["mix", "--out-dir", "m", "--root", root, "--labels", labels, "--s", "0.3", "--replicates", "1"],
        dir.path(),
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(dir.path().join("m/manifest_r0.csv").exists());

    let o = cadstream(
        &[
            "stream-run", "--config", "small.toml", "--out-dir", "s", "--root", root, "--labels", labels,
            "--replicates", "2", "--no-filter",
        ],
        dir.path(),
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let report = cadstream::io::MetricReport::load(&dir.path().join("s/report.toml")).unwrap();
    assert_eq!(report.replicates.len(), 2);
    // without the filter every sample trains the model
    assert!(report.replicates.iter().all(|r| r.admitted == r.samples));
}

#[test]
fn input_errors_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let o = cadstream(&["mnist-demo", "--mnist-dir", "nowhere", "--out-dir", "o"], dir.path());
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("error"));

    std::fs::write(dir.path().join("bad.toml"), "[mix]\ns = 2.0\n").unwrap();
    let o = cadstream(&["sprite-bench", "--config", "bad.toml"], dir.path());
    assert_eq!(code(&o), 2);
    let o = cadstream(&["stream-run", "--config", "missing.toml"], dir.path());
    assert_eq!(code(&o), 2);
    let o = cadstream(&["plot-roc", "absent.csv"], dir.path());
    assert_eq!(code(&o), 2);
    // unknown flags are usage errors, also 2
    let o = cadstream(&["mix", "--bogus"], dir.path());
    assert_eq!(code(&o), 2);
}

#[test]
fn exit_codes_follow_error_kind() {
    use cadstream::Error;
    // a saturating output layer keeps losses finite even at absurd step
    // sizes, so numeric failure is checked on the mapping itself
    assert_eq!(Error::Numeric("nan".into()).exit_code(), 3);
    assert_eq!(Error::Config("x".into()).exit_code(), 2);
    assert_eq!(Error::Input("x".into()).exit_code(), 2);
}
