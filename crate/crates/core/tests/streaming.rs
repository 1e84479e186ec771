mod common;

use std::collections::HashSet;

use cadstream::io::{read_manifest, read_scores, MetricReport};
use cadstream::runner::{run_conventional, run_mix, run_plug_and_play};

#[test]
fn conventional_run_writes_all_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let (train, test, labels) = common::dataset(dir.path());
    let out = dir.path().join("out");
    let mut cfg = common::small_config(&out);
    cfg.data.train_root = Some(train);
    cfg.data.root = Some(test);
    cfg.data.labels = Some(labels);
    cfg.data.per_clip_auc = true;
    let report = run_conventional(&cfg).unwrap();
    assert_eq!(report.samples, 14);
    assert!((0.0..=1.0).contains(&report.auc));
    assert!(report.extra.contains_key("auc_per_clip"));
    assert_eq!(report.extra["train_pairs"], 10.0);
    let scores = read_scores(&out.join("scores_test.csv")).unwrap();
    assert_eq!(scores.len(), 14);
    assert!(scores.iter().all(|r| r.label >= 0 && !r.admitted));
    assert_eq!(MetricReport::load(&out.join("report.toml")).unwrap(), report);
    assert!(out.join("roc.svg").exists() && out.join("model.cadm").exists());

    // replay is byte-identical
    let out2 = dir.path().join("out2");
    let mut cfg2 = cfg.clone();
    cfg2.out_dir = out2.clone();
    run_conventional(&cfg2).unwrap();
    for f in ["scores_test.csv", "report.toml", "model.cadm", "roc.svg"] {
        assert_eq!(std::fs::read(out.join(f)).unwrap(), std::fs::read(out2.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn plug_and_play_visits_each_sample_once() {
    let dir = tempfile::tempdir().unwrap();
    let (_, test, labels) = common::dataset(dir.path());
    let out = dir.path().join("out");
    let mut cfg = common::small_config(&out);
    cfg.data.root = Some(test);
    cfg.data.labels = Some(labels);
    cfg.mix.s = 0.4;
    let report = run_plug_and_play(&cfg).unwrap();
    assert_eq!(report.replicates.len(), 3);
    let agg = report.aggregate.unwrap();
    let mean = report.replicates.iter().map(|r| r.auc).sum::<f64>() / 3.0;
    assert!((agg.mean - mean).abs() < 1e-12);
    for r in 0..3 {
        let manifest = read_manifest(&out.join(format!("manifest_r{r}.csv"))).unwrap();
        let unique: HashSet<_> = manifest.iter().map(|s| (s.clip, s.frame)).collect();
        assert_eq!(unique.len(), manifest.len(), "a sample was visited twice");
        // frame 0 of a clip has no predecessor and never enters the stream
        assert!(manifest.iter().all(|s| s.frame > 0));
        let scores = read_scores(&out.join(format!("scores_r{r}.csv"))).unwrap();
        assert_eq!(scores.len(), manifest.len());
        assert!(scores.iter().zip(&manifest).all(|(a, m)| a.label as u8 == m.label));
        assert_eq!(report.replicates[r].admitted, scores.iter().filter(|s| s.admitted).count());
    }
}

#[test]
fn mix_only_writes_manifests() {
    let dir = tempfile::tempdir().unwrap();
    let (_, test, labels) = common::dataset(dir.path());
    let out = dir.path().join("mix");
    let mut cfg = common::small_config(&out);
    cfg.data.root = Some(test);
    cfg.data.labels = Some(labels);
    cfg.mix.replicates = 2;
    cfg.mix.total = Some(12);
    let streams = run_mix(&cfg).unwrap();
    assert_eq!(streams.len(), 2);
    assert_ne!(streams[0].samples, streams[1].samples);
    assert_eq!(read_manifest(&out.join("manifest_r1.csv")).unwrap(), streams[1].samples);
    assert!(!out.join("scores_r0.csv").exists());
}

#[test]
fn missing_data_root_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = common::small_config(dir.path());
    assert!(matches!(run_plug_and_play(&cfg), Err(cadstream::Error::Config(_))));
}
