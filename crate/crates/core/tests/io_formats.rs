mod common;

use std::path::PathBuf;

use cadstream::em_filter::ScoreRecord;
use cadstream::io::{
    self, checkpoint, load_frame_dataset, load_idx, load_images, load_labels, read_manifest, read_scores,
    render_roc_svg, write_manifest, write_scores, FrameGeometry, IdxFile, MetricReport, RocSeries,
};
use cadstream::metrics::{roc_curve, LabeledScores};
use cadstream::mixer::SampleRef;
use cadstream::tensor::Tensor;
use cadstream::Error;

fn idx_bytes(dims: &[u32], payload: &[u8]) -> Vec<u8> {
    let mut b = vec![0, 0, 0x08, dims.len() as u8];
    for d in dims {
        b.extend_from_slice(&d.to_be_bytes());
    }
    b.extend_from_slice(payload);
    b
}

#[test]
fn synthetic_idx_files_parse_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    let payload: Vec<u8> = (0..2 * 3 * 4).map(|i| (i * 11) as u8).collect();
    let bytes = idx_bytes(&[2, 3, 4], &payload);
    let path = dir.path().join("images.idx3");
    std::fs::write(&path, &bytes).unwrap();
    let f = load_idx(&path).unwrap();
    assert_eq!(f.dims, vec![2, 3, 4]);
    assert_eq!(f.data, payload);
    assert_eq!(f.to_bytes(), bytes);
    let images = load_images(&path).unwrap();
    assert_eq!(images.shape(), &[2, 3, 4]);
    assert_eq!(images.data()[1], 11.0 / 127.5 - 1.0);

    let lpath = dir.path().join("labels.idx1");
    std::fs::write(&lpath, idx_bytes(&[3], &[7, 0, 9])).unwrap();
    assert_eq!(load_labels(&lpath).unwrap(), vec![7, 0, 9]);
}

#[test]
fn idx_errors_report_offsets() {
    let good = idx_bytes(&[2, 2], &[1, 2, 3, 4]);
    let offset = |b: &[u8]| match IdxFile::parse(b) {
        Err(Error::Format { offset, .. }) => offset,
        other => panic!("expected format error, got {other:?}"),
    };
    let mut bad = good.clone();
    bad[1] = 1;
    assert_eq!(offset(&bad), 1);
    let mut bad = good.clone();
    bad[2] = 0x0D;
    assert_eq!(offset(&bad), 2);
    assert_eq!(offset(&good[..6]), 6);
    assert_eq!(offset(&good[..good.len() - 1]), (good.len() - 1) as u64);
    let mut long = good.clone();
    long.push(0);
    assert_eq!(offset(&long), good.len() as u64);
    assert!(matches!(load_idx(std::path::Path::new("/nonexistent/x.idx")), Err(Error::Input(_))));
}

#[test]
fn official_mnist_training_images() {
    let dir = std::env::var_os("CADSTREAM_MNIST_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist"));
    let path = dir.join("train-images-idx3-ubyte");
    if !path.exists() {
        eprintln!("skipping: {} not present", path.display());
        return;
    }
    let f = load_idx(&path).unwrap();
    assert_eq!(f.dims, vec![60000, 28, 28]);
    assert_eq!(f.to_bytes(), std::fs::read(&path).unwrap());
    let labels = load_labels(&dir.join("train-labels-idx1-ubyte")).unwrap();
    assert_eq!(labels.len(), 60000);
    // class counts of the official training set
    assert_eq!(labels.iter().filter(|&&l| l == 0).count(), 5923);
    assert_eq!(labels.iter().filter(|&&l| l == 1).count(), 6742);
}

#[test]
fn checkpoint_file_round_trip_and_corruption() {
    let dir = tempfile::tempdir().unwrap();
    let a = Tensor::from_fn([2, 3], |i| i as f32 * -0.25 + f32::EPSILON);
    let b = Tensor::new([1], vec![f32::MIN_POSITIVE]).unwrap();
    let path = dir.path().join("w.cadm");
    checkpoint::save(&path, &[("a", &a), ("layer.b", &b)]).unwrap();
    let back = checkpoint::load(&path).unwrap();
    assert_eq!(back[0].0, "a");
    assert_eq!(back[1].1.shape(), &[1]);
    assert_eq!(back[0].1.data(), a.data());
    let bytes = std::fs::read(&path).unwrap();
    assert_eq!(&bytes[..4], b"CADM");

    let mut bad = bytes.clone();
    bad[0] = b'X';
    assert!(matches!(checkpoint::parse(&bad), Err(Error::Format { offset: 0, .. })));
    assert!(matches!(checkpoint::parse(&bytes[..bytes.len() - 2]), Err(Error::Format { .. })));
}

fn record(index: u64, loss: f64, label: i8) -> ScoreRecord {
    ScoreRecord {
        index,
        loss,
        mu: 0.5,
        tau: 1e-3,
        admitted: index % 2 == 0,
        label,
        error: false,
    }
}

#[test]
fn score_csv_and_manifest_files() {
    let dir = tempfile::tempdir().unwrap();
    let recs: Vec<ScoreRecord> = (0..5).map(|i| record(i, 0.1 * i as f64 + 1e-17, (i % 2) as i8)).collect();
    let path = dir.path().join("scores.csv");
    write_scores(&path, &recs).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert!(text.starts_with("index,loss,mu,tau,admitted,label\n"));
    let back = read_scores(&path).unwrap();
    assert_eq!(back.len(), 5);
    for (a, b) in recs.iter().zip(&back) {
        assert_eq!(a.loss.to_bits(), b.loss.to_bits());
        assert_eq!((a.index, a.admitted, a.label), (b.index, b.admitted, b.label));
    }

    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "index,score\n0,1.0\n").unwrap();
    assert!(read_scores(&bad).is_err());

    let samples = vec![
        SampleRef { clip: 0, frame: 3, label: 0 },
        SampleRef { clip: 2, frame: 1, label: 1 },
    ];
    let m = dir.path().join("nested/manifest.csv");
    write_manifest(&m, &samples).unwrap();
    assert_eq!(read_manifest(&m).unwrap(), samples);
}

#[test]
fn roc_svg_is_well_formed() {
    let ls = LabeledScores::new(vec![3.0, 2.0, 1.0, 0.0], vec![1, 0, 1, 0]).unwrap();
    let curve = roc_curve(&ls).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("roc.svg");
    render_roc_svg(
        &[RocSeries::from_curve("model", &curve), RocSeries::from_curve("copy", &curve)],
        &path,
    )
    .unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    let doc = roxmltree::Document::parse(&text).unwrap();
    let root = doc.root_element();
    assert_eq!(root.tag_name().name(), "svg");
    let curves: Vec<_> = doc
        .descendants()
        .filter(|n| n.tag_name().name() == "polyline" && n.attribute("class") == Some("roc"))
        .collect();
    assert_eq!(curves.len(), 2);
    let points = curves[0].attribute("points").unwrap().split_whitespace().count();
    assert_eq!(points, curve.len());
    assert!(doc.descendants().any(|n| n.attribute("class") == Some("reference")));
}

#[test]
fn report_toml_round_trip() {
    let mut r = MetricReport {
        name: "x".into(),
        auc: 0.8125,
        eer: 0.25,
        samples: 16,
        ..Default::default()
    };
    r.extra.insert("auc_fast".into(), 0.5);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("report.toml");
    r.save(&path).unwrap();
    assert_eq!(MetricReport::load(&path).unwrap(), r);
}

#[test]
fn frame_dataset_from_pgm_files() {
    let dir = tempfile::tempdir().unwrap();
    let (_, test, labels) = common::dataset(dir.path());
    let geom = FrameGeometry {
        height: common::H as usize,
        width: common::W as usize,
        channels: 1,
    };
    let ds = load_frame_dataset(&test, Some(&labels), geom).unwrap();
    assert_eq!(ds.clips.len(), 2);
    assert_eq!(ds.clips[0].id, "test00");
    assert_eq!(ds.frame_count(), 16);
    assert_eq!(ds.clips[1].labels, vec![0, 0, 0, 0, 1, 1, 1, 1]);
    let f = &ds.clips[0].frames[0];
    assert_eq!(f.shape(), &[1, 1, 16, 24]);
    assert!(f.data().iter().all(|v| (-1.0..=1.0).contains(v)));
    // pixel value 230 → 230/127.5 − 1
    assert!(f.data().iter().any(|&v| (v - (230.0 / 127.5 - 1.0)).abs() < 1e-6));

    // resizing to another geometry
    let small = load_frame_dataset(&test, None, FrameGeometry { height: 8, width: 12, channels: 3 }).unwrap();
    assert_eq!(small.clips[0].frames[0].shape(), &[1, 3, 8, 12]);
    assert!(small.clips[0].labels.iter().all(|&l| l == 0));

    let index = io::index_frame_dataset(&test, Some(&labels)).unwrap();
    assert!(index.clips[0].frames.is_empty());
    assert_eq!(index.clips[1].labels, ds.clips[1].labels);

    let stray = dir.path().join("stray.txt");
    std::fs::write(&stray, "nosuchclip 1 2\n").unwrap();
    assert!(matches!(load_frame_dataset(&test, Some(&stray), geom), Err(Error::Input(_))));
    let overrun = dir.path().join("overrun.txt");
    std::fs::write(&overrun, "test00 5 9\n").unwrap();
    assert!(load_frame_dataset(&test, Some(&overrun), geom).is_err());
    assert!(matches!(
        load_frame_dataset(&dir.path().join("missing"), None, geom),
        Err(Error::Input(_))
    ));
}
