//! Shared fixtures: a tiny on-disk frame dataset and a matching config.
#![allow(dead_code)]

use std::path::{Path, PathBuf};

use cadstream::io::FrameGeometry;
use cadstream::runner::config::{ExperimentConfig, Profile};

pub const H: u32 = 16;
pub const W: u32 = 24;

/// Writes `clips` clips of `frames` PGM frames: a bright bar sliding right by
/// `speed` pixels per frame over a gradient background.
pub fn write_clips(root: &Path, prefix: &str, clips: usize, frames: usize, speed: u32) {
    for c in 0..clips {
        let dir = root.join(format!("{prefix}{c:02}"));
        std::fs::create_dir_all(&dir).unwrap();
        for f in 0..frames {
            let x0 = (c as u32 * 3 + f as u32 * speed) % (W - 4);
            let img = image::GrayImage::from_fn(W, H, |x, y| {
                let bar = x >= x0 && x < x0 + 4 && (4..12).contains(&y);
                image::Luma([if bar { 230 } else { (40 + 4 * x + 2 * y) as u8 }])
            });
            img.save(dir.join(format!("{:03}.pgm", f + 1))).unwrap();
        }
    }
}

/// Two normal training clips plus a test root where the second half of
/// every clip is labeled anomalous.
pub fn dataset(root: &Path) -> (PathBuf, PathBuf, PathBuf) {
    let train = root.join("train");
    let test = root.join("test");
    write_clips(&train, "train", 2, 6, 1);
    write_clips(&test, "test", 2, 8, 1);
    let labels = root.join("labels.txt");
    std::fs::write(&labels, "# clip start end\ntest00 5 8\ntest01 5 8\n").unwrap();
    (train, test, labels)
}

pub fn small_config(out: &Path) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::for_profile(Profile::Ci);
    cfg.out_dir = out.to_path_buf();
    cfg.data.geometry = FrameGeometry {
        height: H as usize,
        width: W as usize,
        channels: 1,
    };
    cfg.model.generator.depth = 2;
    cfg.model.generator.base_width = 4;
    cfg.model.discriminator.blocks = 2;
    cfg.model.discriminator.base_width = 4;
    cfg.filter.warmup = 2;
    cfg
}

/// TOML text equivalent of [`small_config`] for CLI runs.
pub const SMALL_TOML: &str = r#"
[data.geometry]
height = 16
width = 24
channels = 1

[model.generator]
depth = 2
base_width = 4

[model.discriminator]
blocks = 2
base_width = 4

[filter]
warmup = 2
"#;
