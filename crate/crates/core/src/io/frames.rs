//! Frame-sequence datasets: `root/<clip>/<frame>.{pgm,png,bmp}` plus a label
//! file of anomalous ranges.
//!
//! Label lines read `clip_id start end`, 1-based frame numbers, both ends
//! inclusive. Blank lines and `#` comments are ignored. Clips without a line
//! are entirely normal.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use image::imageops::FilterType;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

use super::idx::scale_byte;

const EXTENSIONS: [&str; 3] = ["pgm", "png", "bmp"];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FrameGeometry {
    pub height: usize,
    pub width: usize,
    /// 1 for grayscale, 3 for RGB.
    pub channels: usize,
}

impl Default for FrameGeometry {
    fn default() -> Self {
        FrameGeometry {
            height: 128,
            width: 192,
            channels: 1,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Clip {
    pub id: String,
    pub paths: Vec<PathBuf>,
    /// Each frame as `[1, C, H, W]` in `[-1, 1]`.
    pub frames: Vec<Tensor>,
    pub labels: Vec<u8>,
}

#[derive(Clone, Debug)]
pub struct FrameDataset {
    pub clips: Vec<Clip>,
    pub geometry: FrameGeometry,
}

impl FrameDataset {
    pub fn frame_count(&self) -> usize {
        self.clips.iter().map(|c| c.frames.len()).sum()
    }
}

/// Decodes one image file into a `[1, C, H, W]` tensor.
pub fn load_frame(path: &Path, geom: FrameGeometry) -> Result<Tensor> {
    let img = image::open(path)
        .map_err(|e| Error::Input(format!("cannot decode {}: {e}", path.display())))?;
    let (h, w) = (geom.height as u32, geom.width as u32);
    let planar = match geom.channels {
        1 => {
            let g = img.to_luma8();
            let g = if g.dimensions() == (w, h) {
                g
            } else {
                image::imageops::resize(&g, w, h, FilterType::Triangle)
            };
            g.into_raw().into_iter().map(scale_byte).collect()
        }
        3 => {
            let rgb = img.to_rgb8();
            let rgb = if rgb.dimensions() == (w, h) {
                rgb
            } else {
                image::imageops::resize(&rgb, w, h, FilterType::Triangle)
            };
            let raw = rgb.into_raw();
            let plane = geom.height * geom.width;
            let mut out = vec![0.0; 3 * plane];
            for (i, px) in raw.chunks_exact(3).enumerate() {
                for c in 0..3 {
                    out[c * plane + i] = scale_byte(px[c]);
                }
            }
            out
        }
        n => return Err(Error::Config(format!("unsupported channel count {n}"))),
    };
    Tensor::new([1, geom.channels, geom.height, geom.width], planar)
}

/// Parses label ranges, keyed by clip id.
pub fn parse_label_ranges(text: &str) -> Result<BTreeMap<String, Vec<(usize, usize)>>> {
    let mut out: BTreeMap<String, Vec<(usize, usize)>> = BTreeMap::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split_whitespace().collect();
        let bad = || Error::Input(format!("label line {}: expected `clip start end`, got {line:?}", n + 1));
        if parts.len() != 3 {
            return Err(bad());
        }
        let start: usize = parts[1].parse().map_err(|_| bad())?;
        let end: usize = parts[2].parse().map_err(|_| bad())?;
        if start == 0 || end < start {
            return Err(Error::Input(format!(
                "label line {}: invalid range {start}..={end} for clip {}",
                n + 1,
                parts[0]
            )));
        }
        out.entry(parts[0].to_owned()).or_default().push((start, end));
    }
    Ok(out)
}

/// Per-frame labels for a clip of `len` frames.
pub fn labels_for(clip: &str, len: usize, ranges: &[(usize, usize)]) -> Result<Vec<u8>> {
    let mut labels = vec![0u8; len];
    for &(start, end) in ranges {
        if end > len {
            return Err(Error::Input(format!(
                "clip {clip}: label range {start}..={end} exceeds its {len} frames"
            )));
        }
        labels[start - 1..end].fill(1);
    }
    Ok(labels)
}

fn list_sorted(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir)? {
        out.push(entry?.path());
    }
    out.sort();
    Ok(out)
}

fn is_frame(p: &Path) -> bool {
    p.is_file()
        && p.extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
}

/// Loads every clip under `root` in lexicographic order. With no label file
/// every frame is normal.
pub fn load_frame_dataset(
    root: &Path,
    label_file: Option<&Path>,
    geometry: FrameGeometry,
) -> Result<FrameDataset> {
    scan(root, label_file, geometry, true)
}

/// Like [`load_frame_dataset`] but leaves `frames` empty: only paths and
/// labels are resolved.
pub fn index_frame_dataset(root: &Path, label_file: Option<&Path>) -> Result<FrameDataset> {
    scan(root, label_file, FrameGeometry::default(), false)
}

fn scan(root: &Path, label_file: Option<&Path>, geometry: FrameGeometry, decode: bool) -> Result<FrameDataset> {
    if !root.is_dir() {
        return Err(Error::Input(format!("{} is not a directory", root.display())));
    }
    let mut ranges = match label_file {
        Some(p) => {
            let mut text = String::new();
            for line in BufReader::new(super::open(p)?).lines() {
                text.push_str(&line?);
                text.push('\n');
            }
            parse_label_ranges(&text)?
        }
        None => BTreeMap::new(),
    };
    let mut clips = Vec::new();
    for dir in list_sorted(root)?.into_iter().filter(|p| p.is_dir()) {
        let id = dir
            .file_name()
            .and_then(|n| n.to_str())
            .ok_or_else(|| Error::Input(format!("non UTF-8 clip name {}", dir.display())))?
            .to_owned();
        let paths: Vec<PathBuf> = list_sorted(&dir)?.into_iter().filter(|p| is_frame(p)).collect();
        if paths.is_empty() {
            return Err(Error::Input(format!("clip {id} contains no frames")));
        }
        let labels = labels_for(&id, paths.len(), &ranges.remove(&id).unwrap_or_default())?;
        let frames = if decode {
            paths
                .iter()
                .map(|p| load_frame(p, geometry))
                .collect::<Result<Vec<_>>>()?
        } else {
            Vec::new()
        };
        clips.push(Clip {
            id,
            paths,
            frames,
            labels,
        });
    }
    if let Some(unknown) = ranges.keys().next() {
        return Err(Error::Input(format!(
            "label file names clip {unknown}, which is not under {}",
            root.display()
        )));
    }
    if clips.is_empty() {
        return Err(Error::Input(format!("no clips found under {}", root.display())));
    }
    Ok(FrameDataset { clips, geometry })
}
