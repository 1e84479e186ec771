//! File formats: MNIST IDX, frame directories with label ranges, model
//! checkpoints, score logs, stream manifests and metric reports.

pub mod checkpoint;
pub mod frames;
pub mod idx;
pub mod manifest;
pub mod report;
pub mod scores;

pub use frames::{index_frame_dataset, load_frame_dataset, Clip, FrameDataset, FrameGeometry};
pub use idx::{load_idx, load_images, load_labels, IdxFile};
pub use manifest::{read_manifest, write_manifest};
pub use report::{render_roc_svg, MetricReport, ReplicateRow, RocSeries};
pub use scores::{read_scores, write_scores};

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use crate::error::{Error, Result};

pub(crate) fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

pub(crate) fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            Error::Input(format!("{} does not exist", path.display()))
        } else {
            Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
        }
    })
}
