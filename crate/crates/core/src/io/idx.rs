//! IDX container used by MNIST: `0x00 0x00 <type> <rank>`, `rank` big-endian
//! u32 extents, then the payload. Only unsigned-byte payloads are accepted.

use std::io::Read;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

const UBYTE: u8 = 0x08;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IdxFile {
    pub dims: Vec<u32>,
    pub data: Vec<u8>,
}

impl IdxFile {
    pub fn parse(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 4 {
            return Err(Error::format(bytes.len() as u64, "truncated magic number"));
        }
        if bytes[0] != 0 || bytes[1] != 0 {
            let at = if bytes[0] != 0 { 0 } else { 1 };
            return Err(Error::format(at, "magic number must start with two zero bytes"));
        }
        if bytes[2] != UBYTE {
            return Err(Error::format(
                2,
                format!("unsupported element type 0x{:02x}, expected 0x08", bytes[2]),
            ));
        }
        let rank = bytes[3] as usize;
        if rank == 0 {
            return Err(Error::format(3, "rank must be at least 1"));
        }
        let header = 4 + 4 * rank;
        if bytes.len() < header {
            return Err(Error::format(bytes.len() as u64, "truncated dimension header"));
        }
        let dims: Vec<u32> = bytes[4..header]
            .chunks_exact(4)
            .map(|c| u32::from_be_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        let payload = dims
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d as usize))
            .ok_or_else(|| Error::format(4, "dimension product overflows"))?;
        let have = bytes.len() - header;
        if have < payload {
            return Err(Error::format(
                bytes.len() as u64,
                format!("truncated payload: expected {payload} bytes, found {have}"),
            ));
        }
        if have > payload {
            return Err(Error::format(
                (header + payload) as u64,
                format!("{} trailing bytes after payload", have - payload),
            ));
        }
        Ok(IdxFile {
            dims,
            data: bytes[header..].to_vec(),
        })
    }

    /// Serialises back to the exact IDX byte layout.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = vec![0, 0, UBYTE, self.dims.len() as u8];
        for d in &self.dims {
            out.extend_from_slice(&d.to_be_bytes());
        }
        out.extend_from_slice(&self.data);
        out
    }

    /// Rank-3 image stack as `[N, H, W]` scaled from `0..=255` to `[-1, 1]`.
    pub fn to_images(&self) -> Result<Tensor> {
        if self.dims.len() != 3 {
            return Err(Error::Input(format!(
                "image file must have rank 3, found rank {}",
                self.dims.len()
            )));
        }
        let shape: Vec<usize> = self.dims.iter().map(|&d| d as usize).collect();
        if shape.iter().any(|&d| d == 0) {
            return Err(Error::Input("image file has an empty dimension".into()));
        }
        Tensor::new(shape, self.data.iter().map(|&b| scale_byte(b)).collect())
    }

    pub fn to_labels(&self) -> Result<Vec<u8>> {
        if self.dims.len() != 1 {
            return Err(Error::Input(format!(
                "label file must have rank 1, found rank {}",
                self.dims.len()
            )));
        }
        Ok(self.data.clone())
    }
}

/// Maps an 8-bit intensity onto `[-1, 1]`.
pub fn scale_byte(b: u8) -> f32 {
    b as f32 / 127.5 - 1.0
}

pub fn load_idx(path: &Path) -> Result<IdxFile> {
    let mut bytes = Vec::new();
    super::open(path)?.read_to_end(&mut bytes)?;
    IdxFile::parse(&bytes)
}

pub fn load_images(path: &Path) -> Result<Tensor> {
    load_idx(path)?.to_images()
}

pub fn load_labels(path: &Path) -> Result<Vec<u8>> {
    load_idx(path)?.to_labels()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_label_file() {
        let bytes = [0, 0, 8, 1, 0, 0, 0, 3, 0, 1, 0];
        let f = IdxFile::parse(&bytes).unwrap();
        assert_eq!(f.to_labels().unwrap(), vec![0, 1, 0]);
        assert_eq!(f.to_bytes(), bytes);
    }

    #[test]
    fn rank3_images() {
        let mut bytes = vec![0, 0, 8, 3, 0, 0, 0, 2, 0, 0, 0, 2, 0, 0, 0, 2];
        bytes.extend([0, 255, 0, 255, 255, 0, 255, 0]);
        let t = IdxFile::parse(&bytes).unwrap().to_images().unwrap();
        assert_eq!(t.shape(), &[2, 2, 2]);
        assert_eq!(t.data(), &[-1.0, 1.0, -1.0, 1.0, 1.0, -1.0, 1.0, -1.0]);
    }

    #[test]
    fn errors_carry_offsets() {
        let bad_magic = [1, 0, 8, 1, 0, 0, 0, 1, 0];
        assert!(matches!(IdxFile::parse(&bad_magic), Err(Error::Format { offset: 0, .. })));
        let bad_type = [0, 0, 9, 1, 0, 0, 0, 1, 0];
        assert!(matches!(IdxFile::parse(&bad_type), Err(Error::Format { offset: 2, .. })));
        let short_header = [0, 0, 8, 2, 0, 0, 0, 1];
        assert!(matches!(IdxFile::parse(&short_header), Err(Error::Format { offset: 8, .. })));
        let short_payload = [0, 0, 8, 1, 0, 0, 0, 3, 0, 1];
        assert!(matches!(IdxFile::parse(&short_payload), Err(Error::Format { offset: 10, .. })));
        let trailing = [0, 0, 8, 1, 0, 0, 0, 1, 0, 7];
        assert!(matches!(IdxFile::parse(&trailing), Err(Error::Format { offset: 9, .. })));
    }

    #[test]
    fn rank_checks() {
        let labels = IdxFile::parse(&[0, 0, 8, 1, 0, 0, 0, 1, 5]).unwrap();
        assert!(labels.to_images().is_err());
        let mut bytes = vec![0, 0, 8, 3, 0, 0, 0, 1, 0, 0, 0, 1, 0, 0, 0, 1];
        bytes.push(9);
        assert!(IdxFile::parse(&bytes).unwrap().to_labels().is_err());
    }
}
