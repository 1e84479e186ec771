//! Parameter checkpoints.
//!
//! Layout (all integers little-endian u32):
//!
//! ```text
//! "CADM" | version | count | count × { name_len | name | rank | dims… | f32 data… }
//! ```

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"CADM";
pub const VERSION: u32 = 1;

pub fn write<W: Write, S: AsRef<str>>(w: &mut W, entries: &[(S, &Tensor)]) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(entries.len() as u32).to_le_bytes())?;
    for (name, t) in entries {
        let name = name.as_ref().as_bytes();
        w.write_all(&(name.len() as u32).to_le_bytes())?;
        w.write_all(name)?;
        w.write_all(&(t.shape().len() as u32).to_le_bytes())?;
        for &d in t.shape() {
            w.write_all(&(d as u32).to_le_bytes())?;
        }
        for v in t.data() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::format(
                self.bytes.len() as u64,
                format!("truncated {what}"),
            ));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

pub fn parse(bytes: &[u8]) -> Result<Vec<(String, Tensor)>> {
    let mut c = Cursor { bytes, pos: 0 };
    if c.take(4, "magic")? != MAGIC {
        return Err(Error::format(0, "not a checkpoint (bad magic)"));
    }
    let version = c.u32("version")?;
    if version != VERSION {
        return Err(Error::format(4, format!("unsupported checkpoint version {version}")));
    }
    let count = c.u32("entry count")?;
    let mut out = Vec::new();
    for _ in 0..count {
        let at = c.pos as u64;
        let len = c.u32("name length")? as usize;
        let name = std::str::from_utf8(c.take(len, "name")?)
            .map_err(|_| Error::format(at + 4, "parameter name is not UTF-8"))?
            .to_owned();
        let rank = c.u32("rank")? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(c.u32("shape")? as usize);
        }
        let numel = shape
            .iter()
            .try_fold(1usize, |a, &d| a.checked_mul(d))
            .filter(|&n| n.checked_mul(4).is_some())
            .ok_or_else(|| Error::format(at, format!("{name}: shape overflows")))?;
        let data = c
            .take(numel * 4, "tensor data")?
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        let t = Tensor::new(shape, data).map_err(|e| Error::format(at, format!("{name}: {e}")))?;
        out.push((name, t));
    }
    if c.pos != bytes.len() {
        return Err(Error::format(c.pos as u64, "trailing bytes after last entry"));
    }
    Ok(out)
}

pub fn save<S: AsRef<str>>(path: &Path, entries: &[(S, &Tensor)]) -> Result<()> {
    let mut w = super::create(path)?;
    write(&mut w, entries)?;
    w.flush()?;
    Ok(())
}

pub fn load(path: &Path) -> Result<Vec<(String, Tensor)>> {
    let mut bytes = Vec::new();
    super::open(path)?.read_to_end(&mut bytes)?;
    parse(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bitwise() {
        let a = Tensor::new([2, 2], vec![1.5, -0.0, f32::MIN_POSITIVE, 3.0e-41]).unwrap();
        let b = Tensor::new([3], vec![f32::MAX, -1.0, 0.1]).unwrap();
        let mut buf = Vec::new();
        write(&mut buf, &[("a", &a), ("layer.b", &b)]).unwrap();
        let back = parse(&buf).unwrap();
        assert_eq!(back[0].0, "a");
        assert_eq!(back[1].0, "layer.b");
        let bits = |t: &Tensor| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&back[0].1), bits(&a));
        assert_eq!(bits(&back[1].1), bits(&b));
        let mut again = Vec::new();
        let refs: Vec<(&str, &Tensor)> = back.iter().map(|(n, t)| (n.as_str(), t)).collect();
        write(&mut again, &refs).unwrap();
        assert_eq!(buf, again);
    }

    #[test]
    fn corrupt_input_is_rejected() {
        let t = Tensor::ones([2]);
        let mut buf = Vec::new();
        write(&mut buf, &[("w", &t)]).unwrap();
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(matches!(parse(&bad), Err(Error::Format { offset: 0, .. })));
        assert!(matches!(parse(&buf[..buf.len() - 1]), Err(Error::Format { .. })));
        let mut long = buf.clone();
        long.push(0);
        assert!(parse(&long).is_err());
        let mut ver = buf;
        ver[4] = 9;
        assert!(matches!(parse(&ver), Err(Error::Format { offset: 4, .. })));
    }
}
