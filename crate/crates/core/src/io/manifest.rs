//! Stream manifest: one `clip,frame,label` row per emitted sample, in order.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mixer::SampleRef;

#[derive(Serialize, Deserialize)]
struct Row {
    clip: u32,
    frame: u32,
    label: u8,
}

pub fn write_manifest_to<W: Write>(w: W, samples: &[SampleRef]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for s in samples {
        out.serialize(Row {
            clip: s.clip,
            frame: s.frame,
            label: s.label,
        })
        .map_err(|e| Error::Input(e.to_string()))?;
    }
    if samples.is_empty() {
        out.write_record(["clip", "frame", "label"])
            .map_err(|e| Error::Input(e.to_string()))?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_manifest(path: &Path, samples: &[SampleRef]) -> Result<()> {
    write_manifest_to(super::create(path)?, samples)
}

pub fn read_manifest_from<R: Read>(r: R) -> Result<Vec<SampleRef>> {
    let mut rdr = csv::Reader::from_reader(r);
    rdr.deserialize::<Row>()
        .map(|row| {
            let row = row.map_err(|e| {
                Error::format(e.position().map_or(0, |p| p.byte()), e.to_string())
            })?;
            if row.label > 1 {
                return Err(Error::Input(format!("manifest label {} is not 0/1", row.label)));
            }
            Ok(SampleRef {
                clip: row.clip,
                frame: row.frame,
                label: row.label,
            })
        })
        .collect()
}

pub fn read_manifest(path: &Path) -> Result<Vec<SampleRef>> {
    read_manifest_from(super::open(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let s = vec![
            SampleRef { clip: 3, frame: 1, label: 0 },
            SampleRef { clip: 0, frame: 9, label: 1 },
        ];
        let mut buf = Vec::new();
        write_manifest_to(&mut buf, &s).unwrap();
        assert!(String::from_utf8(buf.clone()).unwrap().starts_with("clip,frame,label\n"));
        assert_eq!(read_manifest_from(&buf[..]).unwrap(), s);
        let mut empty = Vec::new();
        write_manifest_to(&mut empty, &[]).unwrap();
        assert!(read_manifest_from(&empty[..]).unwrap().is_empty());
    }
}
