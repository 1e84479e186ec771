//! Per-sample score log: `index,loss,mu,tau,admitted,label`.

use std::io::{Read, Write};
use std::path::Path;

use crate::em_filter::ScoreRecord;
use crate::error::{Error, Result};

pub const HEADER: [&str; 6] = ["index", "loss", "mu", "tau", "admitted", "label"];

fn csv_err(e: csv::Error) -> Error {
    let offset = e.position().map_or(0, |p| p.byte());
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::format(offset, format!("{other:?}")),
    }
}

pub fn write_scores_to<W: Write>(w: W, records: &[ScoreRecord]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(HEADER).map_err(csv_err)?;
    for r in records {
        out.write_record([
            r.index.to_string(),
            r.loss.to_string(),
            r.mu.to_string(),
            r.tau.to_string(),
            u8::from(r.admitted).to_string(),
            r.label.to_string(),
        ])
        .map_err(csv_err)?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_scores(path: &Path, records: &[ScoreRecord]) -> Result<()> {
    write_scores_to(super::create(path)?, records)
}

pub fn read_scores_from<R: Read>(r: R) -> Result<Vec<ScoreRecord>> {
    let mut rdr = csv::Reader::from_reader(r);
    let header = rdr.headers().map_err(csv_err)?.clone();
    if header.iter().ne(HEADER) {
        return Err(Error::format(0, format!("unexpected score header {header:?}")));
    }
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(csv_err)?;
        let offset = row.position().map_or(0, |p| p.byte());
        let bad = |field: &str| Error::format(offset, format!("invalid {field} field"));
        let f = |i: usize, name: &str| -> Result<f64> { row[i].parse().map_err(|_| bad(name)) };
        let loss = f(1, "loss")?;
        let admitted = match &row[4] {
            "0" => false,
            "1" => true,
            _ => return Err(bad("admitted")),
        };
        out.push(ScoreRecord {
            index: row[0].parse().map_err(|_| bad("index"))?,
            loss,
            mu: f(2, "mu")?,
            tau: f(3, "tau")?,
            admitted,
            label: row[5].parse().map_err(|_| bad("label"))?,
            error: !loss.is_finite(),
        });
    }
    Ok(out)
}

pub fn read_scores(path: &Path) -> Result<Vec<ScoreRecord>> {
    read_scores_from(super::open(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn record(i: u64, loss: f64) -> ScoreRecord {
        ScoreRecord {
            index: i,
            loss,
            mu: loss * 0.5,
            tau: 5e-5,
            admitted: i % 2 == 0,
            label: (i % 3) as i8 - 1,
            error: false,
        }
    }

    #[test]
    fn empty_and_single() {
        let mut buf = Vec::new();
        write_scores_to(&mut buf, &[]).unwrap();
        assert_eq!(String::from_utf8(buf.clone()).unwrap(), "index,loss,mu,tau,admitted,label\n");
        assert!(read_scores_from(&buf[..]).unwrap().is_empty());
        let mut buf = Vec::new();
        write_scores_to(&mut buf, &[record(7, 0.25)]).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 2);
    }

    #[test]
    fn bad_header_and_fields() {
        assert!(read_scores_from(&b"a,b\n"[..]).is_err());
        assert!(read_scores_from(&b"index,loss,mu,tau,admitted,label\n1,x,0,0,1,0\n"[..]).is_err());
        assert!(read_scores_from(&b"index,loss,mu,tau,admitted,label\n1,0,0,0,2,0\n"[..]).is_err());
    }

    proptest! {
        #[test]
        fn round_trip(losses in proptest::collection::vec(0.0f64..1e6, 0..200)) {
            let recs: Vec<_> = losses.iter().enumerate().map(|(i, &l)| record(i as u64, l)).collect();
            let mut buf = Vec::new();
            write_scores_to(&mut buf, &recs).unwrap();
            prop_assert_eq!(read_scores_from(&buf[..]).unwrap(), recs);
        }
    }
}
