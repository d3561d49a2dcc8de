use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use super::field::{Rank, TorusField};
use super::grid::GridSpec;
use crate::error::{Error, Result};

pub const SNAPSHOT_MAGIC: &[u8; 4] = b"WEF1";

/// Serialize a field and its time stamp into the snapshot byte layout.
pub fn encode_snapshot(field: &TorusField, t: f64) -> Vec<u8> {
    let grid = field.grid();
    let mut out = Vec::with_capacity(20 + 8 * grid.len() * field.rank().components());
    out.extend_from_slice(SNAPSHOT_MAGIC);
    out.extend_from_slice(&(grid.n() as u32).to_le_bytes());
    out.extend_from_slice(&field.rank().code().to_le_bytes());
    out.extend_from_slice(&t.to_le_bytes());
    for c in field.components() {
        for x in c {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    out
}

pub fn decode_snapshot(bytes: &[u8]) -> Result<(TorusField, f64)> {
    if bytes.len() < 20 || &bytes[..4] != SNAPSHOT_MAGIC {
        return Err(Error::Format("missing WEF1 header".into()));
    }
    let word = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    let n = word(4) as usize;
    let rank = Rank::from_code(word(8))
        .ok_or_else(|| Error::Format(format!("unknown rank code {}", word(8))))?;
    let t = f64::from_le_bytes(bytes[12..20].try_into().unwrap());
    let grid = GridSpec::new(n)?;
    let expected = 20 + 8 * grid.len() * rank.components();
    if bytes.len() != expected {
        return Err(Error::Format(format!(
            "snapshot has {} bytes, expected {expected}",
            bytes.len()
        )));
    }
    let comps = bytes[20..]
        .chunks_exact(8 * grid.len())
        .map(|chunk| {
            chunk
                .chunks_exact(8)
                .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
                .collect()
        })
        .collect();
    Ok((TorusField::from_components(grid, rank, comps)?, t))
}

/// Write atomically (temp file in the same directory, then rename).
pub fn write_snapshot(path: &Path, field: &TorusField, t: f64) -> Result<()> {
    write_atomic(path, &encode_snapshot(field, t))
}

pub fn read_snapshot(path: &Path) -> Result<(TorusField, f64)> {
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    decode_snapshot(&bytes)
}

pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("partial");
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_layout() {
        let g = GridSpec::new(8).unwrap();
        let f = TorusField::constant(g, Rank::Vector, &[1.0, 2.0, 3.0]);
        let b = encode_snapshot(&f, 0.5);
        assert_eq!(&b[..4], b"WEF1");
        assert_eq!(&b[4..8], &[8, 0, 0, 0]);
        assert_eq!(&b[8..12], &[1, 0, 0, 0]);
        assert_eq!(&b[12..20], &0.5f64.to_le_bytes());
        assert_eq!(b.len(), 20 + 8 * 3 * 512);
        assert_eq!(&b[20 + 8 * 512..28 + 8 * 512], &2.0f64.to_le_bytes());
    }

    #[test]
    fn file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let g = GridSpec::new(8).unwrap();
        let f = TorusField::sym_fn(g, |x| [[x[0], x[1], 0.0], [x[1], x[2], 1.0], [0.0, 1.0, -x[0]]]);
        let p = dir.path().join("r.wef");
        write_snapshot(&p, &f, -1.25).unwrap();
        let (back, t) = read_snapshot(&p).unwrap();
        assert_eq!(back, f);
        assert_eq!(t, -1.25);
        assert!(decode_snapshot(&[0u8; 10]).is_err());
    }
}
