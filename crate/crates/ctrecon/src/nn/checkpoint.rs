//! Versioned binary checkpoint / array-file format.
//!
//! Layout (all integers little-endian):
//! - magic `CTNN`, format version u32
//! - entry count u32
//! - per entry: name length u16, UTF-8 name, ndim u8, dims as u32s
//! - per entry, in manifest order: the values as little-endian f64
//!
//! Writes go to a temp file in the target directory and are renamed into
//! place.

use crate::error::{Error, Result};
use std::io::{Read, Write};
use std::path::Path;

const MAGIC: &[u8; 4] = b"CTNN";
const VERSION: u32 = 1;

/// A named f64 array with an explicit shape.
#[derive(Debug, Clone, PartialEq)]
pub struct ArrayEntry {
    pub name: String,
    pub dims: Vec<usize>,
    pub data: Vec<f64>,
}

impl ArrayEntry {
    pub fn new(name: impl Into<String>, dims: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let n: usize = dims.iter().product();
        if n != data.len() {
            return Err(Error::Checkpoint(format!(
                "array dims {dims:?} need {n} values, got {}",
                data.len()
            )));
        }
        Ok(ArrayEntry { name: name.into(), dims, data })
    }
}

pub fn write_arrays(path: &Path, entries: &[ArrayEntry]) -> Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    std::fs::create_dir_all(dir)?;
    let tmp = dir.join(format!(
        ".{}.tmp",
        path.file_name().and_then(|n| n.to_str()).unwrap_or("ckpt")
    ));
    {
        let mut f = std::io::BufWriter::new(std::fs::File::create(&tmp)?);
        f.write_all(MAGIC)?;
        f.write_all(&VERSION.to_le_bytes())?;
        f.write_all(&(entries.len() as u32).to_le_bytes())?;
        for e in entries {
            let name = e.name.as_bytes();
            if name.len() > u16::MAX as usize {
                return Err(Error::Checkpoint("entry name too long".into()));
            }
            f.write_all(&(name.len() as u16).to_le_bytes())?;
            f.write_all(name)?;
            f.write_all(&[e.dims.len() as u8])?;
            for &d in &e.dims {
                f.write_all(&(d as u32).to_le_bytes())?;
            }
        }
        for e in entries {
            for &v in &e.data {
                f.write_all(&v.to_le_bytes())?;
            }
        }
        f.flush()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

pub fn read_arrays(path: &Path) -> Result<Vec<ArrayEntry>> {
    let mut f = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut magic = [0u8; 4];
    f.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Checkpoint(format!("bad magic in {}", path.display())));
    }
    let version = read_u32(&mut f)?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let count = read_u32(&mut f)? as usize;
    let mut headers = Vec::with_capacity(count);
    for _ in 0..count {
        let name_len = read_u16(&mut f)? as usize;
        let mut name = vec![0u8; name_len];
        f.read_exact(&mut name)?;
        let name = String::from_utf8(name)
            .map_err(|_| Error::Checkpoint("entry name is not UTF-8".into()))?;
        let mut ndim = [0u8; 1];
        f.read_exact(&mut ndim)?;
        let mut dims = Vec::with_capacity(ndim[0] as usize);
        for _ in 0..ndim[0] {
            dims.push(read_u32(&mut f)? as usize);
        }
        headers.push((name, dims));
    }
    let mut entries = Vec::with_capacity(count);
    for (name, dims) in headers {
        let n: usize = dims.iter().product();
        let mut data = Vec::with_capacity(n);
        let mut buf = [0u8; 8];
        for _ in 0..n {
            f.read_exact(&mut buf)?;
            data.push(f64::from_le_bytes(buf));
        }
        entries.push(ArrayEntry { name, dims, data });
    }
    Ok(entries)
}

fn read_u32(f: &mut impl Read) -> Result<u32> {
    let mut buf = [0u8; 4];
    f.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

fn read_u16(f: &mut impl Read) -> Result<u16> {
    let mut buf = [0u8; 2];
    f.read_exact(&mut buf)?;
    Ok(u16::from_le_bytes(buf))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_preserves_bits() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ckpt.bin");
        let entries = vec![
            ArrayEntry::new("a", vec![2, 3], vec![1.0, -2.5, 3.0, 0.0, f64::MIN_POSITIVE, 9.9])
                .unwrap(),
            ArrayEntry::new("b/bias", vec![4], vec![0.1, 0.2, 0.3, 0.4]).unwrap(),
        ];
        write_arrays(&path, &entries).unwrap();
        let back = read_arrays(&path).unwrap();
        assert_eq!(entries, back);
    }

    #[test]
    fn rejects_bad_magic() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("junk.bin");
        std::fs::write(&path, b"NOPE....").unwrap();
        assert!(read_arrays(&path).is_err());
    }
}
