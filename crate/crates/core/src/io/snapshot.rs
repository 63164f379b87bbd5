//! Binary field snapshots: one text header line, then raw little-endian
//! `f64` samples in row-major order.
//!
//! ```text
//! NLCHNS1 <name> <n> <l> <t> <count> le\n
//! ```

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

pub const MAGIC: &str = "NLCHNS1";

#[derive(Clone, Debug, PartialEq)]
pub struct SnapshotHeader {
    pub name: String,
    pub n: usize,
    pub l: f64,
    pub t: f64,
    pub count: usize,
}

impl SnapshotHeader {
    fn line(&self) -> String {
        format!("{MAGIC} {} {} {} {} {} le\n", self.name, self.n, self.l, self.t, self.count)
    }
}

pub fn write_snapshot(header: &SnapshotHeader, values: &[f64], path: &Path) -> Result<()> {
    if values.len() != header.count {
        return Err(Error::SizeMismatch {
            expected: header.count,
            got: values.len(),
        });
    }
    if header.name.is_empty() || header.name.contains(char::is_whitespace) {
        return Err(Error::Format {
            path: path.to_path_buf(),
            detail: format!("field name {:?} must be a single word", header.name),
        });
    }
    let mut buf = header.line().into_bytes();
    buf.reserve(values.len() * 8);
    for v in values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    let mut f = fs::File::create(path)?;
    f.write_all(&buf)?;
    Ok(())
}

pub fn read_snapshot(path: &Path) -> Result<(SnapshotHeader, Vec<f64>)> {
    let bytes = fs::read(path)?;
    let bad = |detail: String| Error::Format {
        path: path.to_path_buf(),
        detail,
    };
    let nl = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| bad("missing header line".into()))?;
    let head = std::str::from_utf8(&bytes[..nl]).map_err(|_| bad("header is not UTF-8".into()))?;
    let parts: Vec<&str> = head.split(' ').collect();
    if parts.first() != Some(&MAGIC) {
        return Err(bad(format!("bad magic {:?}", parts.first().unwrap_or(&""))));
    }
    if parts.len() != 7 {
        return Err(bad(format!("expected 7 header fields, got {}", parts.len())));
    }
    if parts[6] != "le" {
        return Err(bad(format!("unsupported byte order {:?}", parts[6])));
    }
    let num = |i: usize, what: &str| -> Result<f64> { parts[i].parse::<f64>().map_err(|_| bad(format!("bad {what} {:?}", parts[i]))) };
    let header = SnapshotHeader {
        name: parts[1].to_string(),
        n: parts[2].parse().map_err(|_| bad(format!("bad n {:?}", parts[2])))?,
        l: num(3, "l")?,
        t: num(4, "t")?,
        count: parts[5].parse().map_err(|_| bad(format!("bad count {:?}", parts[5])))?,
    };
    let payload = &bytes[nl + 1..];
    if payload.len() != header.count * 8 {
        return Err(Error::SizeMismatch {
            expected: header.count * 8,
            got: payload.len(),
        });
    }
    let values = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    Ok((header, values))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn header(count: usize) -> SnapshotHeader {
        SnapshotHeader {
            name: "phi".into(),
            n: 16,
            l: std::f64::consts::TAU,
            t: 0.1 + 0.2,
            count,
        }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("phi.bin");
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut v: Vec<f64> = (0..256).map(|_| rng.gen_range(-1e3..1e3)).collect();
        v[5] = -0.0;
        v[6] = f64::MIN_POSITIVE / 4.0;
        write_snapshot(&header(256), &v, &path).unwrap();
        let bytes = fs::read(&path).unwrap();
        let (h, back) = read_snapshot(&path).unwrap();
        assert_eq!(h, header(256));
        assert!(v.iter().zip(&back).all(|(a, b)| a.to_bits() == b.to_bits()));
        write_snapshot(&h, &back, &path).unwrap();
        assert_eq!(fs::read(&path).unwrap(), bytes);
    }

    #[test]
    fn truncated_file_is_a_size_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("phi.bin");
        write_snapshot(&header(256), &vec![1.0; 256], &path).unwrap();
        let bytes = fs::read(&path).unwrap();
        fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
        assert!(matches!(read_snapshot(&path), Err(Error::SizeMismatch { .. })));
    }

    #[test]
    fn wrong_magic_is_a_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("phi.bin");
        fs::write(&path, b"NLCHNS2 phi 16 1 0 0 le\n").unwrap();
        assert!(matches!(read_snapshot(&path), Err(Error::Format { .. })));
        fs::write(&path, b"no newline").unwrap();
        assert!(matches!(read_snapshot(&path), Err(Error::Format { .. })));
    }
}
