//! Binary parameter files.
//!
//! Layout, all integers little-endian `u32`:
//!
//! ```text
//! count
//! count × { name_len, name (UTF-8), ndim, ndim × dim }
//! count × { product(dims) × f64 (little-endian) }
//! ```
//!
//! The payload follows the name table in the same entry order; the file
//! ends exactly after the last value.

use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::{ParamSet, Tensor};

pub fn to_bytes(params: &ParamSet) -> Result<Vec<u8>> {
    let u32_of = |x: usize, what: &str| u32::try_from(x).map_err(|_| Error::invalid(format!("{what} exceeds u32")));
    let mut out = Vec::with_capacity(16 + params.flat_len() * 8);
    out.extend_from_slice(&u32_of(params.len(), "entry count")?.to_le_bytes());
    for (name, t) in params.iter() {
        out.extend_from_slice(&u32_of(name.len(), "name length")?.to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&u32_of(t.ndim(), "ndim")?.to_le_bytes());
        for &d in t.shape() {
            out.extend_from_slice(&u32_of(d, "dimension")?.to_le_bytes());
        }
    }
    for (_, t) in params.iter() {
        for &x in t.data() {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Parse { offset: self.pos, msg: format!("truncated: need {n} more bytes") })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }
}

pub fn from_bytes(bytes: &[u8]) -> Result<ParamSet> {
    let mut r = Reader { bytes, pos: 0 };
    let count = r.u32()?;
    let mut table = Vec::with_capacity(count.min(1024));
    for _ in 0..count {
        let len = r.u32()?;
        let at = r.pos;
        let name = std::str::from_utf8(r.take(len)?)
            .map_err(|_| Error::Parse { offset: at, msg: "name is not UTF-8".into() })?
            .to_string();
        let ndim = r.u32()?;
        let mut shape = Vec::with_capacity(ndim.min(16));
        for _ in 0..ndim {
            shape.push(r.u32()?);
        }
        table.push((name, shape));
    }
    let mut entries = Vec::with_capacity(table.len());
    for (name, shape) in table {
        let n = shape
            .iter()
            .try_fold(1usize, |a, &d| a.checked_mul(d))
            .ok_or_else(|| Error::Parse { offset: r.pos, msg: "shape overflows".into() })?;
        let raw =
            r.take(n.checked_mul(8).ok_or_else(|| Error::Parse { offset: r.pos, msg: "payload overflows".into() })?)?;
        let data = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        entries.push((name, Tensor::new(shape, data)?));
    }
    if r.pos != bytes.len() {
        return Err(Error::Parse { offset: r.pos, msg: "trailing bytes".into() });
    }
    ParamSet::new(entries)
}

pub fn save(path: &Path, params: &ParamSet) -> Result<()> {
    std::fs::write(path, to_bytes(params)?)?;
    Ok(())
}

pub fn load(path: &Path) -> Result<ParamSet> {
    from_bytes(&std::fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_layout() {
        let p = ParamSet::new(vec![("ab".into(), Tensor::new(vec![1, 2], vec![1.0, -2.5]).unwrap())]).unwrap();
        let b = to_bytes(&p).unwrap();
        let mut want = vec![1, 0, 0, 0, 2, 0, 0, 0, b'a', b'b', 2, 0, 0, 0, 1, 0, 0, 0, 2, 0, 0, 0];
        want.extend_from_slice(&1.0f64.to_le_bytes());
        want.extend_from_slice(&(-2.5f64).to_le_bytes());
        assert_eq!(b, want);
        assert_eq!(from_bytes(&b).unwrap(), p);
    }

    #[test]
    fn truncation_and_trailing_bytes_rejected() {
        let p = ParamSet::new(vec![("w".into(), Tensor::full(&[3], 0.5))]).unwrap();
        let b = to_bytes(&p).unwrap();
        assert!(from_bytes(&b[..b.len() - 1]).is_err());
        let mut extra = b.clone();
        extra.push(0);
        assert!(from_bytes(&extra).is_err());
    }
}
