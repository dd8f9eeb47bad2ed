//! Named-parameter archive.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic      8 bytes   "SRCKPT\0\0"
//! version    u32       currently 1
//! dtype      u32       1 = f32, 2 = f64
//! meta_len   u32       followed by meta_len bytes of UTF-8 metadata
//! count      u32       number of parameters
//! repeated count times:
//!   name_len u32, name bytes
//!   ndim     u32, ndim × u64 extents
//!   payload  product(extents) elements, little-endian
//! ```
//!
//! Parameters are written in the set's insertion order, so identical sets
//! produce identical bytes.

use std::fs;
use std::path::Path;

use super::{NnError, ParamSet, Scalar, Tensor};

pub const MAGIC: [u8; 8] = *b"SRCKPT\0\0";
pub const VERSION: u32 = 1;

pub fn to_bytes<T: Scalar>(params: &ParamSet<T>, meta: &str) -> Vec<u8> {
    let mut out = Vec::with_capacity(64 + params.num_scalars() * std::mem::size_of::<T>());
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&T::DTYPE_TAG.to_le_bytes());
    out.extend_from_slice(&(meta.len() as u32).to_le_bytes());
    out.extend_from_slice(meta.as_bytes());
    out.extend_from_slice(&(params.len() as u32).to_le_bytes());
    for p in params.iter() {
        out.extend_from_slice(&(p.name.len() as u32).to_le_bytes());
        out.extend_from_slice(p.name.as_bytes());
        out.extend_from_slice(&(p.value.shape().len() as u32).to_le_bytes());
        for &d in p.value.shape() {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for &v in p.value.data() {
            match T::DTYPE_TAG {
                1 => out.extend_from_slice(&(v.as_f64() as f32).to_le_bytes()),
                _ => out.extend_from_slice(&v.as_f64().to_le_bytes()),
            }
        }
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], NnError> {
        let end = self.pos.checked_add(n).ok_or(NnError::Truncated)?;
        let s = self.buf.get(self.pos..end).ok_or(NnError::Truncated)?;
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, NnError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64, NnError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn string(&mut self) -> Result<String, NnError> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| NnError::Corrupt("non-UTF-8 string".into()))
    }
}

/// Parses an archive, returning the parameters and the metadata string.
pub fn from_bytes<T: Scalar>(buf: &[u8]) -> Result<(ParamSet<T>, String), NnError> {
    let mut r = Reader { buf, pos: 0 };
    if r.take(MAGIC.len()).map_err(|_| NnError::BadMagic)? != MAGIC {
        return Err(NnError::BadMagic);
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(NnError::UnsupportedVersion(version));
    }
    let dtype = r.u32()?;
    if dtype != T::DTYPE_TAG {
        return Err(NnError::DtypeMismatch { expected: T::DTYPE_TAG, found: dtype });
    }
    let meta = r.string()?;
    let count = r.u32()?;
    let mut params = ParamSet::new();
    for _ in 0..count {
        let name = r.string()?;
        let ndim = r.u32()? as usize;
        let shape = (0..ndim).map(|_| r.u64().map(|d| d as usize)).collect::<Result<Vec<_>, _>>()?;
        let n: usize = shape.iter().product();
        let width = if dtype == 1 { 4 } else { 8 };
        let bytes = r.take(n.checked_mul(width).ok_or(NnError::Truncated)?)?;
        let data = bytes
            .chunks_exact(width)
            .map(|c| match width {
                4 => T::from_f64(f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64),
                _ => T::from_f64(f64::from_le_bytes(c.try_into().expect("8 bytes"))),
            })
            .collect();
        params.add(name, Tensor::from_vec(&shape, data)?)?;
    }
    if r.pos != buf.len() {
        return Err(NnError::Corrupt(format!("{} trailing bytes", buf.len() - r.pos)));
    }
    Ok((params, meta))
}

pub fn save<T: Scalar>(path: impl AsRef<Path>, params: &ParamSet<T>, meta: &str) -> Result<(), NnError> {
    fs::write(path, to_bytes(params, meta))?;
    Ok(())
}

pub fn load<T: Scalar>(path: impl AsRef<Path>) -> Result<(ParamSet<T>, String), NnError> {
    from_bytes(&fs::read(path)?)
}
