//! NVOL: a small bit-exact container for float volumes.
//!
//! ```text
//! offset size  field
//!      0   16  magic "\x89NVOL\r\n\x1a\n" + 7 zero bytes
//!     16    4  version (u32 LE, = 1)
//!     20    4  dtype tag (u32 LE, 1 = f32 LE)
//!     24    4  channel layout tag (u32 LE)
//!     28   16  channels, depth, height, width (u32 LE each)
//!     44   24  spacing z, y, x in mm (f64 LE each)
//!     68    8  payload element count (u64 LE)
//!     76    …  payload, channel-major
//! ```

use std::fs;
use std::path::Path;

use super::{ChannelLayout, Volume, VolumeError};

pub const NVOL_MAGIC: [u8; 16] = *b"\x89NVOL\r\n\x1a\n\0\0\0\0\0\0\0";
pub const NVOL_VERSION: u32 = 1;
pub const NVOL_HEADER_LEN: usize = 76;
const DTYPE_F32: u32 = 1;

pub fn encode_nvol(v: &Volume) -> Vec<u8> {
    let mut out = Vec::with_capacity(NVOL_HEADER_LEN + 4 * v.data().len());
    out.extend_from_slice(&NVOL_MAGIC);
    for word in [NVOL_VERSION, DTYPE_F32, v.layout().tag(), v.channels() as u32] {
        out.extend_from_slice(&word.to_le_bytes());
    }
    for d in v.dims() {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for s in v.spacing() {
        out.extend_from_slice(&s.to_le_bytes());
    }
    out.extend_from_slice(&(v.data().len() as u64).to_le_bytes());
    for x in v.data() {
        out.extend_from_slice(&x.to_le_bytes());
    }
    out
}

fn u32_at(buf: &[u8], off: usize) -> u32 {
    u32::from_le_bytes(buf[off..off + 4].try_into().expect("4 bytes"))
}

pub fn decode_nvol(buf: &[u8]) -> Result<Volume, VolumeError> {
    if buf.len() < NVOL_MAGIC.len() || buf[..NVOL_MAGIC.len()] != NVOL_MAGIC {
        return Err(VolumeError::BadMagic);
    }
    if buf.len() < NVOL_HEADER_LEN {
        return Err(VolumeError::Truncated(format!("header is {} of {NVOL_HEADER_LEN} bytes", buf.len())));
    }
    let version = u32_at(buf, 16);
    if version != NVOL_VERSION {
        return Err(VolumeError::UnsupportedVersion(version));
    }
    let dtype = u32_at(buf, 20);
    if dtype != DTYPE_F32 {
        return Err(VolumeError::UnsupportedDtype(dtype));
    }
    let layout = ChannelLayout::from_tag(u32_at(buf, 24))?;
    let channels = u32_at(buf, 28) as usize;
    let dims = [u32_at(buf, 32) as usize, u32_at(buf, 36) as usize, u32_at(buf, 40) as usize];
    let mut spacing = [0.0; 3];
    for (a, s) in spacing.iter_mut().enumerate() {
        *s = f64::from_le_bytes(buf[44 + 8 * a..52 + 8 * a].try_into().expect("8 bytes"));
    }
    let count = u64::from_le_bytes(buf[68..76].try_into().expect("8 bytes"));
    let expected = (channels as u64) * dims.iter().map(|&d| d as u64).product::<u64>();
    if count != expected {
        return Err(VolumeError::LengthMismatch { expected, found: count });
    }
    let payload = &buf[NVOL_HEADER_LEN..];
    let have = (payload.len() / 4) as u64;
    if have < count {
        return Err(VolumeError::Truncated(format!("payload has {have} of {count} elements")));
    }
    if payload.len() as u64 != 4 * count {
        return Err(VolumeError::LengthMismatch { expected: count, found: payload.len() as u64 / 4 });
    }
    let data = payload.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes"))).collect();
    Volume::with_layout(channels, dims, spacing, layout, data)
}

pub fn save_nvol(path: impl AsRef<Path>, v: &Volume) -> Result<(), VolumeError> {
    fs::write(path, encode_nvol(v))?;
    Ok(())
}

pub fn load_nvol(path: impl AsRef<Path>) -> Result<Volume, VolumeError> {
    decode_nvol(&fs::read(path)?)
}
