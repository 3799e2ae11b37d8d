//! XEB1 binary embedding files.
//!
//! Layout, all integers little-endian:
//!
//! | field    | size             | value                                  |
//! |----------|------------------|----------------------------------------|
//! | magic    | 4                | `b"XEB1"` (`0x58454231`)               |
//! | version  | u16              | 1                                      |
//! | modality | u8               | 0 = text, 1 = image                    |
//! | dtype    | u8               | 0 = IEEE-754 binary32                  |
//! | count    | u64              | number of rows                         |
//! | dim      | u32              | values per row                         |
//! | ids      | count × (u16 + n)| byte length, then UTF-8 bytes          |
//! | payload  | count × dim × 4  | row-major f32                          |
//!
//! The fixed header is 20 bytes.

use std::fs;
use std::path::Path;

use super::{EmbeddingSet, Modality};
use crate::error::{Error, Result};

pub const XEB_MAGIC: [u8; 4] = *b"XEB1";
pub const XEB_VERSION: u16 = 1;
const DTYPE_F32: u8 = 0;
pub(crate) const HEADER_LEN: usize = 20;

pub fn encode_embeddings(set: &EmbeddingSet) -> Result<Vec<u8>> {
    set.check_finite()?;
    let dim = u32::try_from(set.dim()).map_err(|_| Error::Shape(format!("dim {} exceeds u32", set.dim())))?;
    let id_bytes: usize = set.ids().iter().map(|id| 2 + id.len()).sum();
    let mut out = Vec::with_capacity(HEADER_LEN + id_bytes + set.data().len() * 4);
    out.extend_from_slice(&XEB_MAGIC);
    out.extend_from_slice(&XEB_VERSION.to_le_bytes());
    out.push(set.modality().code());
    out.push(DTYPE_F32);
    out.extend_from_slice(&(set.count() as u64).to_le_bytes());
    out.extend_from_slice(&dim.to_le_bytes());
    for id in set.ids() {
        let len = u16::try_from(id.len()).map_err(|_| Error::IdTooLong {
            id: id.clone(),
            len: id.len(),
        })?;
        out.extend_from_slice(&len.to_le_bytes());
        out.extend_from_slice(id.as_bytes());
    }
    for v in set.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

/// Writes `set` to `path`. Nothing is written if the set fails validation.
pub fn save_embeddings(set: &EmbeddingSet, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_embeddings(set)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_embeddings(path: impl AsRef<Path>) -> Result<EmbeddingSet> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_embeddings(&bytes)
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| {
                Error::Truncated(format!(
                    "{what} needs {n} bytes at offset {}, only {} remain",
                    self.pos,
                    self.buf.len() - self.pos
                ))
            })?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
}

pub fn decode_embeddings(bytes: &[u8]) -> Result<EmbeddingSet> {
    let mut cur = Cursor { buf: bytes, pos: 0 };
    let magic: [u8; 4] = cur.take(4, "magic")?.try_into().unwrap();
    if magic != XEB_MAGIC {
        return Err(Error::BadMagic { found: magic });
    }
    let version = cur.u16("version")?;
    if version != XEB_VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let modality = Modality::from_code(cur.u8("modality")?)?;
    let dtype = cur.u8("dtype")?;
    if dtype != DTYPE_F32 {
        return Err(Error::UnsupportedDtype(dtype));
    }
    let count = cur.u64("count")?;
    let dim = cur.u32("dim")? as usize;
    if dim == 0 {
        return Err(Error::ZeroDim);
    }

    // Every id costs at least two bytes, which bounds `count` before allocating.
    let remaining = bytes.len() - cur.pos;
    if count > (remaining / 2) as u64 {
        return Err(Error::Truncated(format!(
            "declared {count} ids but only {remaining} bytes follow the header"
        )));
    }
    let count = count as usize;
    let mut ids = Vec::with_capacity(count);
    for index in 0..count {
        let len = cur.u16("id length")? as usize;
        let raw = cur.take(len, "id bytes")?;
        let id = std::str::from_utf8(raw).map_err(|_| Error::InvalidUtf8 { index })?;
        ids.push(id.to_owned());
    }

    let payload_len = count
        .checked_mul(dim)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| Error::Truncated(format!("payload of {count}×{dim} values overflows")))?;
    let remaining = bytes.len() - cur.pos;
    if remaining < payload_len {
        return Err(Error::Truncated(format!(
            "declared {count} rows of dim {dim} ({payload_len} bytes), found {remaining} bytes ({} full rows)",
            remaining / (dim * 4)
        )));
    }
    let payload = cur.take(payload_len, "payload")?;
    if cur.pos != bytes.len() {
        return Err(Error::TrailingBytes(bytes.len() - cur.pos));
    }
    let data = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    EmbeddingSet::new(modality, dim, ids, data)
}
