//! CVRT: a minimal little-endian float32 tensor container.
//!
//! Layout: `b"CVRT"`, u16 version (1), u8 dtype (1 = f32), u8 ndim,
//! `ndim` u32 dims, then the row-major payload. No padding, no footer.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::TensorND;

pub const MAGIC: [u8; 4] = *b"CVRT";
pub const VERSION: u16 = 1;
pub const DTYPE_F32: u8 = 1;

pub fn encode(tensor: &TensorND) -> Result<Vec<u8>> {
    let ndim = u8::try_from(tensor.ndim())
        .map_err(|_| Error::Invalid(format!("{} dims exceed the CVRT limit", tensor.ndim())))?;
    let mut out = Vec::with_capacity(8 + 4 * tensor.ndim() + 4 * tensor.len());
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(DTYPE_F32);
    out.push(ndim);
    for &d in tensor.dims() {
        let d = u32::try_from(d).map_err(|_| Error::Invalid(format!("extent {d} exceeds u32")))?;
        out.extend_from_slice(&d.to_le_bytes());
    }
    for v in tensor.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn decode(bytes: &[u8]) -> Result<TensorND> {
    if bytes.len() < 4 {
        return Err(Error::TruncatedHeader);
    }
    if bytes[..4] != MAGIC {
        return Err(Error::BadMagic {
            expected: "CVRT".into(),
            found: String::from_utf8_lossy(&bytes[..4]).into_owned(),
        });
    }
    if bytes.len() < 8 {
        return Err(Error::TruncatedHeader);
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    if bytes[6] != DTYPE_F32 {
        return Err(Error::UnsupportedDtype(bytes[6]));
    }
    let ndim = bytes[7] as usize;
    let header_len = 8 + 4 * ndim;
    if bytes.len() < header_len {
        return Err(Error::TruncatedHeader);
    }
    let dims: Vec<usize> = bytes[8..header_len]
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes([c[0], c[1], c[2], c[3]]) as usize)
        .collect();
    let count: usize = dims.iter().product();
    let expected = 4 * count;
    let payload = &bytes[header_len..];
    if payload.len() < expected {
        return Err(Error::TruncatedPayload {
            expected,
            found: payload.len(),
        });
    }
    if payload.len() > expected {
        return Err(Error::TrailingBytes(payload.len() - expected));
    }
    let data = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    TensorND::new(dims, data)
}

/// Writes atomically: the bytes go to a sibling temp file that is then renamed.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension(format!(
        "{}.tmp",
        path.extension().and_then(|e| e.to_str()).unwrap_or("")
    ));
    {
        let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
        f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    }
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn write_cvrt(path: impl AsRef<Path>, tensor: &TensorND) -> Result<()> {
    write_atomic(path.as_ref(), &encode(tensor)?)
}

pub fn read_cvrt(path: impl AsRef<Path>) -> Result<TensorND> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}
