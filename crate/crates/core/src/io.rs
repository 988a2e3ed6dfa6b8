//! Binary score and embedding files.
//!
//! SSF v1: magic `SSFv1\0\0\0`, u32 LE `n`, then `n` f32 LE values.
//! EMB v1: magic `EMBv1\0\0\0`, u32 LE `n`, u32 LE `dim`, then `n * dim`
//! f32 LE values, row-major.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

pub const SSF_MAGIC: &[u8; 8] = b"SSFv1\0\0\0";
pub const EMB_MAGIC: &[u8; 8] = b"EMBv1\0\0\0";

pub(crate) fn read_magic(bytes: &[u8], magic: &[u8; 8], kind: &str) -> Result<()> {
    if bytes.len() < 8 {
        return Err(Error::Format(format!("{kind} file shorter than its magic")));
    }
    if &bytes[..8] != magic {
        return Err(Error::Format(format!(
            "{kind} magic/version mismatch: found {:?}",
            String::from_utf8_lossy(&bytes[..8])
        )));
    }
    Ok(())
}

pub(crate) fn read_u32(bytes: &[u8], at: usize, what: &str) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_le_bytes(b.try_into().expect("4 bytes")))
        .ok_or_else(|| Error::Format(format!("truncated header: missing {what}")))
}

/// Decode `count` f32 records starting at `at`, rejecting short bodies and
/// non-finite records. `record_len` groups values into records for the error.
pub(crate) fn read_f32s(
    bytes: &[u8],
    at: usize,
    count: usize,
    record_len: usize,
    what: &'static str,
) -> Result<Vec<f64>> {
    let body = &bytes[at..];
    let available = body.len() / 4;
    if available != count || !body.len().is_multiple_of(4) {
        return Err(Error::LengthMismatch {
            declared: count / record_len.max(1),
            found: available / record_len.max(1),
        });
    }
    body.chunks_exact(4)
        .enumerate()
        .map(|(i, c)| {
            let v = f32::from_le_bytes(c.try_into().expect("4 bytes"));
            if v.is_finite() {
                Ok(f64::from(v))
            } else {
                Err(Error::NonFinite {
                    what,
                    index: i / record_len.max(1),
                })
            }
        })
        .collect()
}

fn read_all(path: &Path) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut buf))
        .map_err(|e| Error::file(path, e))?;
    Ok(buf)
}

fn write_all(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::File::create(path)
        .and_then(|mut f| f.write_all(bytes))
        .map_err(|e| Error::file(path, e))
}

fn to_f32(values: &[f64], what: &'static str, record_len: usize) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(values.len() * 4);
    for (i, &v) in values.iter().enumerate() {
        let f = v as f32;
        if !f.is_finite() {
            return Err(Error::NonFinite {
                what,
                index: i / record_len,
            });
        }
        out.extend_from_slice(&f.to_le_bytes());
    }
    Ok(out)
}

pub fn encode_ssf(values: &[f64]) -> Result<Vec<u8>> {
    let n = u32::try_from(values.len())
        .map_err(|_| Error::Format("too many scores for SSF v1".into()))?;
    let mut out = Vec::with_capacity(12 + values.len() * 4);
    out.extend_from_slice(SSF_MAGIC);
    out.extend_from_slice(&n.to_le_bytes());
    out.extend(to_f32(values, "scores", 1)?);
    Ok(out)
}

pub fn decode_ssf(bytes: &[u8]) -> Result<Vec<f64>> {
    read_magic(bytes, SSF_MAGIC, "SSF")?;
    let n = read_u32(bytes, 8, "record count")? as usize;
    read_f32s(bytes, 12, n, 1, "scores")
}

pub fn write_ssf(path: impl AsRef<Path>, values: &[f64]) -> Result<()> {
    write_all(path.as_ref(), &encode_ssf(values)?)
}

pub fn read_ssf(path: impl AsRef<Path>) -> Result<Vec<f64>> {
    decode_ssf(&read_all(path.as_ref())?)
}

pub fn encode_emb(n: usize, dim: usize, values: &[f64]) -> Result<Vec<u8>> {
    if values.len() != n * dim {
        return Err(Error::ShapeMismatch {
            what: "embedding matrix",
            expected: n * dim,
            found: values.len(),
        });
    }
    let n32 = u32::try_from(n).map_err(|_| Error::Format("n too large for EMB v1".into()))?;
    let d32 = u32::try_from(dim).map_err(|_| Error::Format("dim too large for EMB v1".into()))?;
    let mut out = Vec::with_capacity(16 + values.len() * 4);
    out.extend_from_slice(EMB_MAGIC);
    out.extend_from_slice(&n32.to_le_bytes());
    out.extend_from_slice(&d32.to_le_bytes());
    out.extend(to_f32(values, "embeddings", dim.max(1))?);
    Ok(out)
}

/// Returns `(n, dim, row-major values)`.
pub fn decode_emb(bytes: &[u8]) -> Result<(usize, usize, Vec<f64>)> {
    read_magic(bytes, EMB_MAGIC, "EMB")?;
    let n = read_u32(bytes, 8, "record count")? as usize;
    let dim = read_u32(bytes, 12, "dimension")? as usize;
    if dim == 0 {
        return Err(Error::Format("EMB dimension is zero".into()));
    }
    let values = read_f32s(bytes, 16, n * dim, dim, "embeddings")?;
    Ok((n, dim, values))
}

pub fn write_emb(path: impl AsRef<Path>, n: usize, dim: usize, values: &[f64]) -> Result<()> {
    write_all(path.as_ref(), &encode_emb(n, dim, values)?)
}

pub fn read_emb(path: impl AsRef<Path>) -> Result<(usize, usize, Vec<f64>)> {
    decode_emb(&read_all(path.as_ref())?)
}

pub(crate) fn read_file(path: &Path) -> Result<Vec<u8>> {
    read_all(path)
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    write_all(path, bytes)
}
