//! VPRS similarity-matrix cache: magic `VPRS`, u32 version (1), u16 name
//! length + UTF-8 technique name, u32 Q, u32 D, float32 scores row-major.

use std::fs;
use std::path::Path;

use super::{Metric, SimilarityMatrix};
use crate::binio::{put_name, put_u32, Reader};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"VPRS";
const VERSION: u32 = 1;

pub fn encode_similarity(m: &SimilarityMatrix) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(18 + m.technique().len() + m.scores().len() * 4);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    put_name(&mut out, m.technique())?;
    put_u32(&mut out, "Q", m.queries())?;
    put_u32(&mut out, "D", m.refs())?;
    for &s in m.scores() {
        out.extend_from_slice(&(s as f32).to_le_bytes());
    }
    Ok(out)
}

/// Decodes a cache; the metric is not stored and comes from the manifest.
pub fn decode_similarity(bytes: &[u8], metric: Metric) -> Result<SimilarityMatrix> {
    let mut r = Reader::new(bytes);
    if r.take(4, "magic")? != MAGIC {
        return Err(Error::Format("bad magic, expected VPRS".into()));
    }
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported VPRS version {version}")));
    }
    let name = r.name()?;
    let q = r.u32("Q")? as usize;
    let d = r.u32("D")? as usize;
    let n = q
        .checked_mul(d)
        .ok_or_else(|| Error::Format("Q * D overflows".into()))?;
    let scores = r.f32_payload(n)?;
    r.finish()?;
    SimilarityMatrix::new(name, metric, q, d, scores.into_iter().map(f64::from).collect())
}

pub fn load_similarity(path: impl AsRef<Path>, metric: Metric) -> Result<SimilarityMatrix> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_similarity(&bytes, metric)
}

pub fn save_similarity(m: &SimilarityMatrix, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_similarity(m)?).map_err(|e| Error::io(path, e))
}
