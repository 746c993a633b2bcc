//! VPRD interchange codec.
//!
//! Layout, all little-endian: magic `VPRD`, u32 version (1), u16 name length,
//! UTF-8 technique name, u8 collection flag (0 query, 1 reference), u32 count,
//! u32 dims, then `count * dims` float32 values row-major.

use std::fs;
use std::path::Path;

use super::{Collection, DescriptorSet};
use crate::binio::{put_name, put_u32, Reader};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"VPRD";
const VERSION: u32 = 1;

pub fn encode_descriptors(set: &DescriptorSet) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(19 + set.technique().len() + set.data().len() * 4);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    put_name(&mut out, set.technique())?;
    out.push(set.collection().flag());
    put_u32(&mut out, "count", set.count())?;
    put_u32(&mut out, "dims", set.dims())?;
    for v in set.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn decode_descriptors(bytes: &[u8]) -> Result<DescriptorSet> {
    let mut r = Reader::new(bytes);
    if r.take(4, "magic")? != MAGIC {
        return Err(Error::Format("bad magic, expected VPRD".into()));
    }
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported VPRD version {version}")));
    }
    let name = r.name()?;
    let flag = r.u8("collection flag")?;
    let collection = Collection::from_flag(flag)
        .ok_or_else(|| Error::Format(format!("invalid collection flag {flag}")))?;
    let count = r.u32("count")? as usize;
    let dims = r.u32("dims")? as usize;
    if count == 0 || dims == 0 {
        return Err(Error::Format(format!(
            "count and dims must be positive (count={count}, dims={dims})"
        )));
    }
    let n = count
        .checked_mul(dims)
        .ok_or_else(|| Error::Format("count * dims overflows".into()))?;
    let data = r.f32_payload(n)?;
    r.finish()?;
    DescriptorSet::new(name, collection, dims, data)
}

pub fn load_descriptors(path: impl AsRef<Path>) -> Result<DescriptorSet> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_descriptors(&bytes)
}

pub fn save_descriptors(set: &DescriptorSet, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_descriptors(set)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}
