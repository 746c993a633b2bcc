//! Base64 blobs of little-endian floats, used inside JSON artifacts.

use base64::engine::general_purpose::STANDARD;
use base64::Engine;

use crate::error::{Error, Result};

pub(crate) fn encode_f32(values: impl IntoIterator<Item = f32>) -> String {
    let bytes: Vec<u8> = values.into_iter().flat_map(f32::to_le_bytes).collect();
    STANDARD.encode(bytes)
}

pub(crate) fn decode_f32(blob: &str, expected: usize) -> Result<Vec<f32>> {
    let bytes = STANDARD
        .decode(blob)
        .map_err(|e| Error::Format(format!("invalid base64 blob: {e}")))?;
    if bytes.len() != expected * 4 {
        return Err(Error::Format(format!(
            "blob holds {} bytes, expected {}",
            bytes.len(),
            expected * 4
        )));
    }
    let values: Vec<f32> = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Data("non-finite value in blob".into()));
    }
    Ok(values)
}

pub(crate) fn encode_f64(values: &[f64]) -> String {
    let bytes: Vec<u8> = values.iter().flat_map(|v| v.to_le_bytes()).collect();
    STANDARD.encode(bytes)
}

pub(crate) fn decode_f64(blob: &str, expected: usize) -> Result<Vec<f64>> {
    let bytes = STANDARD
        .decode(blob)
        .map_err(|e| Error::Format(format!("invalid base64 blob: {e}")))?;
    if bytes.len() != expected * 8 {
        return Err(Error::Format(format!(
            "blob holds {} bytes, expected {}",
            bytes.len(),
            expected * 8
        )));
    }
    let values: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Data("non-finite value in blob".into()));
    }
    Ok(values)
}
