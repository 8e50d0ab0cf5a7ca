use std::fs;
use std::io::Read;
use std::path::Path;

use flate2::read::GzDecoder;

use crate::error::{Error, IdxError, Result};

/// Element type codes of the IDX format. Only unsigned bytes are decoded.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IdxType {
    UnsignedByte = 0x08,
}

/// A decoded IDX tensor: big-endian dimension sizes followed by raw data.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxTensor {
    pub dtype: IdxType,
    pub dims: Vec<usize>,
    pub data: Vec<u8>,
}

impl IdxTensor {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(4 + 4 * self.dims.len() + self.data.len());
        out.extend_from_slice(&[0, 0, self.dtype as u8, self.dims.len() as u8]);
        for &d in &self.dims {
            out.extend_from_slice(&(d as u32).to_be_bytes());
        }
        out.extend_from_slice(&self.data);
        out
    }
}

/// Decodes an IDX container.
pub fn parse_idx(bytes: &[u8]) -> Result<IdxTensor, IdxError> {
    if bytes.len() < 4 {
        return Err(IdxError::Truncated {
            expected: 4,
            actual: bytes.len(),
        });
    }
    if bytes[0] != 0 || bytes[1] != 0 {
        return Err(IdxError::BadMagic(bytes[0], bytes[1]));
    }
    let dtype = match bytes[2] {
        0x08 => IdxType::UnsignedByte,
        other => return Err(IdxError::UnsupportedType(other)),
    };
    let ndims = bytes[3] as usize;
    let header = 4 + 4 * ndims;
    if bytes.len() < header {
        return Err(IdxError::Truncated {
            expected: header,
            actual: bytes.len(),
        });
    }
    let dims: Vec<usize> = bytes[4..header]
        .chunks_exact(4)
        .map(|c| u32::from_be_bytes([c[0], c[1], c[2], c[3]]) as usize)
        .collect();
    let payload: usize = dims.iter().product();
    let expected = header + payload;
    match bytes.len().cmp(&expected) {
        std::cmp::Ordering::Less => Err(IdxError::Truncated {
            expected,
            actual: bytes.len(),
        }),
        std::cmp::Ordering::Greater => Err(IdxError::TrailingBytes {
            expected,
            extra: bytes.len() - expected,
        }),
        std::cmp::Ordering::Equal => Ok(IdxTensor {
            dtype,
            dims,
            data: bytes[header..].to_vec(),
        }),
    }
}

/// Reads an IDX file, transparently gunzipping `.gz` content.
pub fn read_idx_file(path: &Path) -> Result<IdxTensor> {
    let raw = fs::read(path).map_err(|e| Error::io(path, e))?;
    let bytes = if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(raw.as_slice())
            .read_to_end(&mut out)
            .map_err(|e| Error::io(path, e))?;
        out
    } else {
        raw
    };
    Ok(parse_idx(&bytes)?)
}
