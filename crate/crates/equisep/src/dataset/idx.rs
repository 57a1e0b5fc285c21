//! IDX binary format (MNIST / Fashion-MNIST): big-endian magic,
//! big-endian 32-bit dimension sizes, then raw unsigned bytes.

use crate::error::{Error, Result};

const MAGIC_IMAGES: u32 = 0x0000_0803;
const MAGIC_LABELS: u32 = 0x0000_0801;

/// An unsigned-byte tensor as stored in an IDX file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxTensor {
    dims: Vec<usize>,
    data: Vec<u8>,
}

impl IdxTensor {
    pub fn new(dims: Vec<usize>, data: Vec<u8>) -> Result<Self> {
        let expected: usize = dims.iter().product();
        if data.len() != expected {
            return Err(Error::Length {
                expected,
                found: data.len(),
            });
        }
        Ok(Self { dims, data })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }
}

/// Parse an IDX byte stream. Accepts the image magic (3 dims) and the
/// label magic (1 dim).
pub fn parse_idx(bytes: &[u8]) -> Result<IdxTensor> {
    if bytes.len() < 4 {
        return Err(Error::Length {
            expected: 4,
            found: bytes.len(),
        });
    }
    let magic = u32::from_be_bytes(bytes[0..4].try_into().unwrap());
    let ndims = match magic {
        MAGIC_IMAGES => 3,
        MAGIC_LABELS => 1,
        other => {
            return Err(Error::Format(format!(
                "unrecognized IDX magic 0x{other:08x}"
            )))
        }
    };
    let header_len = 4 + 4 * ndims;
    if bytes.len() < header_len {
        return Err(Error::Length {
            expected: header_len,
            found: bytes.len(),
        });
    }
    let dims: Vec<usize> = (0..ndims)
        .map(|i| {
            u32::from_be_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().unwrap()) as usize
        })
        .collect();
    let payload: usize = dims.iter().product();
    if bytes.len() != header_len + payload {
        return Err(Error::Length {
            expected: header_len + payload,
            found: bytes.len(),
        });
    }
    IdxTensor::new(dims, bytes[header_len..].to_vec())
}

/// Serialize a tensor back to IDX bytes (1-dim -> label magic,
/// 3-dim -> image magic).
pub fn serialize_idx(tensor: &IdxTensor) -> Result<Vec<u8>> {
    let magic = match tensor.dims.len() {
        1 => MAGIC_LABELS,
        3 => MAGIC_IMAGES,
        n => {
            return Err(Error::Format(format!(
                "IDX serialization supports 1 or 3 dims, got {n}"
            )))
        }
    };
    let mut out = Vec::with_capacity(4 + 4 * tensor.dims.len() + tensor.data.len());
    out.extend_from_slice(&magic.to_be_bytes());
    for &d in &tensor.dims {
        out.extend_from_slice(&(d as u32).to_be_bytes());
    }
    out.extend_from_slice(&tensor.data);
    Ok(out)
}

/// Read and parse an IDX file from disk.
pub fn load_idx(path: &std::path::Path) -> Result<IdxTensor> {
    parse_idx(&std::fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    // Hand-built from the IDX layout: image magic, dims (1,2,2),
    // payload (0,64,128,255).
    #[test]
    fn parse_hand_built_image() {
        let bytes = [
            0x00, 0x00, 0x08, 0x03, // magic
            0, 0, 0, 1, 0, 0, 0, 2, 0, 0, 0, 2, // dims 1,2,2
            0, 64, 128, 255,
        ];
        let t = parse_idx(&bytes).unwrap();
        assert_eq!(t.dims(), &[1, 2, 2]);
        assert_eq!(t.data(), &[0, 64, 128, 255]);
    }

    #[test]
    fn parse_hand_built_labels() {
        let bytes = [0x00, 0x00, 0x08, 0x01, 0, 0, 0, 3, 0, 5, 9];
        let t = parse_idx(&bytes).unwrap();
        assert_eq!(t.dims(), &[3]);
        assert_eq!(t.data(), &[0, 5, 9]);
    }

    #[test]
    fn wrong_magic_rejected() {
        let bytes = [0x00, 0x00, 0x08, 0x05, 0, 0, 0, 1, 7];
        assert!(matches!(parse_idx(&bytes), Err(Error::Format(_))));
    }

    #[test]
    fn truncated_payload_rejected() {
        let bytes = [0x00, 0x00, 0x08, 0x01, 0, 0, 0, 4, 1, 2];
        assert!(matches!(parse_idx(&bytes), Err(Error::Length { .. })));
    }

    #[test]
    fn round_trip() {
        let t = IdxTensor::new(vec![2, 2, 3], (0u8..12).collect()).unwrap();
        assert_eq!(parse_idx(&serialize_idx(&t).unwrap()).unwrap(), t);
    }
}
