//! Versioned binary network checkpoints.
//!
//! Layout, all integers and floats little-endian:
//!   magic "EQNW" (4 bytes)
//!   version: u32 (currently 1)
//!   input_dim: u32, num_hidden_blocks: u32, hidden widths: u32 each,
//!   num_classes: u32, batchnorm flag: u8,
//!   then per hidden block: weight (row-major out x in), bias, and with
//!   batch norm on: gamma, beta, running_mean, running_var; finally the
//!   classifier weight and bias. Every numeric entry is an f64, so a
//!   save/load round trip is bitwise exact.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::linalg::Matrix;

use super::{init_network, Network, NetworkSpec};

const MAGIC: &[u8; 4] = b"EQNW";
const VERSION: u32 = 1;

pub fn save_checkpoint(network: &Network, path: &Path) -> Result<()> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    let spec = &network.spec;
    push_u32(&mut out, spec.input_dim)?;
    push_u32(&mut out, spec.hidden_widths.len())?;
    for &w in &spec.hidden_widths {
        push_u32(&mut out, w)?;
    }
    push_u32(&mut out, spec.num_classes)?;
    out.push(spec.batchnorm as u8);

    for block in &network.blocks {
        push_f64s(&mut out, block.linear.weight.data());
        push_f64s(&mut out, &block.linear.bias);
        if let Some(bn) = &block.bn {
            push_f64s(&mut out, &bn.gamma);
            push_f64s(&mut out, &bn.beta);
            push_f64s(&mut out, &bn.running_mean);
            push_f64s(&mut out, &bn.running_var);
        }
    }
    push_f64s(&mut out, network.classifier.weight.data());
    push_f64s(&mut out, &network.classifier.bias);

    let mut file = std::fs::File::create(path)?;
    file.write_all(&out)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Network> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    let mut cursor = Cursor {
        bytes: &bytes,
        pos: 0,
    };

    let magic = cursor.take(4)?;
    if magic != MAGIC {
        return Err(Error::Format(format!(
            "bad checkpoint magic {magic:02x?}, expected \"EQNW\""
        )));
    }
    let version = cursor.u32()?;
    if version != VERSION {
        return Err(Error::Format(format!(
            "unsupported checkpoint version {version}, expected {VERSION}"
        )));
    }
    let input_dim = cursor.u32()? as usize;
    let num_blocks = cursor.u32()? as usize;
    let mut hidden_widths = Vec::with_capacity(num_blocks);
    for _ in 0..num_blocks {
        hidden_widths.push(cursor.u32()? as usize);
    }
    let num_classes = cursor.u32()? as usize;
    let batchnorm = match cursor.take(1)?[0] {
        0 => false,
        1 => true,
        other => {
            return Err(Error::Format(format!(
                "invalid batchnorm flag {other}"
            )))
        }
    };
    let spec = NetworkSpec {
        input_dim,
        hidden_widths,
        num_classes,
        batchnorm,
    };
    // Build a correctly-shaped network, then overwrite every value.
    let mut network = init_network(&spec, 0)?;
    for block in &mut network.blocks {
        cursor.fill_matrix(&mut block.linear.weight)?;
        cursor.fill_slice(&mut block.linear.bias)?;
        if let Some(bn) = &mut block.bn {
            cursor.fill_slice(&mut bn.gamma)?;
            cursor.fill_slice(&mut bn.beta)?;
            cursor.fill_slice(&mut bn.running_mean)?;
            cursor.fill_slice(&mut bn.running_var)?;
        }
    }
    cursor.fill_matrix(&mut network.classifier.weight)?;
    cursor.fill_slice(&mut network.classifier.bias)?;
    if cursor.pos != bytes.len() {
        return Err(Error::Format(format!(
            "{} trailing bytes after checkpoint payload",
            bytes.len() - cursor.pos
        )));
    }
    Ok(network)
}

fn push_u32(out: &mut Vec<u8>, value: usize) -> Result<()> {
    let v = u32::try_from(value)
        .map_err(|_| Error::Format(format!("dimension {value} exceeds u32 range")))?;
    out.extend_from_slice(&v.to_le_bytes());
    Ok(())
}

fn push_f64s(out: &mut Vec<u8>, values: &[f64]) {
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, len: usize) -> Result<&'a [u8]> {
        if self.pos + len > self.bytes.len() {
            return Err(Error::Format("truncated checkpoint".into()));
        }
        let slice = &self.bytes[self.pos..self.pos + len];
        self.pos += len;
        Ok(slice)
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes(b.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        let b = self.take(8)?;
        Ok(f64::from_le_bytes(b.try_into().unwrap()))
    }

    fn fill_slice(&mut self, target: &mut [f64]) -> Result<()> {
        for v in target {
            *v = self.f64()?;
        }
        Ok(())
    }

    fn fill_matrix(&mut self, target: &mut Matrix) -> Result<()> {
        self.fill_slice(target.data_mut())
    }
}
