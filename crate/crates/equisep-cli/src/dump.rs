//! Activation-dump wire format: per-layer features plus labels in one
//! binary file, so externally produced activations (residual networks,
//! CNNs, transformers) can be analyzed without training them here.
//!
//! Layout, all integers and floats little-endian:
//!   magic "EQSP" (4 bytes), version u32 (currently 1),
//!   num_layers u32, n u32, K u32,
//!   labels: n x u32,
//!   per layer: d u32, then n x d f32 row-major.
//!
//! Features are stored as 32-bit floats; analysis upcasts to 64-bit.

use std::io::{Read, Write};
use std::path::Path;

use equisep::linalg::Matrix;
use equisep::{Error, Result};

const MAGIC: &[u8; 4] = b"EQSP";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct ActivationDump {
    pub labels: Vec<usize>,
    pub num_classes: usize,
    /// One n x d_l matrix per capture point, f32 values widened to f64.
    pub layers: Vec<Matrix>,
}

pub fn write_dump(layers: &[Matrix], labels: &[usize], num_classes: usize, path: &Path) -> Result<()> {
    if layers.is_empty() {
        return Err(Error::Format("dump needs at least one layer".into()));
    }
    let n = labels.len();
    for (l, layer) in layers.iter().enumerate() {
        if layer.rows() != n {
            return Err(Error::Dimension(format!(
                "layer {l} has {} rows, expected {n}",
                layer.rows()
            )));
        }
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= num_classes) {
        return Err(Error::Label {
            label: bad,
            num_classes,
        });
    }

    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    push_u32(&mut out, layers.len())?;
    push_u32(&mut out, n)?;
    push_u32(&mut out, num_classes)?;
    for &label in labels {
        push_u32(&mut out, label)?;
    }
    for layer in layers {
        push_u32(&mut out, layer.cols())?;
        for &v in layer.data() {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    let mut file = std::fs::File::create(path)?;
    file.write_all(&out)?;
    Ok(())
}

pub fn read_dump(path: &Path) -> Result<ActivationDump> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    let mut pos = 0usize;

    let magic = take(&bytes, &mut pos, 4)?;
    if magic != MAGIC {
        return Err(Error::Format(format!(
            "bad dump magic {magic:02x?}, expected \"EQSP\""
        )));
    }
    let version = read_u32(&bytes, &mut pos)?;
    if version != VERSION {
        return Err(Error::Format(format!(
            "unsupported dump version {version}, expected {VERSION}"
        )));
    }
    let num_layers = read_u32(&bytes, &mut pos)? as usize;
    let n = read_u32(&bytes, &mut pos)? as usize;
    let num_classes = read_u32(&bytes, &mut pos)? as usize;
    if num_layers == 0 {
        return Err(Error::Format("dump has zero layers".into()));
    }

    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let label = read_u32(&bytes, &mut pos)? as usize;
        if label >= num_classes {
            return Err(Error::Label { label, num_classes });
        }
        labels.push(label);
    }

    let mut layers = Vec::with_capacity(num_layers);
    for _ in 0..num_layers {
        let d = read_u32(&bytes, &mut pos)? as usize;
        let mut layer = Matrix::zeros(n, d);
        for v in layer.data_mut() {
            let raw = take(&bytes, &mut pos, 4)?;
            *v = f32::from_le_bytes(raw.try_into().unwrap()) as f64;
        }
        layers.push(layer);
    }
    if pos != bytes.len() {
        return Err(Error::Length {
            expected: pos,
            found: bytes.len(),
        });
    }
    Ok(ActivationDump {
        labels,
        num_classes,
        layers,
    })
}

fn push_u32(out: &mut Vec<u8>, value: usize) -> Result<()> {
    let v = u32::try_from(value)
        .map_err(|_| Error::Format(format!("value {value} exceeds u32 range")))?;
    out.extend_from_slice(&v.to_le_bytes());
    Ok(())
}

fn take<'a>(bytes: &'a [u8], pos: &mut usize, len: usize) -> Result<&'a [u8]> {
    if *pos + len > bytes.len() {
        return Err(Error::Length {
            expected: *pos + len,
            found: bytes.len(),
        });
    }
    let slice = &bytes[*pos..*pos + len];
    *pos += len;
    Ok(slice)
}

fn read_u32(bytes: &[u8], pos: &mut usize) -> Result<u32> {
    let raw = take(bytes, pos, 4)?;
    Ok(u32::from_le_bytes(raw.try_into().unwrap()))
}
