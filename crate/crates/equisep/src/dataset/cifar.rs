//! CIFAR-10 binary format: 3073-byte records of 1 label byte followed
//! by the 32x32 red, green, and blue planes.

use crate::error::{Error, Result};
use crate::linalg::Matrix;

use super::ImageDataset;

const RECORD_LEN: usize = 3073;
const PLANE: usize = 1024;
const NUM_CLASSES: usize = 10;

/// Parse a CIFAR-10 binary stream, keeping a single color channel.
/// Pixels are scaled to [0, 1] by /255; channel 1 is the green plane
/// used throughout the analysis.
pub fn parse_cifar10(bytes: &[u8], channel: usize) -> Result<ImageDataset> {
    if channel >= 3 {
        return Err(Error::Config(format!(
            "CIFAR-10 channel must be 0, 1, or 2, got {channel}"
        )));
    }
    if bytes.len() % RECORD_LEN != 0 {
        return Err(Error::Format(format!(
            "CIFAR-10 stream length {} is not a multiple of {RECORD_LEN}",
            bytes.len()
        )));
    }
    let n = bytes.len() / RECORD_LEN;
    let mut features = Matrix::zeros(n, PLANE);
    let mut labels = Vec::with_capacity(n);
    for (i, record) in bytes.chunks_exact(RECORD_LEN).enumerate() {
        let label = record[0] as usize;
        if label >= NUM_CLASSES {
            return Err(Error::Label {
                label,
                num_classes: NUM_CLASSES,
            });
        }
        labels.push(label);
        let plane = &record[1 + channel * PLANE..1 + (channel + 1) * PLANE];
        for (dst, &src) in features.row_mut(i).iter_mut().zip(plane) {
            *dst = src as f64 / 255.0;
        }
    }
    ImageDataset::new(features, labels, NUM_CLASSES)
}
