//! Area-averaging (box filter) image resize. Parameter-free and
//! mean-preserving, so runs reproduce across implementations.

use crate::error::{Error, Result};

/// Resize an h x w image (row-major) to new_h x new_w. Each output
/// pixel is the area-weighted average of the source rectangle it
/// covers; the global mean is preserved.
pub fn resize_area(
    image: &[f64],
    h: usize,
    w: usize,
    new_h: usize,
    new_w: usize,
) -> Result<Vec<f64>> {
    if h == 0 || w == 0 || image.len() != h * w {
        return Err(Error::Dimension(format!(
            "resize_area: bad source {h}x{w} with {} values",
            image.len()
        )));
    }
    if new_h == 0 || new_w == 0 {
        return Err(Error::Dimension("resize_area: zero target size".into()));
    }
    if (h, w) == (new_h, new_w) {
        return Ok(image.to_vec());
    }

    let scale_y = h as f64 / new_h as f64;
    let scale_x = w as f64 / new_w as f64;
    let mut out = vec![0.0; new_h * new_w];
    for oy in 0..new_h {
        let y0 = oy as f64 * scale_y;
        let y1 = (oy + 1) as f64 * scale_y;
        for ox in 0..new_w {
            let x0 = ox as f64 * scale_x;
            let x1 = (ox + 1) as f64 * scale_x;
            let mut acc = 0.0;
            let mut area = 0.0;
            let sy_end = (y1.ceil() as usize).min(h);
            let sx_end = (x1.ceil() as usize).min(w);
            for sy in (y0.floor() as usize)..sy_end {
                let cover_y = (y1.min((sy + 1) as f64) - y0.max(sy as f64)).max(0.0);
                for sx in (x0.floor() as usize)..sx_end {
                    let cover_x = (x1.min((sx + 1) as f64) - x0.max(sx as f64)).max(0.0);
                    let weight = cover_y * cover_x;
                    acc += weight * image[sy * w + sx];
                    area += weight;
                }
            }
            out[oy * new_w + ox] = acc / area;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mean(v: &[f64]) -> f64 {
        v.iter().sum::<f64>() / v.len() as f64
    }

    #[test]
    fn constant_image_stays_constant() {
        let image = vec![0.37; 28 * 28];
        for (nh, nw) in [(10, 10), (7, 13), (1, 1), (40, 40)] {
            let out = resize_area(&image, 28, 28, nh, nw).unwrap();
            assert!(out.iter().all(|v| (v - 0.37).abs() < 1e-12));
        }
    }

    #[test]
    fn global_mean_single_pixel() {
        let out = resize_area(&[0.0, 2.0, 4.0, 6.0], 2, 2, 1, 1).unwrap();
        assert!((out[0] - 3.0).abs() < 1e-12);
    }

    // 4x4 ramp 0..15 downsampled 2x: each output is its 2x2 block mean.
    #[test]
    fn ramp_block_means() {
        let image: Vec<f64> = (0..16).map(|v| v as f64).collect();
        let out = resize_area(&image, 4, 4, 2, 2).unwrap();
        assert_eq!(out, vec![2.5, 4.5, 10.5, 12.5]);
    }

    #[test]
    fn mean_preserved_on_uneven_ratio() {
        let image: Vec<f64> = (0..28 * 28).map(|v| (v % 97) as f64 / 96.0).collect();
        let out = resize_area(&image, 28, 28, 10, 10).unwrap();
        assert!((mean(&image) - mean(&out)).abs() < 1e-12);
    }

    #[test]
    fn round_trip_of_constant_is_identity() {
        let image = vec![1.25; 6 * 6];
        let down = resize_area(&image, 6, 6, 3, 3).unwrap();
        let back = resize_area(&down, 3, 3, 6, 6).unwrap();
        assert_eq!(back, image);
    }

    #[test]
    fn zero_target_rejected() {
        assert!(resize_area(&[1.0], 1, 1, 0, 5).is_err());
    }
}
