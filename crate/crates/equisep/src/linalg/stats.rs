//! Scalar statistics: Pearson correlation and ordinary least squares.

use crate::error::{Error, Result};

/// Sample Pearson correlation coefficient, always in [-1, 1].
pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(Error::Dimension(format!(
            "pearson needs two equal-length series of length >= 2, got {} and {}",
            xs.len(),
            ys.len()
        )));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    let mut sxy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        let dx = x - mx;
        let dy = y - my;
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    if sxx <= 0.0 {
        return Err(Error::ZeroVariance("pearson: constant xs"));
    }
    if syy <= 0.0 {
        return Err(Error::ZeroVariance("pearson: constant ys"));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Ordinary least squares line y = slope * x + intercept.
pub fn fit_line(xs: &[f64], ys: &[f64]) -> Result<(f64, f64)> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(Error::Dimension(format!(
            "fit_line needs two equal-length series of length >= 2, got {} and {}",
            xs.len(),
            ys.len()
        )));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
    }
    if sxx <= 0.0 {
        return Err(Error::ZeroVariance("fit_line: constant xs"));
    }
    let slope = sxy / sxx;
    Ok((slope, my - slope * mx))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    #[test]
    fn pearson_exact_linear() {
        let r = pearson(&[0.0, 1.0, 2.0], &[0.0, -1.0, -2.0]).unwrap();
        assert!((r + 1.0).abs() < 1e-15);
    }

    // Hand evaluation: centered x = (-1,0,1), centered y = (-1,1,0);
    // sxy = 1, sxx = 2, syy = 2, r = 1/2.
    #[test]
    fn pearson_hand_example() {
        let r = pearson(&[1.0, 2.0, 3.0], &[1.0, 3.0, 2.0]).unwrap();
        assert!((r - 0.5).abs() < 1e-15);
    }

    #[test]
    fn pearson_constant_input_errors() {
        assert!(matches!(
            pearson(&[1.0, 1.0, 1.0], &[0.0, 1.0, 2.0]),
            Err(Error::ZeroVariance(_))
        ));
        assert!(matches!(
            pearson(&[0.0, 1.0, 2.0], &[4.0, 4.0, 4.0]),
            Err(Error::ZeroVariance(_))
        ));
    }

    #[test]
    fn pearson_affine_invariance() {
        let mut rng = Rng::from_seed(77);
        let xs: Vec<f64> = (0..20).map(|_| rng.next_normal()).collect();
        let ys: Vec<f64> = (0..20).map(|_| rng.next_normal()).collect();
        let base = pearson(&xs, &ys).unwrap();
        let scaled: Vec<f64> = ys.iter().map(|y| 3.5 * y + 2.0).collect();
        let negated: Vec<f64> = ys.iter().map(|y| -2.0 * y + 1.0).collect();
        assert!((pearson(&xs, &scaled).unwrap() - base).abs() < 1e-12);
        assert!((pearson(&xs, &negated).unwrap() + base).abs() < 1e-12);
    }

    #[test]
    fn fit_line_exact() {
        let xs = [0.0, 1.0, 2.0, 3.0];
        let ys: Vec<f64> = xs.iter().map(|x| 2.0 * x + 1.0).collect();
        let (slope, intercept) = fit_line(&xs, &ys).unwrap();
        assert!((slope - 2.0).abs() < 1e-14);
        assert!((intercept - 1.0).abs() < 1e-14);
    }

    #[test]
    fn fit_line_two_points() {
        let (slope, intercept) = fit_line(&[0.0, 1.0], &[0.0, 3.0]).unwrap();
        assert!((slope - 3.0).abs() < 1e-14);
        assert!(intercept.abs() < 1e-14);
    }

    // Independent oracle: grid search over (slope, intercept) cannot
    // find a smaller squared error than the closed form.
    #[test]
    fn fit_line_beats_grid_search() {
        let mut rng = Rng::from_seed(123);
        let xs: Vec<f64> = (0..15).map(|i| i as f64 * 0.3).collect();
        let ys: Vec<f64> = xs
            .iter()
            .map(|x| 1.7 * x - 0.4 + 0.05 * rng.next_normal())
            .collect();
        let (slope, intercept) = fit_line(&xs, &ys).unwrap();
        let sse = |a: f64, b: f64| -> f64 {
            xs.iter()
                .zip(&ys)
                .map(|(x, y)| (y - (a * x + b)).powi(2))
                .sum()
        };
        let best = sse(slope, intercept);
        let mut grid_best = f64::INFINITY;
        let mut grid_arg = (0.0, 0.0);
        for i in 0..400 {
            for j in 0..400 {
                let a = 1.2 + i as f64 * 0.0025; // [1.2, 2.2)
                let b = -0.9 + j as f64 * 0.0025; // [-0.9, 0.1)
                let s = sse(a, b);
                if s < grid_best {
                    grid_best = s;
                    grid_arg = (a, b);
                }
            }
        }
        assert!(best <= grid_best + 1e-12);
        assert!((grid_arg.0 - slope).abs() < 5e-3);
        assert!((grid_arg.1 - intercept).abs() < 5e-3);
    }

    // Normal equations: residuals orthogonal to xs and to the ones vector.
    #[test]
    fn fit_line_residual_orthogonality() {
        let mut rng = Rng::from_seed(55);
        let xs: Vec<f64> = (0..30).map(|_| rng.next_normal()).collect();
        let ys: Vec<f64> = (0..30).map(|_| rng.next_normal()).collect();
        let (slope, intercept) = fit_line(&xs, &ys).unwrap();
        let residuals: Vec<f64> = xs
            .iter()
            .zip(&ys)
            .map(|(x, y)| y - (slope * x + intercept))
            .collect();
        let against_ones: f64 = residuals.iter().sum();
        let against_x: f64 = residuals.iter().zip(&xs).map(|(r, x)| r * x).sum();
        assert!(against_ones.abs() < 1e-9);
        assert!(against_x.abs() < 1e-9);
    }
}
