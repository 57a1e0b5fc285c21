//! PCA via power iteration with deflation.
//!
//! Only a couple of components are ever requested (two, for feature
//! visualization), so power iteration on the centered data beats a full
//! eigendecomposition of the covariance.

use crate::error::{Error, Result};
use crate::linalg::{dot, Matrix};
use crate::rng::Rng;

const TOL: f64 = 1e-10;
const MAX_ITERS: usize = 10_000;

/// Top-k principal components of the rows of `x`.
///
/// Returns (components, variances): components is k x d with orthonormal
/// rows ordered by explained variance descending; variances are the
/// corresponding eigenvalues of the sample covariance (1/(n-1) scaling).
pub fn top_k_components(x: &Matrix, k: usize) -> Result<(Matrix, Vec<f64>)> {
    let (n, d) = (x.rows(), x.cols());
    if n < 2 {
        return Err(Error::Dimension(format!("PCA needs n >= 2, got {n}")));
    }
    if k == 0 || k > n.min(d) {
        return Err(Error::Dimension(format!(
            "k = {k} out of range for {n}x{d} data"
        )));
    }

    // Center.
    let mut centered = x.clone();
    let mut mean = vec![0.0; d];
    for r in 0..n {
        for (m, v) in mean.iter_mut().zip(x.row(r)) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    for r in 0..n {
        for (v, m) in centered.row_mut(r).iter_mut().zip(&mean) {
            *v -= m;
        }
    }

    let total_variance: f64 =
        centered.data().iter().map(|v| v * v).sum::<f64>() / (n - 1) as f64;
    if total_variance <= f64::MIN_POSITIVE {
        return Err(Error::DegenerateData("zero-variance data in PCA".into()));
    }

    // Power iteration on v -> Cov v = Xᵀ(Xv)/(n-1), deflating after each
    // extracted component.
    let mut rng = Rng::from_seed(0x9E3779B97F4A7C15);
    let mut components = Matrix::zeros(k, d);
    let mut variances = Vec::with_capacity(k);
    let mut extracted: Vec<Vec<f64>> = Vec::new();

    for comp in 0..k {
        let mut v: Vec<f64> = (0..d).map(|_| rng.next_normal()).collect();
        normalize(&mut v);
        let mut lambda = 0.0;
        for _ in 0..MAX_ITERS {
            let xv = centered.matvec(&v)?;
            let mut w = centered.tmatvec(&xv)?;
            for val in &mut w {
                *val /= (n - 1) as f64;
            }
            // Deflate: project out every previously extracted direction.
            for prev_v in &extracted {
                let proj = dot(&w, prev_v);
                for (wi, pi) in w.iter_mut().zip(prev_v) {
                    *wi -= proj * pi;
                }
            }
            let new_lambda = norm(&w);
            if new_lambda <= f64::MIN_POSITIVE {
                break;
            }
            for val in &mut w {
                *val /= new_lambda;
            }
            let delta = (new_lambda - lambda).abs();
            let converged = delta <= TOL * new_lambda.max(1.0)
                && v.iter().zip(&w).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max) <= TOL.sqrt();
            v = w;
            lambda = new_lambda;
            if converged {
                break;
            }
        }
        // Re-orthogonalize against earlier components for robustness.
        for prev_v in &extracted {
            let proj = dot(&v, prev_v);
            for (vi, pi) in v.iter_mut().zip(prev_v) {
                *vi -= proj * pi;
            }
        }
        normalize(&mut v);
        components.row_mut(comp).copy_from_slice(&v);
        variances.push(lambda);
        extracted.push(v);
    }

    Ok((components, variances))
}

/// Project the rows of `x` (centered internally) onto the components.
pub fn project(x: &Matrix, components: &Matrix) -> Result<Matrix> {
    let (n, d) = (x.rows(), x.cols());
    if components.cols() != d {
        return Err(Error::Dimension(format!(
            "project: components are {}-dimensional, data is {d}-dimensional",
            components.cols()
        )));
    }
    let mut mean = vec![0.0; d];
    for r in 0..n {
        for (m, v) in mean.iter_mut().zip(x.row(r)) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    let k = components.rows();
    let mut out = Matrix::zeros(n, k);
    let mut centered_row = vec![0.0; d];
    for r in 0..n {
        for ((c, v), m) in centered_row.iter_mut().zip(x.row(r)).zip(&mean) {
            *c = v - m;
        }
        for j in 0..k {
            out.set(r, j, dot(&centered_row, components.row(j)));
        }
    }
    Ok(out)
}

fn norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

fn normalize(v: &mut [f64]) {
    let n = norm(v);
    if n > 0.0 {
        for x in v {
            *x /= n;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::sym_eig;
    use crate::rng::Rng;

    fn random_data(n: usize, d: usize, seed: u64) -> Matrix {
        let mut rng = Rng::from_seed(seed);
        let mut x = Matrix::zeros(n, d);
        for r in 0..n {
            for c in 0..d {
                // Anisotropic so the spectrum is spread out.
                x.set(r, c, rng.next_normal() * (1.0 + c as f64));
            }
        }
        x
    }

    fn covariance(x: &Matrix) -> Matrix {
        let (n, d) = (x.rows(), x.cols());
        let mut mean = vec![0.0; d];
        for r in 0..n {
            for (m, v) in mean.iter_mut().zip(x.row(r)) {
                *m += v / n as f64;
            }
        }
        let mut cov = Matrix::zeros(d, d);
        for r in 0..n {
            let row: Vec<f64> = x.row(r).iter().zip(&mean).map(|(v, m)| v - m).collect();
            for i in 0..d {
                for j in 0..d {
                    cov.set(i, j, cov.get(i, j) + row[i] * row[j] / (n - 1) as f64);
                }
            }
        }
        cov
    }

    // Rank-1 data along (0.6, 0.8): the first component is that
    // direction up to sign... but rank-1 data is degenerate in the
    // second component, so ask for k = 1.
    #[test]
    fn rank_one_direction() {
        let rows: Vec<Vec<f64>> = [-2.0, -1.0, 0.0, 1.0, 2.0]
            .iter()
            .map(|t| vec![0.6 * t, 0.8 * t])
            .collect();
        let x = Matrix::from_rows(&rows).unwrap();
        let (comps, _) = top_k_components(&x, 1).unwrap();
        let c = comps.row(0);
        let sign = if c[0] < 0.0 { -1.0 } else { 1.0 };
        assert!((sign * c[0] - 0.6).abs() < 1e-8);
        assert!((sign * c[1] - 0.8).abs() < 1e-8);
    }

    // Oracle: variances must equal the top-k eigenvalues of the explicit
    // sample covariance, which sym_eig computes independently.
    #[test]
    fn variances_match_covariance_spectrum() {
        let x = random_data(40, 5, 7);
        let (_, variances) = top_k_components(&x, 3).unwrap();
        let eig = sym_eig(&covariance(&x)).unwrap();
        for (got, want) in variances.iter().zip(&eig.eigenvalues) {
            assert!(
                (got - want).abs() <= 1e-8 * (1.0 + want.abs()),
                "{got} vs {want}"
            );
        }
    }

    #[test]
    fn full_rank_explains_total_variance() {
        let x = random_data(30, 4, 11);
        let (_, variances) = top_k_components(&x, 4).unwrap();
        let cov = covariance(&x);
        let total: f64 = (0..4).map(|i| cov.get(i, i)).sum();
        let explained: f64 = variances.iter().sum();
        assert!((total - explained).abs() <= 1e-10 * total);
    }

    #[test]
    fn components_are_orthonormal() {
        let x = random_data(50, 6, 13);
        let (comps, _) = top_k_components(&x, 4).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let d = dot(comps.row(i), comps.row(j));
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((d - want).abs() < 1e-8, "gram[{i}][{j}] = {d}");
            }
        }
    }

    #[test]
    fn translation_invariance_up_to_sign() {
        let x = random_data(25, 3, 19);
        let mut shifted = x.clone();
        for r in 0..shifted.rows() {
            for (c, off) in shifted.row_mut(r).iter_mut().zip([5.0, -3.0, 10.0]) {
                *c += off;
            }
        }
        let (a, _) = top_k_components(&x, 2).unwrap();
        let (b, _) = top_k_components(&shifted, 2).unwrap();
        for j in 0..2 {
            let cosine = dot(a.row(j), b.row(j)).abs();
            assert!((cosine - 1.0).abs() < 1e-7, "component {j} cosine {cosine}");
        }
    }

    #[test]
    fn degenerate_and_out_of_range_errors() {
        let zeros = Matrix::zeros(5, 3);
        assert!(top_k_components(&zeros, 1).is_err());
        let x = random_data(4, 3, 2);
        assert!(top_k_components(&x, 4).is_err());
        assert!(top_k_components(&x, 0).is_err());
    }
}
