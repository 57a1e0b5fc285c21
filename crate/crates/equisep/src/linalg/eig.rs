//! Symmetric eigendecomposition via cyclic Jacobi rotations.
//!
//! The matrices this crate decomposes are small (K x K scatter Grams,
//! occasionally a few hundred square in tests), where Jacobi's accuracy
//! and simplicity beat asymptotically faster methods.

use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Convergence threshold on the off-diagonal Frobenius mass, relative
/// to the total Frobenius norm.
const OFF_DIAG_TOL: f64 = 1e-12;
const MAX_SWEEPS: usize = 100;

/// Eigenvalues sorted descending with orthonormal eigenvector columns.
#[derive(Debug, Clone)]
pub struct SymEig {
    pub eigenvalues: Vec<f64>,
    /// n x n; column j is the eigenvector of `eigenvalues[j]`.
    pub eigenvectors: Matrix,
}

/// Decompose a symmetric matrix. The input must be square and symmetric
/// within 1e-12 relative tolerance.
pub fn sym_eig(a: &Matrix) -> Result<SymEig> {
    if a.rows() != a.cols() {
        return Err(Error::Dimension(format!(
            "sym_eig requires a square matrix, got {}x{}",
            a.rows(),
            a.cols()
        )));
    }
    if a.asymmetry() > 1e-12 {
        return Err(Error::Dimension(format!(
            "sym_eig requires symmetry, relative asymmetry {:.3e}",
            a.asymmetry()
        )));
    }
    let n = a.rows();
    if n == 0 {
        return Ok(SymEig {
            eigenvalues: vec![],
            eigenvectors: Matrix::zeros(0, 0),
        });
    }

    let mut m = a.clone();
    // Symmetrize exactly so rotations keep the matrix symmetric.
    for r in 0..n {
        for c in (r + 1)..n {
            let avg = 0.5 * (m.get(r, c) + m.get(c, r));
            m.set(r, c, avg);
            m.set(c, r, avg);
        }
    }
    let mut v = Matrix::identity(n);
    let norm = m.frobenius_norm().max(f64::MIN_POSITIVE);

    for _ in 0..MAX_SWEEPS {
        let off: f64 = off_diag_norm(&m);
        if off <= OFF_DIAG_TOL * norm {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m.get(p, q);
                if apq.abs() <= OFF_DIAG_TOL * norm / (n * n) as f64 {
                    continue;
                }
                let app = m.get(p, p);
                let aqq = m.get(q, q);
                let theta = (aqq - app) / (2.0 * apq);
                let t = if theta >= 0.0 {
                    1.0 / (theta + (1.0 + theta * theta).sqrt())
                } else {
                    1.0 / (theta - (1.0 + theta * theta).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                rotate(&mut m, &mut v, p, q, c, s);
            }
        }
    }

    // Sort descending, carrying eigenvector columns along.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m.get(j, j).partial_cmp(&m.get(i, i)).unwrap());
    let eigenvalues: Vec<f64> = order.iter().map(|&i| m.get(i, i)).collect();
    let mut eigenvectors = Matrix::zeros(n, n);
    for (new_col, &old_col) in order.iter().enumerate() {
        for r in 0..n {
            eigenvectors.set(r, new_col, v.get(r, old_col));
        }
    }
    Ok(SymEig {
        eigenvalues,
        eigenvectors,
    })
}

fn off_diag_norm(m: &Matrix) -> f64 {
    let n = m.rows();
    let mut sum = 0.0;
    for r in 0..n {
        for c in (r + 1)..n {
            sum += 2.0 * m.get(r, c) * m.get(r, c);
        }
    }
    sum.sqrt()
}

/// Apply the Jacobi rotation J(p,q,θ) as m <- JᵀmJ, v <- vJ.
fn rotate(m: &mut Matrix, v: &mut Matrix, p: usize, q: usize, c: f64, s: f64) {
    let n = m.rows();
    for k in 0..n {
        let mkp = m.get(k, p);
        let mkq = m.get(k, q);
        m.set(k, p, c * mkp - s * mkq);
        m.set(k, q, s * mkp + c * mkq);
    }
    for k in 0..n {
        let mpk = m.get(p, k);
        let mqk = m.get(q, k);
        m.set(p, k, c * mpk - s * mqk);
        m.set(q, k, s * mpk + c * mqk);
    }
    for k in 0..n {
        let vkp = v.get(k, p);
        let vkq = v.get(k, q);
        v.set(k, p, c * vkp - s * vkq);
        v.set(k, q, s * vkp + c * vkq);
    }
}

impl SymEig {
    /// Reconstruct U Λ Uᵀ; used by tests and the pseudoinverse path.
    pub fn reconstruct(&self) -> Matrix {
        let n = self.eigenvalues.len();
        let mut scaled = self.eigenvectors.clone();
        for c in 0..n {
            for r in 0..n {
                scaled.set(r, c, scaled.get(r, c) * self.eigenvalues[c]);
            }
        }
        scaled.matmul(&self.eigenvectors.transpose()).unwrap()
    }
}
