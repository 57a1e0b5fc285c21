//! Dense matrix arithmetic, symmetric eigendecomposition, PCA, and
//! scalar statistics used by every other module.

mod eig;
mod matrix;
mod pca;
mod stats;

pub use eig::{sym_eig, SymEig};
pub use matrix::{dot, Matrix};
pub use pca::{project, top_k_components};
pub use stats::{fit_line, pearson};
