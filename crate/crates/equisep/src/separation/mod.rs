//! Separation fuzziness D = Tr(SSW · SSB⁺) and the log-linear law of
//! its decay across layers.
//!
//! SSB is the between-class scatter of class means around the global
//! mean, SSW the pooled within-class scatter. SSB has rank at most
//! K−1, so its pseudoinverse is taken over the nonzero part of its
//! spectrum. The production path works on the K x K Gram matrix of the
//! weighted centered class means rather than forming any d x d matrix;
//! `fuzziness_direct` keeps the explicit d x d route as a test oracle.

use crate::error::{Error, Result};
use crate::linalg::{dot, fit_line, pearson, sym_eig, Matrix};
use crate::network::ForwardTrace;

/// Relative eigenvalue threshold for the SSB pseudoinverse.
pub const DEFAULT_REL_TOL: f64 = 1e-10;

/// Class-mean geometry retained from a fuzziness evaluation.
#[derive(Debug, Clone)]
pub struct ScatterStats {
    pub global_mean: Vec<f64>,
    /// K x d matrix of class means.
    pub class_means: Matrix,
    pub class_counts: Vec<usize>,
    /// Retained nonzero SSB eigenvalues, descending (at most K-1).
    pub ssb_eigenvalues: Vec<f64>,
    /// d x j matrix whose columns are the matching SSB eigenvectors.
    pub ssb_eigenvectors: Matrix,
}

/// Which split a profile was measured on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

impl std::fmt::Display for Split {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Split::Train => write!(f, "train"),
            Split::Test => write!(f, "test"),
        }
    }
}

/// Ordered separation fuzziness values D_0..D_{L-1} with labels per
/// capture point.
#[derive(Debug, Clone)]
pub struct SeparationProfile {
    pub values: Vec<f64>,
    /// Layer index or block id per value.
    pub point_labels: Vec<String>,
    pub split: Split,
    pub epoch: Option<usize>,
}

impl SeparationProfile {
    pub fn from_values(values: Vec<f64>, split: Split, epoch: Option<usize>) -> Self {
        let point_labels = (0..values.len()).map(|l| format!("layer {l}")).collect();
        Self {
            values,
            point_labels,
            split,
            epoch,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Fitted law of equi-separation: log D_l against l.
#[derive(Debug, Clone)]
pub struct LawFit {
    pub slope: f64,
    pub intercept: f64,
    pub pearson_r: f64,
    /// Per-layer decay ratio, exp(slope).
    pub rho: f64,
    /// ln 2 / ln(1/rho); None when rho >= 1 (no decay).
    pub half_life: Option<f64>,
    pub residuals: Vec<f64>,
}

/// Separation fuzziness of labelled features, via the Gram trick.
///
/// Writes M for the d x K matrix with columns sqrt(n_k/n)(x̄_k − x̄),
/// so SSB = M Mᵀ. The nonzero eigenpairs of SSB come from the K x K
/// Gram MᵀM, and
///   D = (1/n) Σ_j λ_j⁻¹ Σ_i ⟨u_j, x_i − x̄_{k(i)}⟩².
pub fn fuzziness(
    x: &Matrix,
    labels: &[usize],
    rel_tol: f64,
) -> Result<(f64, ScatterStats)> {
    let stats = scatter_stats(x, labels, rel_tol)?;
    let d = within_class_trace(x, labels, &stats, None)?;
    Ok((d, stats))
}

/// Class-wise separation fuzziness D_k = Tr(SSW^k · SSB⁺), normalized
/// by 1/n so that Σ_k D_k equals the total fuzziness.
pub fn classwise_fuzziness(
    x: &Matrix,
    labels: &[usize],
    class: usize,
    rel_tol: f64,
) -> Result<f64> {
    let stats = scatter_stats(x, labels, rel_tol)?;
    if class >= stats.class_counts.len() || stats.class_counts[class] == 0 {
        return Err(Error::DegenerateData(format!("class {class} is empty")));
    }
    within_class_trace(x, labels, &stats, Some(class))
}

/// Test oracle: form SSW and SSB explicitly, build SSB⁺ by full
/// symmetric eigendecomposition with the same threshold rule, and take
/// the trace. Only usable when d x d matrices fit comfortably.
pub fn fuzziness_direct(x: &Matrix, labels: &[usize], rel_tol: f64) -> Result<f64> {
    let stats = scatter_stats(x, labels, rel_tol)?;
    let (n, d) = (x.rows(), x.cols());
    let k = stats.class_counts.len();

    let mut ssb = Matrix::zeros(d, d);
    for c in 0..k {
        if stats.class_counts[c] == 0 {
            continue;
        }
        let weight = stats.class_counts[c] as f64 / n as f64;
        let diff: Vec<f64> = stats
            .class_means
            .row(c)
            .iter()
            .zip(&stats.global_mean)
            .map(|(m, g)| m - g)
            .collect();
        accumulate_outer(&mut ssb, &diff, weight);
    }
    let mut ssw = Matrix::zeros(d, d);
    for (i, &label) in labels.iter().enumerate() {
        let diff: Vec<f64> = x
            .row(i)
            .iter()
            .zip(stats.class_means.row(label))
            .map(|(v, m)| v - m)
            .collect();
        accumulate_outer(&mut ssw, &diff, 1.0 / n as f64);
    }

    let eig = sym_eig(&ssb)?;
    let lambda_max = eig.eigenvalues.first().copied().unwrap_or(0.0);
    if lambda_max <= 0.0 {
        return Err(Error::ZeroSignal);
    }
    let mut trace = 0.0;
    let mut retained = 0;
    for (j, &lambda) in eig.eigenvalues.iter().enumerate() {
        if lambda <= rel_tol * lambda_max || retained >= k - 1 {
            break;
        }
        let u = eig.eigenvectors.column(j);
        let ssw_u = ssw.matvec(&u)?;
        trace += dot(&u, &ssw_u) / lambda;
        retained += 1;
    }
    Ok(trace)
}

/// D_l for every capture point of a probe trace.
pub fn separation_profile(
    trace: &ForwardTrace,
    labels: &[usize],
    rel_tol: f64,
    split: Split,
    epoch: Option<usize>,
) -> Result<SeparationProfile> {
    let mut values = Vec::with_capacity(trace.layer_outputs.len());
    for (layer, features) in trace.layer_outputs.iter().enumerate() {
        if features.rows() != labels.len() {
            return Err(Error::Dimension(format!(
                "layer {layer}: {} feature rows vs {} labels",
                features.rows(),
                labels.len()
            )));
        }
        let (d, _) = fuzziness(features, labels, rel_tol).map_err(|e| {
            Error::DegenerateData(format!("layer {layer}: {e}"))
        })?;
        values.push(d);
    }
    Ok(SeparationProfile::from_values(values, split, epoch))
}

/// Least-squares fit of log D_l against the layer index.
pub fn fit_law(profile: &SeparationProfile) -> Result<LawFit> {
    if profile.len() < 3 {
        return Err(Error::InsufficientPoints {
            found: profile.len(),
            required: 3,
        });
    }
    for (layer, &v) in profile.values.iter().enumerate() {
        if v <= 0.0 || !v.is_finite() {
            return Err(Error::LogDomain { layer });
        }
    }
    let xs: Vec<f64> = (0..profile.len()).map(|l| l as f64).collect();
    let ys: Vec<f64> = profile.values.iter().map(|v| v.ln()).collect();
    let (slope, intercept) = fit_line(&xs, &ys)?;
    // A perfectly constant profile has zero slope and no defined r;
    // treat it as uncorrelated.
    let pearson_r = match pearson(&xs, &ys) {
        Ok(r) => r,
        Err(Error::ZeroVariance(_)) => 0.0,
        Err(e) => return Err(e),
    };
    let rho = slope.exp();
    let half_life = if rho < 1.0 {
        Some((2.0_f64).ln() / (1.0 / rho).ln())
    } else {
        None
    };
    let residuals = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| y - (slope * x + intercept))
        .collect();
    Ok(LawFit {
        slope,
        intercept,
        pearson_r,
        rho,
        half_life,
        residuals,
    })
}

/// Whole-network reduction ratio R = D_{L-1}/D_0 and the first-order
/// coefficient R · Σ_l D_{l-1}/D_l of the perturbation expansion.
pub fn perturbation_coefficient(profile: &SeparationProfile) -> Result<(f64, f64)> {
    if profile.len() < 2 {
        return Err(Error::InsufficientPoints {
            found: profile.len(),
            required: 2,
        });
    }
    if profile.values.iter().any(|&v| v <= 0.0) {
        return Err(Error::DivisionByZero("perturbation_coefficient"));
    }
    let first = profile.values[0];
    let last = *profile.values.last().unwrap();
    let reduction_ratio = last / first;
    let inverse_ratio_sum: f64 = profile
        .values
        .windows(2)
        .map(|w| w[0] / w[1])
        .sum();
    Ok((reduction_ratio, reduction_ratio * inverse_ratio_sum))
}

/// Successive ratios D_{l+1}/D_l.
pub fn relative_improvements(profile: &SeparationProfile) -> Result<Vec<f64>> {
    if profile.values.iter().any(|&v| v == 0.0) {
        return Err(Error::DivisionByZero("relative_improvements"));
    }
    Ok(profile.values.windows(2).map(|w| w[1] / w[0]).collect())
}

/// Profile evaluated only at block boundary capture points, relabeled
/// by block index; the block-level view used for residual networks.
pub fn group_blocks(
    per_layer_features: &[Matrix],
    labels: &[usize],
    boundaries: &[usize],
    rel_tol: f64,
    split: Split,
    epoch: Option<usize>,
) -> Result<SeparationProfile> {
    if boundaries.is_empty() || boundaries[0] != 0 {
        return Err(Error::Index(
            "block boundaries must start at 0".into(),
        ));
    }
    if boundaries.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Index(
            "block boundaries must be strictly increasing".into(),
        ));
    }
    if *boundaries.last().unwrap() >= per_layer_features.len() {
        return Err(Error::Index(format!(
            "boundary {} out of range for {} capture points",
            boundaries.last().unwrap(),
            per_layer_features.len()
        )));
    }
    let mut values = Vec::with_capacity(boundaries.len());
    let mut point_labels = Vec::with_capacity(boundaries.len());
    for (block, &b) in boundaries.iter().enumerate() {
        let (d, _) = fuzziness(&per_layer_features[b], labels, rel_tol)?;
        values.push(d);
        point_labels.push(format!("block {block} (layer {b})"));
    }
    Ok(SeparationProfile {
        values,
        point_labels,
        split,
        epoch,
    })
}

fn scatter_stats(x: &Matrix, labels: &[usize], rel_tol: f64) -> Result<ScatterStats> {
    let (n, d) = (x.rows(), x.cols());
    if n != labels.len() {
        return Err(Error::Dimension(format!(
            "{n} feature rows vs {} labels",
            labels.len()
        )));
    }
    if n < 2 {
        return Err(Error::DegenerateData(format!("need n >= 2, got {n}")));
    }
    let num_classes = labels.iter().max().map_or(0, |&m| m + 1);
    let mut class_counts = vec![0usize; num_classes];
    for &l in labels {
        class_counts[l] += 1;
    }
    if class_counts.iter().filter(|&&c| c > 0).count() < 2 {
        return Err(Error::DegenerateClasses);
    }

    let mut class_means = Matrix::zeros(num_classes, d);
    for (i, &l) in labels.iter().enumerate() {
        for (m, v) in class_means.row_mut(l).iter_mut().zip(x.row(i)) {
            *m += v;
        }
    }
    for (c, &count) in class_counts.iter().enumerate() {
        if count > 0 {
            for m in class_means.row_mut(c) {
                *m /= count as f64;
            }
        }
    }
    let mut global_mean = vec![0.0; d];
    for (c, &count) in class_counts.iter().enumerate() {
        for (g, m) in global_mean.iter_mut().zip(class_means.row(c)) {
            *g += count as f64 * m;
        }
    }
    for g in &mut global_mean {
        *g /= n as f64;
    }

    // M: d x K with columns sqrt(n_k/n)(x̄_k − x̄); SSB = M Mᵀ.
    let mut weighted_means = Matrix::zeros(d, num_classes);
    for (c, &count) in class_counts.iter().enumerate() {
        if count == 0 {
            continue;
        }
        let w = (count as f64 / n as f64).sqrt();
        for r in 0..d {
            weighted_means.set(r, c, w * (class_means.get(c, r) - global_mean[r]));
        }
    }
    let gram = weighted_means.transpose().matmul(&weighted_means)?;
    let eig = sym_eig(&gram)?;
    let lambda_max = eig.eigenvalues.first().copied().unwrap_or(0.0);
    if lambda_max <= 0.0 {
        return Err(Error::ZeroSignal);
    }
    let max_rank = class_counts.iter().filter(|&&c| c > 0).count() - 1;
    let mut ssb_eigenvalues = Vec::new();
    let mut columns: Vec<Vec<f64>> = Vec::new();
    for (j, &lambda) in eig.eigenvalues.iter().enumerate() {
        if lambda <= rel_tol * lambda_max || ssb_eigenvalues.len() >= max_rank {
            break;
        }
        // u_j = M v_j / sqrt(λ_j), a unit eigenvector of SSB.
        let v = eig.eigenvectors.column(j);
        let mut u = weighted_means.matvec(&v)?;
        let inv = 1.0 / lambda.sqrt();
        for val in &mut u {
            *val *= inv;
        }
        ssb_eigenvalues.push(lambda);
        columns.push(u);
    }
    if ssb_eigenvalues.is_empty() {
        return Err(Error::ZeroSignal);
    }
    let mut ssb_eigenvectors = Matrix::zeros(d, ssb_eigenvalues.len());
    for (j, u) in columns.iter().enumerate() {
        for (r, &val) in u.iter().enumerate() {
            ssb_eigenvectors.set(r, j, val);
        }
    }
    Ok(ScatterStats {
        global_mean,
        class_means,
        class_counts,
        ssb_eigenvalues,
        ssb_eigenvectors,
    })
}

/// (1/n) Σ_i Σ_j λ_j⁻¹ ⟨u_j, x_i − x̄_{k(i)}⟩², optionally restricted
/// to the points of one class.
fn within_class_trace(
    x: &Matrix,
    labels: &[usize],
    stats: &ScatterStats,
    only_class: Option<usize>,
) -> Result<f64> {
    let n = x.rows();
    let num_components = stats.ssb_eigenvalues.len();
    let mut diff = vec![0.0; x.cols()];
    let mut total = 0.0;
    for (i, &label) in labels.iter().enumerate() {
        if only_class.is_some_and(|c| c != label) {
            continue;
        }
        for ((dst, v), m) in diff
            .iter_mut()
            .zip(x.row(i))
            .zip(stats.class_means.row(label))
        {
            *dst = v - m;
        }
        let projections = stats.ssb_eigenvectors.tmatvec(&diff)?;
        for j in 0..num_components {
            total += projections[j] * projections[j] / stats.ssb_eigenvalues[j];
        }
    }
    Ok(total / n as f64)
}

fn accumulate_outer(m: &mut Matrix, v: &[f64], weight: f64) {
    for (r, &a) in v.iter().enumerate() {
        if a == 0.0 {
            continue;
        }
        let wa = weight * a;
        for (dst, &b) in m.row_mut(r).iter_mut().zip(v) {
            *dst += wa * b;
        }
    }
}
