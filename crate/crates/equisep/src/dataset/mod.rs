//! Dataset ingestion: IDX and CIFAR-10 binary parsing, area resizing,
//! standardization, and seeded balanced/imbalanced subsampling.

mod cifar;
mod fetch;
mod idx;
mod resize;

pub use cifar::parse_cifar10;
pub use fetch::{fetch_dataset, DatasetFile, DatasetManifest, DATASET_MANIFESTS};
pub use idx::{load_idx, parse_idx, serialize_idx, IdxTensor};
pub use resize::resize_area;

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::rng::Rng;

/// Flattened feature vectors with integer class labels.
#[derive(Debug, Clone)]
pub struct ImageDataset {
    pub features: Matrix,
    pub labels: Vec<usize>,
    pub num_classes: usize,
}

impl ImageDataset {
    pub fn new(features: Matrix, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        if features.rows() != labels.len() {
            return Err(Error::Dimension(format!(
                "{} feature rows vs {} labels",
                features.rows(),
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::Label {
                label: bad,
                num_classes,
            });
        }
        if !features.all_finite() {
            return Err(Error::DegenerateData("non-finite feature value".into()));
        }
        Ok(Self {
            features,
            labels,
            num_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.num_classes];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }
}

/// Per-class sample counts plus the seed that drives the draw.
#[derive(Debug, Clone)]
pub struct SamplingSpec {
    pub per_class_counts: Vec<usize>,
    pub seed: u64,
}

impl SamplingSpec {
    /// Balanced draw: `per_class` examples from each of `num_classes`.
    pub fn balanced(num_classes: usize, per_class: usize, seed: u64) -> Self {
        Self {
            per_class_counts: vec![per_class; num_classes],
            seed,
        }
    }
}

/// Draw the requested number of examples per class without replacement.
///
/// The draw is class-blocked, then the block order is shuffled with the
/// same seeded stream, so identical (dataset, spec) pairs produce
/// byte-identical outputs.
pub fn subsample(dataset: &ImageDataset, spec: &SamplingSpec) -> Result<ImageDataset> {
    if spec.per_class_counts.len() != dataset.num_classes {
        return Err(Error::Dimension(format!(
            "sampling spec covers {} classes, dataset has {}",
            spec.per_class_counts.len(),
            dataset.num_classes
        )));
    }
    if spec.per_class_counts.iter().any(|&c| c == 0) {
        return Err(Error::Config("per-class counts must be >= 1".into()));
    }
    let mut per_class_indices: Vec<Vec<usize>> = vec![Vec::new(); dataset.num_classes];
    for (i, &l) in dataset.labels.iter().enumerate() {
        per_class_indices[l].push(i);
    }
    let mut rng = Rng::from_seed(spec.seed);
    let mut chosen = Vec::new();
    for (class, (&want, pool)) in spec
        .per_class_counts
        .iter()
        .zip(&per_class_indices)
        .enumerate()
    {
        if pool.len() < want {
            return Err(Error::Sampling {
                class,
                available: pool.len(),
                requested: want,
            });
        }
        for pick in rng.sample_without_replacement(pool.len(), want) {
            chosen.push(pool[pick]);
        }
    }
    rng.shuffle(&mut chosen);

    let d = dataset.feature_dim();
    let mut features = Matrix::zeros(chosen.len(), d);
    let mut labels = Vec::with_capacity(chosen.len());
    for (out_row, &src) in chosen.iter().enumerate() {
        features.row_mut(out_row).copy_from_slice(dataset.features.row(src));
        labels.push(dataset.labels[src]);
    }
    ImageDataset::new(features, labels, dataset.num_classes)
}

/// Per-feature mean/std computed on a training split, reusable on a
/// held-out split.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

/// Threshold below which a feature is treated as constant and mapped to 0.
const STD_FLOOR: f64 = 1e-12;

impl Standardizer {
    pub fn fit(dataset: &ImageDataset) -> Result<Self> {
        let (n, d) = (dataset.len(), dataset.feature_dim());
        if n < 2 {
            return Err(Error::DegenerateData(format!(
                "standardize needs n >= 2, got {n}"
            )));
        }
        let mut mean = vec![0.0; d];
        for r in 0..n {
            for (m, v) in mean.iter_mut().zip(dataset.features.row(r)) {
                *m += v;
            }
        }
        for m in &mut mean {
            *m /= n as f64;
        }
        let mut var = vec![0.0; d];
        for r in 0..n {
            for ((s, v), m) in var.iter_mut().zip(dataset.features.row(r)).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let std = var.iter().map(|v| (v / n as f64).sqrt()).collect();
        Ok(Self { mean, std })
    }

    pub fn apply(&self, dataset: &ImageDataset) -> Result<ImageDataset> {
        if dataset.feature_dim() != self.mean.len() {
            return Err(Error::Dimension(format!(
                "standardizer is {}-dimensional, dataset is {}-dimensional",
                self.mean.len(),
                dataset.feature_dim()
            )));
        }
        let mut features = dataset.features.clone();
        for r in 0..features.rows() {
            for ((v, m), s) in features
                .row_mut(r)
                .iter_mut()
                .zip(&self.mean)
                .zip(&self.std)
            {
                *v = if *s > STD_FLOOR { (*v - m) / s } else { 0.0 };
            }
        }
        ImageDataset::new(features, dataset.labels.clone(), dataset.num_classes)
    }
}

/// Standardize in place: fit on the dataset, apply, return the record
/// so a held-out split can reuse the exact transform.
pub fn standardize(dataset: &ImageDataset) -> Result<(ImageDataset, Standardizer)> {
    let standardizer = Standardizer::fit(dataset)?;
    Ok((standardizer.apply(dataset)?, standardizer))
}

/// Convert an IDX image tensor into a flattened dataset: scale to [0,1]
/// by /255, optionally area-resize each image, pair with labels.
pub fn images_to_dataset(
    images: &IdxTensor,
    labels: &IdxTensor,
    resize_to: Option<(usize, usize)>,
    num_classes: usize,
) -> Result<ImageDataset> {
    let dims = images.dims();
    if dims.len() != 3 {
        return Err(Error::Format(format!(
            "expected a 3-dimensional image tensor, got {} dims",
            dims.len()
        )));
    }
    let (n, h, w) = (dims[0], dims[1], dims[2]);
    if labels.dims().len() != 1 || labels.dims()[0] != n {
        return Err(Error::Format(format!(
            "label tensor shape {:?} does not match {n} images",
            labels.dims()
        )));
    }
    let (out_h, out_w) = resize_to.unwrap_or((h, w));
    let mut features = Matrix::zeros(n, out_h * out_w);
    let mut image = vec![0.0; h * w];
    for i in 0..n {
        for (dst, &src) in image.iter_mut().zip(&images.data()[i * h * w..(i + 1) * h * w]) {
            *dst = src as f64 / 255.0;
        }
        let resized = resize_area(&image, h, w, out_h, out_w)?;
        features.row_mut(i).copy_from_slice(&resized);
    }
    let labels = labels.data().iter().map(|&b| b as usize).collect();
    ImageDataset::new(features, labels, num_classes)
}
