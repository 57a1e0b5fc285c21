//! Feedforward ReLU network with batch normalization: initialization,
//! training-mode forward/backward, and eval-mode layer probing.
//!
//! A depth-L network has L−1 hidden blocks (affine, then batch norm,
//! then ReLU) and a final affine classifier with no normalization or
//! activation. Capture points for separation analysis are the
//! standardized input (index 0) and each post-ReLU block output, so a
//! probe yields exactly L feature matrices.

mod checkpoint;

pub use checkpoint::{load_checkpoint, save_checkpoint};

use crate::dataset::ImageDataset;
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::rng::Rng;

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

/// Architecture description.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetworkSpec {
    pub input_dim: usize,
    /// One width per hidden block; length L−1 for a depth-L network.
    pub hidden_widths: Vec<usize>,
    pub num_classes: usize,
    pub batchnorm: bool,
}

impl NetworkSpec {
    pub fn new(input_dim: usize, hidden_widths: Vec<usize>, num_classes: usize) -> Self {
        Self {
            input_dim,
            hidden_widths,
            num_classes,
            batchnorm: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.num_classes == 0 {
            return Err(Error::Config("zero input_dim or num_classes".into()));
        }
        if self.hidden_widths.is_empty() {
            return Err(Error::Config(
                "need at least one hidden block (depth >= 2)".into(),
            ));
        }
        if self.hidden_widths.iter().any(|&w| w == 0) {
            return Err(Error::Config("zero hidden width".into()));
        }
        Ok(())
    }

    /// Depth L = number of hidden blocks + 1 (the classifier).
    pub fn depth(&self) -> usize {
        self.hidden_widths.len() + 1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    /// out x in.
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub linear: Linear,
    pub bn: Option<BatchNorm>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub spec: NetworkSpec,
    pub blocks: Vec<Block>,
    pub classifier: Linear,
}

/// Feature matrices at every capture point: index 0 is the input batch,
/// index l the post-ReLU output of hidden block l.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    pub layer_outputs: Vec<Matrix>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Per-block intermediates kept from a train-mode forward pass.
#[derive(Debug, Clone)]
pub struct BlockCache {
    /// Block input (B x in).
    pub input: Matrix,
    /// Affine output before batch norm (B x out).
    pub pre_norm: Matrix,
    /// Normalized activations x̂ (before γ/β); empty when BN is off.
    pub normalized: Option<Matrix>,
    /// 1/sqrt(var + eps) per feature.
    pub inv_std: Vec<f64>,
}

/// Result of a forward pass.
#[derive(Debug, Clone)]
pub struct ForwardPass {
    pub logits: Matrix,
    pub trace: ForwardTrace,
    /// Present only for train-mode passes; consumed by the backward pass.
    pub caches: Option<Vec<BlockCache>>,
    /// Classifier input (last hidden activation), kept for backward.
    pub classifier_input: Matrix,
}

/// Gradients aligned with the parameters of a [`Network`].
#[derive(Debug, Clone)]
pub struct Gradients {
    pub blocks: Vec<BlockGradients>,
    pub classifier_weight: Matrix,
    pub classifier_bias: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct BlockGradients {
    pub weight: Matrix,
    pub bias: Vec<f64>,
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
}

impl Gradients {
    /// Same ordering as [`Network::flatten_params`].
    pub fn flatten(&self) -> Vec<f64> {
        let mut flat = Vec::new();
        for block in &self.blocks {
            flat.extend_from_slice(block.weight.data());
            flat.extend_from_slice(&block.bias);
            flat.extend_from_slice(&block.gamma);
            flat.extend_from_slice(&block.beta);
        }
        flat.extend_from_slice(self.classifier_weight.data());
        flat.extend_from_slice(&self.classifier_bias);
        flat
    }
}

/// He initialization: weights ~ Normal(0, 2/fan_in) drawn by Box–Muller
/// from the seeded stream; biases 0; γ = 1, β = 0; running mean 0,
/// running variance 1. The same seed reproduces the network bitwise.
pub fn init_network(spec: &NetworkSpec, seed: u64) -> Result<Network> {
    spec.validate()?;
    let mut rng = Rng::from_seed(seed);
    let mut blocks = Vec::with_capacity(spec.hidden_widths.len());
    let mut fan_in = spec.input_dim;
    for &width in &spec.hidden_widths {
        let linear = init_linear(&mut rng, width, fan_in);
        let bn = spec.batchnorm.then(|| BatchNorm {
            gamma: vec![1.0; width],
            beta: vec![0.0; width],
            running_mean: vec![0.0; width],
            running_var: vec![1.0; width],
        });
        blocks.push(Block { linear, bn });
        fan_in = width;
    }
    let classifier = init_linear(&mut rng, spec.num_classes, fan_in);
    Ok(Network {
        spec: spec.clone(),
        blocks,
        classifier,
    })
}

fn init_linear(rng: &mut Rng, out_dim: usize, in_dim: usize) -> Linear {
    let scale = (2.0 / in_dim as f64).sqrt();
    let mut weight = Matrix::zeros(out_dim, in_dim);
    for v in weight.data_mut() {
        *v = scale * rng.next_normal();
    }
    Linear {
        weight,
        bias: vec![0.0; out_dim],
    }
}

impl Network {
    /// Trainable parameter count: weights, biases, γ and β. Running
    /// statistics are state, not parameters.
    pub fn param_count(&self) -> usize {
        let mut count = 0;
        for block in &self.blocks {
            count += block.linear.weight.data().len() + block.linear.bias.len();
            if let Some(bn) = &block.bn {
                count += bn.gamma.len() + bn.beta.len();
            }
        }
        count + self.classifier.weight.data().len() + self.classifier.bias.len()
    }

    /// Trainable parameters in declaration order: per block weight,
    /// bias, γ, β; then the classifier weight and bias. Running
    /// statistics are excluded.
    pub fn flatten_params(&self) -> Vec<f64> {
        let mut flat = Vec::with_capacity(self.param_count());
        for block in &self.blocks {
            flat.extend_from_slice(block.linear.weight.data());
            flat.extend_from_slice(&block.linear.bias);
            if let Some(bn) = &block.bn {
                flat.extend_from_slice(&bn.gamma);
                flat.extend_from_slice(&bn.beta);
            }
        }
        flat.extend_from_slice(self.classifier.weight.data());
        flat.extend_from_slice(&self.classifier.bias);
        flat
    }

    /// Inverse of [`flatten_params`](Self::flatten_params).
    pub fn unflatten_params(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(Error::Length {
                expected: self.param_count(),
                found: flat.len(),
            });
        }
        let mut pos = 0;
        let mut take = |target: &mut [f64]| {
            target.copy_from_slice(&flat[pos..pos + target.len()]);
            pos += target.len();
        };
        for block in &mut self.blocks {
            take(block.linear.weight.data_mut());
            take(&mut block.linear.bias);
            if let Some(bn) = &mut block.bn {
                take(&mut bn.gamma);
                take(&mut bn.beta);
            }
        }
        take(self.classifier.weight.data_mut());
        take(&mut self.classifier.bias);
        Ok(())
    }

    /// Index ranges into the flattened parameter vector, one per hidden
    /// block followed by one for the classifier.
    pub fn param_ranges(&self) -> Vec<std::ops::Range<usize>> {
        let mut ranges = Vec::with_capacity(self.blocks.len() + 1);
        let mut pos = 0;
        for block in &self.blocks {
            let mut len = block.linear.weight.data().len() + block.linear.bias.len();
            if let Some(bn) = &block.bn {
                len += bn.gamma.len() + bn.beta.len();
            }
            ranges.push(pos..pos + len);
            pos += len;
        }
        let classifier_len =
            self.classifier.weight.data().len() + self.classifier.bias.len();
        ranges.push(pos..pos + classifier_len);
        ranges
    }

    pub fn zero_gradients(&self) -> Gradients {
        Gradients {
            blocks: self
                .blocks
                .iter()
                .map(|b| BlockGradients {
                    weight: Matrix::zeros(b.linear.weight.rows(), b.linear.weight.cols()),
                    bias: vec![0.0; b.linear.bias.len()],
                    gamma: vec![0.0; b.bn.as_ref().map_or(0, |bn| bn.gamma.len())],
                    beta: vec![0.0; b.bn.as_ref().map_or(0, |bn| bn.beta.len())],
                })
                .collect(),
            classifier_weight: Matrix::zeros(
                self.classifier.weight.rows(),
                self.classifier.weight.cols(),
            ),
            classifier_bias: vec![0.0; self.classifier.bias.len()],
        }
    }
}

/// Forward pass over a batch. Train mode uses batch statistics and
/// updates running ones; eval mode uses running statistics, making the
/// output batch-size independent.
pub fn forward(network: &mut Network, batch: &Matrix, mode: Mode) -> Result<ForwardPass> {
    if batch.cols() != network.spec.input_dim {
        return Err(Error::Dimension(format!(
            "batch is {}-dimensional, network expects {}",
            batch.cols(),
            network.spec.input_dim
        )));
    }
    if mode == Mode::Train && batch.rows() < 2 {
        return Err(Error::DegenerateData(
            "train-mode batch of size < 2: batch-norm variance undefined".into(),
        ));
    }
    let mut trace = vec![batch.clone()];
    let mut caches = (mode == Mode::Train).then(Vec::new);
    let mut current = batch.clone();

    for block in network.blocks.iter_mut() {
        let pre_norm = affine(&current, &block.linear)?;
        let (mut post_norm, cache_parts) = match (&mut block.bn, mode) {
            (Some(bn), Mode::Train) => {
                let (out, normalized, inv_std) = bn_train(bn, &pre_norm);
                (out, Some((Some(normalized), inv_std)))
            }
            (Some(bn), Mode::Eval) => (bn_eval(bn, &pre_norm), None),
            (None, _) => {
                let out = pre_norm.clone();
                let cache = (mode == Mode::Train)
                    .then(|| (None, vec![1.0; out.cols()]));
                (out, cache)
            }
        };
        if let (Some(caches), Some((normalized, inv_std))) = (&mut caches, cache_parts) {
            caches.push(BlockCache {
                input: current.clone(),
                pre_norm: pre_norm.clone(),
                normalized,
                inv_std,
            });
        }
        relu_inplace(&mut post_norm);
        trace.push(post_norm.clone());
        current = post_norm;
    }

    let logits = affine(&current, &network.classifier)?;
    if !logits.all_finite() {
        return Err(Error::NumericalFailure {
            epoch: 0,
            reason: "non-finite logits".into(),
        });
    }
    Ok(ForwardPass {
        logits,
        trace: ForwardTrace {
            layer_outputs: trace,
        },
        caches,
        classifier_input: current,
    })
}

/// Mean softmax cross-entropy over the batch plus full backpropagation
/// through the classifier, ReLU, batch-norm (batch-statistics path),
/// and affine layers. Requires the cache of a train-mode forward.
pub fn loss_and_grads(
    network: &Network,
    pass: &ForwardPass,
    labels: &[usize],
) -> Result<(f64, Gradients)> {
    let batch_size = pass.logits.rows();
    if labels.len() != batch_size {
        return Err(Error::Dimension(format!(
            "{batch_size} logits rows vs {} labels",
            labels.len()
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= network.spec.num_classes) {
        return Err(Error::Label {
            label: bad,
            num_classes: network.spec.num_classes,
        });
    }
    let caches = pass.caches.as_ref().ok_or_else(|| {
        Error::Config("loss_and_grads needs a train-mode forward cache".into())
    })?;

    let (loss, delta) = softmax_cross_entropy(&pass.logits, labels);
    // delta is dL/dlogits, already averaged over the batch.

    let mut grads = network.zero_gradients();
    grads.classifier_weight = delta.matmul_tn(&pass.classifier_input)?;
    grads.classifier_bias = column_sums(&delta);
    let mut d_activation = delta.matmul(&network.classifier.weight)?;

    for (block_idx, block) in network.blocks.iter().enumerate().rev() {
        let cache = &caches[block_idx];
        let activation = &pass.trace.layer_outputs[block_idx + 1];
        // ReLU gate.
        let mut d_post_norm = d_activation;
        for (g, &a) in d_post_norm.data_mut().iter_mut().zip(activation.data()) {
            if a <= 0.0 {
                *g = 0.0;
            }
        }

        let d_pre_norm = match (&block.bn, &cache.normalized) {
            (Some(bn), Some(normalized)) => {
                let block_grads = &mut grads.blocks[block_idx];
                bn_backward(
                    bn,
                    normalized,
                    &cache.inv_std,
                    &d_post_norm,
                    &mut block_grads.gamma,
                    &mut block_grads.beta,
                )
            }
            _ => d_post_norm,
        };

        grads.blocks[block_idx].weight = d_pre_norm.matmul_tn(&cache.input)?;
        grads.blocks[block_idx].bias = column_sums(&d_pre_norm);
        d_activation = d_pre_norm.matmul(&block.linear.weight)?;
    }
    Ok((loss, grads))
}

/// Eval-mode forward over a whole dataset in batches; per-layer feature
/// matrices are concatenated so that trace[0] equals the dataset
/// features bitwise.
pub fn probe_features(
    network: &mut Network,
    dataset: &ImageDataset,
    batch_size: usize,
) -> Result<ForwardTrace> {
    let n = dataset.len();
    let depth = network.spec.depth();
    let mut widths = vec![dataset.feature_dim()];
    widths.extend(&network.spec.hidden_widths);
    let mut outputs: Vec<Matrix> = widths
        .iter()
        .map(|&w| Matrix::zeros(n, w))
        .collect();

    let mut start = 0;
    while start < n {
        let end = (start + batch_size.max(1)).min(n);
        let mut batch = Matrix::zeros(end - start, dataset.feature_dim());
        for r in start..end {
            batch
                .row_mut(r - start)
                .copy_from_slice(dataset.features.row(r));
        }
        let pass = forward(network, &batch, Mode::Eval)?;
        for (layer, features) in pass.trace.layer_outputs.iter().enumerate() {
            for r in start..end {
                outputs[layer]
                    .row_mut(r)
                    .copy_from_slice(features.row(r - start));
            }
        }
        start = end;
    }
    debug_assert_eq!(outputs.len(), depth);
    Ok(ForwardTrace {
        layer_outputs: outputs,
    })
}

/// Classification accuracy of logits against labels.
pub fn accuracy(logits: &Matrix, labels: &[usize]) -> f64 {
    let mut correct = 0usize;
    for (r, &label) in labels.iter().enumerate() {
        let row = logits.row(r);
        let argmax = row
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .map(|(i, _)| i)
            .unwrap_or(0);
        if argmax == label {
            correct += 1;
        }
    }
    correct as f64 / labels.len().max(1) as f64
}

fn affine(input: &Matrix, linear: &Linear) -> Result<Matrix> {
    let mut out = input.matmul_nt(&linear.weight)?;
    for r in 0..out.rows() {
        for (v, b) in out.row_mut(r).iter_mut().zip(&linear.bias) {
            *v += b;
        }
    }
    Ok(out)
}

fn relu_inplace(m: &mut Matrix) {
    for v in m.data_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
}

/// Train-mode batch norm: normalize by batch statistics, update the
/// running ones (momentum 0.1, unbiased variance in the running
/// estimate). Returns (γx̂+β, x̂, 1/σ).
fn bn_train(bn: &mut BatchNorm, pre_norm: &Matrix) -> (Matrix, Matrix, Vec<f64>) {
    let (b, d) = (pre_norm.rows(), pre_norm.cols());
    let bf = b as f64;
    let mut mean = vec![0.0; d];
    for r in 0..b {
        for (m, v) in mean.iter_mut().zip(pre_norm.row(r)) {
            *m += v / bf;
        }
    }
    let mut var = vec![0.0; d];
    for r in 0..b {
        for ((s, v), m) in var.iter_mut().zip(pre_norm.row(r)).zip(&mean) {
            *s += (v - m) * (v - m) / bf;
        }
    }
    let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + BN_EPS).sqrt()).collect();

    for j in 0..d {
        bn.running_mean[j] = (1.0 - BN_MOMENTUM) * bn.running_mean[j] + BN_MOMENTUM * mean[j];
        let unbiased = var[j] * bf / (bf - 1.0);
        bn.running_var[j] = (1.0 - BN_MOMENTUM) * bn.running_var[j] + BN_MOMENTUM * unbiased;
    }

    let mut normalized = Matrix::zeros(b, d);
    let mut out = Matrix::zeros(b, d);
    for r in 0..b {
        let src = pre_norm.row(r);
        let norm_row = normalized.row_mut(r);
        for j in 0..d {
            norm_row[j] = (src[j] - mean[j]) * inv_std[j];
        }
        let out_row = out.row_mut(r);
        for j in 0..d {
            out_row[j] = bn.gamma[j] * normalized.get(r, j) + bn.beta[j];
        }
    }
    (out, normalized, inv_std)
}

fn bn_eval(bn: &BatchNorm, pre_norm: &Matrix) -> Matrix {
    let (b, d) = (pre_norm.rows(), pre_norm.cols());
    let inv_std: Vec<f64> = bn
        .running_var
        .iter()
        .map(|v| 1.0 / (v + BN_EPS).sqrt())
        .collect();
    let mut out = Matrix::zeros(b, d);
    for r in 0..b {
        let src = pre_norm.row(r);
        let dst = out.row_mut(r);
        for j in 0..d {
            dst[j] = bn.gamma[j] * (src[j] - bn.running_mean[j]) * inv_std[j] + bn.beta[j];
        }
    }
    out
}

/// Backprop through batch normalization along the batch-statistics path.
fn bn_backward(
    bn: &BatchNorm,
    normalized: &Matrix,
    inv_std: &[f64],
    d_out: &Matrix,
    d_gamma: &mut [f64],
    d_beta: &mut [f64],
) -> Matrix {
    let (b, d) = (d_out.rows(), d_out.cols());
    let bf = b as f64;
    let mut sum_dxhat = vec![0.0; d];
    let mut sum_dxhat_xhat = vec![0.0; d];
    for r in 0..b {
        let dy_row = d_out.row(r);
        let xhat_row = normalized.row(r);
        for j in 0..d {
            let dy = dy_row[j];
            let xhat = xhat_row[j];
            d_gamma[j] += dy * xhat;
            d_beta[j] += dy;
            let dxhat = dy * bn.gamma[j];
            sum_dxhat[j] += dxhat;
            sum_dxhat_xhat[j] += dxhat * xhat;
        }
    }
    let mut d_pre = Matrix::zeros(b, d);
    for r in 0..b {
        let dy_row = d_out.row(r);
        let xhat_row = normalized.row(r);
        let dst = d_pre.row_mut(r);
        for j in 0..d {
            let dxhat = dy_row[j] * bn.gamma[j];
            dst[j] = (inv_std[j] / bf)
                * (bf * dxhat - sum_dxhat[j] - xhat_row[j] * sum_dxhat_xhat[j]);
        }
    }
    d_pre
}

/// Mean cross-entropy and dL/dlogits (already divided by batch size).
fn softmax_cross_entropy(logits: &Matrix, labels: &[usize]) -> (f64, Matrix) {
    let (b, k) = (logits.rows(), logits.cols());
    let bf = b as f64;
    let mut delta = Matrix::zeros(b, k);
    let mut loss = 0.0;
    for r in 0..b {
        let row = logits.row(r);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut denom = 0.0;
        for &v in row {
            denom += (v - max).exp();
        }
        let log_denom = denom.ln() + max;
        loss += log_denom - row[labels[r]];
        for j in 0..k {
            let p = (row[j] - max).exp() / denom;
            let target = if j == labels[r] { 1.0 } else { 0.0 };
            delta.set(r, j, (p - target) / bf);
        }
    }
    (loss / bf, delta)
}

fn column_sums(m: &Matrix) -> Vec<f64> {
    let mut sums = vec![0.0; m.cols()];
    for r in 0..m.rows() {
        for (s, v) in sums.iter_mut().zip(m.row(r)) {
            *s += v;
        }
    }
    sums
}
