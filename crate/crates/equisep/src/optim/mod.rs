//! SGD, SGD with momentum, and Adam with coupled L2 weight decay, the
//! step learning-rate schedule, the full training loop with snapshot
//! probes, block freezing, learning-rate sweeps, frozen two-stage
//! training, and pretrain-extend.
//!
//! Protocol defaults: 600 epochs, batch size 128, weight decay 5e-4,
//! momentum 0.9, learning rate annealed by 10 at one third and two
//! thirds of training. The short final batch of each epoch is kept.

use crate::dataset::ImageDataset;
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::network::{
    accuracy, forward, init_network, loss_and_grads, probe_features, Mode, Network, NetworkSpec,
};
use crate::rng::Rng;
use crate::separation::{
    fit_law, separation_profile, LawFit, SeparationProfile, Split, DEFAULT_REL_TOL,
};

/// Learning-rate grid the protocol sweeps for SGD, with or without
/// momentum.
pub const SGD_LR_GRID: [f64; 7] = [0.001, 0.003, 0.01, 0.03, 0.1, 0.3, 1.0];
/// Learning-rate grid the protocol sweeps for Adam.
pub const ADAM_LR_GRID: [f64; 5] = [3e-5, 1e-4, 3e-4, 1e-3, 3e-3];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimKind {
    Sgd,
    Momentum,
    Adam,
}

impl std::fmt::Display for OptimKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            OptimKind::Sgd => write!(f, "sgd"),
            OptimKind::Momentum => write!(f, "momentum"),
            OptimKind::Adam => write!(f, "adam"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct OptimConfig {
    pub kind: OptimKind,
    pub base_lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl OptimConfig {
    pub fn new(kind: OptimKind, base_lr: f64, seed: u64) -> Self {
        Self {
            kind,
            base_lr,
            momentum: 0.9,
            weight_decay: 5e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            epochs: 600,
            batch_size: 128,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.base_lr > 0.0) {
            return Err(Error::Config(format!("base_lr {} must be > 0", self.base_lr)));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config(format!(
                "momentum {} must be in [0, 1)",
                self.momentum
            )));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        if self.weight_decay < 0.0 {
            return Err(Error::Config("weight_decay must be >= 0".into()));
        }
        Ok(())
    }
}

/// Per-part freeze flags: one per hidden block, then one for the
/// classifier. Frozen blocks receive no parameter updates and their
/// batch-norm running statistics do not move.
#[derive(Debug, Clone)]
pub struct FreezeMask {
    pub frozen: Vec<bool>,
}

impl FreezeMask {
    pub fn none(num_blocks: usize) -> Self {
        Self {
            frozen: vec![false; num_blocks + 1],
        }
    }

    /// Freeze every part whose index satisfies the predicate; index
    /// `num_blocks` is the classifier.
    pub fn from_predicate(num_blocks: usize, frozen: impl Fn(usize) -> bool) -> Self {
        Self {
            frozen: (0..=num_blocks).map(frozen).collect(),
        }
    }

    fn validate(&self, network: &Network) -> Result<()> {
        if self.frozen.len() != network.blocks.len() + 1 {
            return Err(Error::Length {
                expected: network.blocks.len() + 1,
                found: self.frozen.len(),
            });
        }
        Ok(())
    }
}

/// One line of the per-epoch training log.
#[derive(Debug, Clone)]
pub struct EpochLog {
    pub epoch: usize,
    pub lr: f64,
    pub loss: f64,
    pub accuracy: f64,
}

/// Separation profile captured at a snapshot epoch (0 = before any
/// training, e = after e full epochs), measured by an eval-mode probe
/// of the training set.
#[derive(Debug, Clone)]
pub struct Snapshot {
    pub epoch: usize,
    pub profile: SeparationProfile,
}

#[derive(Debug, Clone)]
pub struct TrainRecord {
    pub epochs: Vec<EpochLog>,
    pub snapshots: Vec<Snapshot>,
    pub network: Network,
}

/// Flat optimizer state aligned with the flattened parameter vector.
#[derive(Debug, Clone)]
pub struct OptimState {
    velocity: Vec<f64>,
    adam_m: Vec<f64>,
    adam_v: Vec<f64>,
    step: u64,
}

impl OptimState {
    pub fn new(num_params: usize) -> Self {
        Self {
            velocity: vec![0.0; num_params],
            adam_m: vec![0.0; num_params],
            adam_v: vec![0.0; num_params],
            step: 0,
        }
    }
}

/// Step schedule: base rate, then x0.1 from ⌊epochs/3⌋ and x0.01 from
/// ⌊2·epochs/3⌋.
pub fn lr_at(config: &OptimConfig, epoch: usize) -> f64 {
    let first = config.epochs / 3;
    let second = 2 * config.epochs / 3;
    if epoch < first {
        config.base_lr
    } else if epoch < second {
        config.base_lr * 0.1
    } else {
        config.base_lr * 0.01
    }
}

/// One optimizer step over the active index ranges. Weight decay is
/// coupled L2: wd·w is added to the gradient before the method update,
/// for every parameter including biases and batch-norm γ/β.
pub fn optimizer_step(
    config: &OptimConfig,
    state: &mut OptimState,
    params: &mut [f64],
    grads: &[f64],
    lr: f64,
    active: &[std::ops::Range<usize>],
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.velocity.len() {
        return Err(Error::Length {
            expected: state.velocity.len(),
            found: params.len(),
        });
    }
    for range in active {
        if grads[range.clone()].iter().any(|g| !g.is_finite()) {
            return Err(Error::NumericalFailure {
                epoch: 0,
                reason: "non-finite gradient".into(),
            });
        }
    }
    state.step += 1;
    let bias1 = 1.0 - config.beta1.powi(state.step as i32);
    let bias2 = 1.0 - config.beta2.powi(state.step as i32);
    for range in active {
        for i in range.clone() {
            let g = grads[i] + config.weight_decay * params[i];
            match config.kind {
                OptimKind::Sgd => params[i] -= lr * g,
                OptimKind::Momentum => {
                    state.velocity[i] = config.momentum * state.velocity[i] + g;
                    params[i] -= lr * state.velocity[i];
                }
                OptimKind::Adam => {
                    state.adam_m[i] = config.beta1 * state.adam_m[i] + (1.0 - config.beta1) * g;
                    state.adam_v[i] =
                        config.beta2 * state.adam_v[i] + (1.0 - config.beta2) * g * g;
                    let m_hat = state.adam_m[i] / bias1;
                    let v_hat = state.adam_v[i] / bias2;
                    params[i] -= lr * m_hat / (v_hat.sqrt() + config.epsilon);
                }
            }
        }
    }
    Ok(())
}

/// Full training loop: per epoch a seeded shuffle, minibatch train-mode
/// forward/backward passes (short final batch kept), and an optimizer
/// step over the unfrozen parts. At each snapshot epoch the training
/// set is probed in eval mode and its separation profile stored. The
/// same seed, config, and dataset reproduce the record exactly.
pub fn train(
    mut network: Network,
    dataset: &ImageDataset,
    config: &OptimConfig,
    freeze_mask: &FreezeMask,
    snapshot_epochs: &[usize],
) -> Result<TrainRecord> {
    config.validate()?;
    freeze_mask.validate(&network)?;
    if dataset.len() == 0 {
        return Err(Error::DegenerateData("empty training set".into()));
    }
    if snapshot_epochs.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Config("snapshot epochs must be sorted".into()));
    }
    if snapshot_epochs.last().is_some_and(|&e| e > config.epochs) {
        return Err(Error::Config(format!(
            "snapshot epoch {} past end of training ({})",
            snapshot_epochs.last().unwrap(),
            config.epochs
        )));
    }

    let ranges = network.param_ranges();
    let active: Vec<std::ops::Range<usize>> = ranges
        .iter()
        .zip(&freeze_mask.frozen)
        .filter(|(_, &frozen)| !frozen)
        .map(|(r, _)| r.clone())
        .collect();
    // Frozen blocks keep their running statistics pinned to these.
    let frozen_bn: Vec<Option<(Vec<f64>, Vec<f64>)>> = network
        .blocks
        .iter()
        .zip(&freeze_mask.frozen)
        .map(|(block, &frozen)| {
            (frozen && block.bn.is_some()).then(|| {
                let bn = block.bn.as_ref().unwrap();
                (bn.running_mean.clone(), bn.running_var.clone())
            })
        })
        .collect();

    let mut params = network.flatten_params();
    let mut state = OptimState::new(params.len());
    let mut rng = Rng::from_seed(config.seed);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut epochs = Vec::with_capacity(config.epochs);
    let mut snapshots = Vec::new();

    if snapshot_epochs.first() == Some(&0) {
        snapshots.push(take_snapshot(&mut network, dataset, config, 0)?);
    }

    for epoch in 0..config.epochs {
        let lr = lr_at(config, epoch);
        rng.shuffle(&mut order);
        let mut loss_sum = 0.0;
        let mut correct_weight = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let mut batch = Matrix::zeros(chunk.len(), dataset.feature_dim());
            let mut labels = Vec::with_capacity(chunk.len());
            for (r, &i) in chunk.iter().enumerate() {
                batch.row_mut(r).copy_from_slice(dataset.features.row(i));
                labels.push(dataset.labels[i]);
            }
            let mut step = || -> Result<(f64, f64)> {
                let pass = forward(&mut network, &batch, Mode::Train)?;
                for (block, pinned) in network.blocks.iter_mut().zip(&frozen_bn) {
                    if let (Some(bn), Some((mean, var))) = (&mut block.bn, pinned) {
                        bn.running_mean.copy_from_slice(mean);
                        bn.running_var.copy_from_slice(var);
                    }
                }
                let (loss, grads) = loss_and_grads(&network, &pass, &labels)?;
                if !loss.is_finite() {
                    return Err(Error::NumericalFailure {
                        epoch,
                        reason: "non-finite loss".into(),
                    });
                }
                optimizer_step(config, &mut state, &mut params, &grads.flatten(), lr, &active)?;
                network.unflatten_params(&params)?;
                Ok((loss, accuracy(&pass.logits, &labels)))
            };
            let (loss, acc) = step().map_err(|e| match e {
                Error::NumericalFailure { reason, .. } => Error::NumericalFailure { epoch, reason },
                other => other,
            })?;
            loss_sum += loss * chunk.len() as f64;
            correct_weight += acc * chunk.len() as f64;
        }
        epochs.push(EpochLog {
            epoch,
            lr,
            loss: loss_sum / dataset.len() as f64,
            accuracy: correct_weight / dataset.len() as f64,
        });
        let completed = epoch + 1;
        if snapshot_epochs.contains(&completed) {
            snapshots.push(take_snapshot(&mut network, dataset, config, completed)?);
        }
    }

    Ok(TrainRecord {
        epochs,
        snapshots,
        network,
    })
}

fn take_snapshot(
    network: &mut Network,
    dataset: &ImageDataset,
    config: &OptimConfig,
    epoch: usize,
) -> Result<Snapshot> {
    let trace = probe_features(network, dataset, config.batch_size)?;
    let profile = separation_profile(
        &trace,
        &dataset.labels,
        DEFAULT_REL_TOL,
        Split::Train,
        Some(epoch),
    )?;
    Ok(Snapshot { epoch, profile })
}

/// Result of one learning rate in a sweep.
#[derive(Debug, Clone)]
pub struct SweepEntry {
    pub lr: f64,
    /// Last-epoch law fit on training data; None when the run failed.
    pub fit: Option<LawFit>,
    /// Final-layer fuzziness D_{L-1}; None when the run failed.
    pub final_d: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug)]
pub struct SweepOutcome {
    pub best: TrainRecord,
    pub best_lr: f64,
    pub entries: Vec<SweepEntry>,
}

/// Train one model per learning rate from a shared initialization and
/// pick the one whose last-epoch fit has the most negative Pearson r;
/// ties go to the smaller final fuzziness. Failed or diverged runs are
/// reported in the entry table; the sweep errors only if every run
/// fails.
pub fn sweep_select(
    dataset: &ImageDataset,
    spec: &NetworkSpec,
    config: &OptimConfig,
    lr_grid: &[f64],
    snapshot_epochs: &[usize],
) -> Result<SweepOutcome> {
    if lr_grid.is_empty() {
        return Err(Error::Config("empty learning-rate grid".into()));
    }
    let init = init_network(spec, config.seed)?;
    let mut entries = Vec::with_capacity(lr_grid.len());
    let mut best: Option<(TrainRecord, f64, f64, f64)> = None;

    for &lr in lr_grid {
        let mut run_config = config.clone();
        run_config.base_lr = lr;
        let mask = FreezeMask::none(init.blocks.len());
        let outcome = train(init.clone(), dataset, &run_config, &mask, snapshot_epochs)
            .and_then(|record| {
                let mut final_net = record.network.clone();
                let trace = probe_features(&mut final_net, dataset, config.batch_size)?;
                let profile = separation_profile(
                    &trace,
                    &dataset.labels,
                    DEFAULT_REL_TOL,
                    Split::Train,
                    Some(run_config.epochs),
                )?;
                let fit = fit_law(&profile)?;
                let final_d = *profile.values.last().unwrap();
                Ok((record, fit, final_d))
            });
        match outcome {
            Ok((record, fit, final_d)) => {
                let r = fit.pearson_r;
                let better = match &best {
                    None => true,
                    Some((_, _, best_r, best_d)) => {
                        r < *best_r || (r == *best_r && final_d < *best_d)
                    }
                };
                entries.push(SweepEntry {
                    lr,
                    fit: Some(fit),
                    final_d: Some(final_d),
                    error: None,
                });
                if better {
                    best = Some((record, lr, r, final_d));
                }
            }
            Err(e) => entries.push(SweepEntry {
                lr,
                fit: None,
                final_d: None,
                error: Some(e.to_string()),
            }),
        }
    }

    match best {
        Some((record, best_lr, _, _)) => Ok(SweepOutcome {
            best: record,
            best_lr,
            entries,
        }),
        None => Err(Error::SweepFailure),
    }
}

/// Two-stage frozen training: stage 1 trains blocks [0, split) with
/// everything else frozen, stage 2 trains blocks [split, end) and the
/// classifier with the prefix frozen. Each stage runs the full
/// schedule. Stage 2 epochs and snapshots are offset by the stage
/// length in the combined record.
pub fn frozen_train(
    network: Network,
    dataset: &ImageDataset,
    config: &OptimConfig,
    split_index: usize,
    snapshot_epochs: &[usize],
) -> Result<TrainRecord> {
    let num_blocks = network.blocks.len();
    if split_index == 0 || split_index >= num_blocks {
        return Err(Error::Index(format!(
            "split {split_index} outside block range 1..{num_blocks}"
        )));
    }
    let stage1_mask = FreezeMask::from_predicate(num_blocks, |i| i >= split_index);
    let stage1 = train(network, dataset, config, &stage1_mask, snapshot_epochs)?;

    let stage2_mask = FreezeMask::from_predicate(num_blocks, |i| i < split_index);
    let stage2 = train(stage1.network, dataset, config, &stage2_mask, snapshot_epochs)?;

    let mut epochs = stage1.epochs;
    for mut log in stage2.epochs {
        log.epoch += config.epochs;
        epochs.push(log);
    }
    let mut snapshots = stage1.snapshots;
    for mut snap in stage2.snapshots {
        snap.epoch += config.epochs;
        snap.profile.epoch = Some(snap.epoch);
        snapshots.push(snap);
    }
    Ok(TrainRecord {
        epochs,
        snapshots,
        network: stage2.network,
    })
}

/// Keep the first `keep_blocks` blocks of a pretrained network bitwise
/// (frozen, running statistics included), append freshly initialized
/// blocks of the given widths and a new classifier, and train only the
/// new part.
pub fn pretrain_extend(
    pretrained: &Network,
    keep_blocks: usize,
    extra_widths: &[usize],
    dataset: &ImageDataset,
    config: &OptimConfig,
    snapshot_epochs: &[usize],
) -> Result<TrainRecord> {
    if keep_blocks == 0 || keep_blocks > pretrained.blocks.len() {
        return Err(Error::Index(format!(
            "keep_blocks {keep_blocks} outside 1..={}",
            pretrained.blocks.len()
        )));
    }
    if extra_widths.is_empty() {
        return Err(Error::Config("no extra blocks to train".into()));
    }
    let mut hidden_widths = pretrained.spec.hidden_widths[..keep_blocks].to_vec();
    hidden_widths.extend_from_slice(extra_widths);
    let spec = NetworkSpec {
        input_dim: pretrained.spec.input_dim,
        hidden_widths,
        num_classes: pretrained.spec.num_classes,
        batchnorm: pretrained.spec.batchnorm,
    };
    let mut network = init_network(&spec, config.seed)?;
    for (dst, src) in network.blocks[..keep_blocks]
        .iter_mut()
        .zip(&pretrained.blocks[..keep_blocks])
    {
        if dst.linear.weight.cols() != src.linear.weight.cols()
            || dst.linear.weight.rows() != src.linear.weight.rows()
        {
            return Err(Error::Dimension(format!(
                "splice mismatch: kept block is {}x{}, expected {}x{}",
                src.linear.weight.rows(),
                src.linear.weight.cols(),
                dst.linear.weight.rows(),
                dst.linear.weight.cols()
            )));
        }
        *dst = src.clone();
    }
    let mask = FreezeMask::from_predicate(network.blocks.len(), |i| i < keep_blocks);
    train(network, dataset, config, &mask, snapshot_epochs)
}

#[cfg(test)]
mod tests;
