//! End-to-end pipeline: ingest, (sweep-)train, probe, analyze, emit.

use std::path::Path;

use equisep::dataset::{
    images_to_dataset, load_idx, parse_cifar10, resize_area, standardize, subsample,
    ImageDataset, SamplingSpec, Standardizer,
};
use equisep::linalg::{project, top_k_components, Matrix};
use equisep::network::{forward, probe_features, Mode, Network, NetworkSpec};
use equisep::optim::{sweep_select, train, FreezeMask, TrainRecord};
use equisep::separation::{
    classwise_fuzziness, group_blocks, separation_profile, Split,
};
use equisep::{Error, Result};

use crate::config::{DatasetConfig, ExperimentConfig};
use crate::dump::ActivationDump;
use crate::report::{
    snapshot_report, ClasswiseRow, EpochRow, Metadata, PcaRow, Report, SnapshotReport,
    SweepReport, SweepRow, SCHEMA_VERSION,
};

const NUM_CLASSES: usize = 10;

/// Ingested experiment data: standardized training subsample and, when
/// configured, a held-out subsample transformed with the training
/// statistics.
pub struct LoadedData {
    pub train: ImageDataset,
    pub test: Option<ImageDataset>,
    /// Training-split statistics, kept so callers can transform further
    /// held-out data consistently.
    #[allow(dead_code)]
    pub standardizer: Standardizer,
}

fn stage<T>(name: &str, result: Result<T>) -> Result<T> {
    result.map_err(|e| match e {
        numeric @ (Error::NumericalFailure { .. } | Error::SweepFailure) => numeric,
        other => Error::Config(format!("{name}: {other}")),
    })
}

/// Load the configured dataset: parse the canonical files, resize,
/// subsample with the experiment seed, and standardize on the training
/// draw.
pub fn load_data(config: &DatasetConfig, seed: u64) -> Result<LoadedData> {
    let dir = Path::new(&config.data_dir);
    let (train_pool, test_pool) = match config.name.as_str() {
        "mnist" | "fashion-mnist" => {
            let load_split = |images: &str, labels: &str| -> Result<ImageDataset> {
                images_to_dataset(
                    &load_idx(&dir.join(images))?,
                    &load_idx(&dir.join(labels))?,
                    config.resize,
                    NUM_CLASSES,
                )
            };
            (
                load_split("train-images-idx3-ubyte", "train-labels-idx1-ubyte")?,
                load_split("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte")?,
            )
        }
        "cifar10" => {
            let mut train_bytes = Vec::new();
            for batch in 1..=5 {
                train_bytes
                    .extend(std::fs::read(dir.join(format!("data_batch_{batch}.bin")))?);
            }
            let test_bytes = std::fs::read(dir.join("test_batch.bin"))?;
            (
                resize_cifar(parse_cifar10(&train_bytes, config.channel)?, config.resize)?,
                resize_cifar(parse_cifar10(&test_bytes, config.channel)?, config.resize)?,
            )
        }
        other => return Err(Error::Config(format!("unknown dataset \"{other}\""))),
    };

    let train_spec = SamplingSpec {
        per_class_counts: match (&config.train_per_class, &config.train_per_class_counts) {
            (Some(per_class), None) => vec![*per_class; NUM_CLASSES],
            (None, Some(counts)) => counts.clone(),
            _ => return Err(Error::Config("ambiguous training sampling spec".into())),
        },
        seed,
    };
    let train_raw = subsample(&train_pool, &train_spec)?;
    let (train, standardizer) = standardize(&train_raw)?;
    let test = match config.test_per_class {
        Some(per_class) => {
            // Different stream from the training draw.
            let spec = SamplingSpec::balanced(NUM_CLASSES, per_class, seed ^ 0x5445_5354);
            Some(standardizer.apply(&subsample(&test_pool, &spec)?)?)
        }
        None => None,
    };
    Ok(LoadedData {
        train,
        test,
        standardizer,
    })
}

fn resize_cifar(dataset: ImageDataset, resize: Option<(usize, usize)>) -> Result<ImageDataset> {
    let Some((h, w)) = resize else {
        return Ok(dataset);
    };
    let mut features = Matrix::zeros(dataset.len(), h * w);
    for r in 0..dataset.len() {
        let resized = resize_area(dataset.features.row(r), 32, 32, h, w)?;
        features.row_mut(r).copy_from_slice(&resized);
    }
    ImageDataset::new(features, dataset.labels, dataset.num_classes)
}

/// Classification accuracy of an eval-mode pass over a dataset.
pub fn eval_accuracy(network: &mut Network, dataset: &ImageDataset, batch_size: usize) -> Result<f64> {
    let mut correct = 0.0;
    let mut start = 0;
    while start < dataset.len() {
        let end = (start + batch_size.max(1)).min(dataset.len());
        let mut batch = Matrix::zeros(end - start, dataset.feature_dim());
        for r in start..end {
            batch.row_mut(r - start).copy_from_slice(dataset.features.row(r));
        }
        let pass = forward(network, &batch, Mode::Eval)?;
        let labels = &dataset.labels[start..end];
        correct += equisep::network::accuracy(&pass.logits, labels) * labels.len() as f64;
        start = end;
    }
    Ok(correct / dataset.len() as f64)
}

/// Report plus the trained network it describes.
pub struct ExperimentOutcome {
    pub report: Report,
    pub network: Network,
}

/// Execute the full documented protocol for one configuration.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutcome> {
    stage("config", config.validate())?;
    let data = stage("ingest", load_data(&config.dataset, config.seed))?;
    let spec = NetworkSpec {
        input_dim: data.train.feature_dim(),
        hidden_widths: config.network.hidden_widths.clone(),
        num_classes: NUM_CLASSES,
        batchnorm: config.network.batchnorm,
    };

    // Always capture the final state even if no snapshots were asked for.
    let mut snapshot_epochs = config.snapshot_epochs.clone();
    if snapshot_epochs.last() != Some(&config.optimizer.epochs) {
        snapshot_epochs.push(config.optimizer.epochs);
    }

    let (record, sweep): (TrainRecord, Option<SweepReport>) = match config.sweep_grid()? {
        Some(grid) => {
            let optim = config.optim_config(grid[0])?;
            let outcome = stage(
                "sweep",
                sweep_select(&data.train, &spec, &optim, &grid, &snapshot_epochs),
            )?;
            let entries = outcome
                .entries
                .iter()
                .map(|e| SweepRow {
                    lr: e.lr,
                    pearson_r: e.fit.as_ref().map(|f| f.pearson_r),
                    rho: e.fit.as_ref().map(|f| f.rho),
                    final_d: e.final_d,
                    error: e.error.clone(),
                })
                .collect();
            (
                outcome.best,
                Some(SweepReport {
                    best_lr: outcome.best_lr,
                    entries,
                }),
            )
        }
        None => {
            let optim = config.optim_config(config.optimizer.lr.unwrap())?;
            let network = equisep::network::init_network(&spec, config.seed)?;
            let mask = FreezeMask::none(network.blocks.len());
            (
                stage(
                    "train",
                    train(network, &data.train, &optim, &mask, &snapshot_epochs),
                )?,
                None,
            )
        }
    };

    let rel_tol = config.analysis.rel_tol;
    let mut snapshots: Vec<SnapshotReport> = record
        .snapshots
        .iter()
        .map(|snap| snapshot_report(&snap.profile, "layers"))
        .collect();

    let mut network = record.network.clone();
    let batch = config.optimizer.batch_size;
    let final_trace = stage("probe", probe_features(&mut network, &data.train, batch))?;

    if !config.analysis.block_boundaries.is_empty() {
        let profile = stage(
            "analyze",
            group_blocks(
                &final_trace.layer_outputs,
                &data.train.labels,
                &config.analysis.block_boundaries,
                rel_tol,
                Split::Train,
                Some(config.optimizer.epochs),
            ),
        )?;
        snapshots.push(snapshot_report(&profile, "blocks"));
    }

    if config.analysis.classwise {
        let mut rows = Vec::new();
        for (layer, features) in final_trace.layer_outputs.iter().enumerate() {
            for class in 0..NUM_CLASSES {
                rows.push(ClasswiseRow {
                    layer,
                    class,
                    d: classwise_fuzziness(features, &data.train.labels, class, rel_tol)?,
                });
            }
        }
        if let Some(last) = snapshots.iter_mut().find(|s| {
            s.split == "train" && s.grouping == "layers" && s.epoch == Some(config.optimizer.epochs)
        }) {
            last.classwise = rows;
        }
    }

    let mut pca = Vec::new();
    if config.analysis.pca {
        for (layer, features) in final_trace.layer_outputs.iter().enumerate() {
            let (components, _) = stage("analyze", top_k_components(features, 2))?;
            let coords = project(features, &components)?;
            for point in 0..coords.rows() {
                pca.push(PcaRow {
                    layer,
                    point,
                    x: coords.get(point, 0),
                    y: coords.get(point, 1),
                    label: data.train.labels[point],
                });
            }
        }
    }

    let mut test_accuracy = None;
    if let Some(test) = &data.test {
        let trace = stage("probe", probe_features(&mut network, test, batch))?;
        let profile = stage(
            "analyze",
            separation_profile(
                &trace,
                &test.labels,
                rel_tol,
                Split::Test,
                Some(config.optimizer.epochs),
            ),
        )?;
        snapshots.push(snapshot_report(&profile, "layers"));
        test_accuracy = Some(eval_accuracy(&mut network, test, batch)?);
    }

    let final_train_accuracy = Some(eval_accuracy(&mut network, &data.train, batch)?);
    let report = Report {
        schema_version: SCHEMA_VERSION,
        metadata: Metadata::new(config.seed, Some(config.clone()), rel_tol),
        snapshots,
        sweep,
        pca,
        epoch_log: record
            .epochs
            .iter()
            .map(|e| EpochRow {
                epoch: e.epoch,
                lr: e.lr,
                loss: e.loss,
                accuracy: e.accuracy,
            })
            .collect(),
        final_train_loss: record.epochs.last().map(|e| e.loss),
        final_train_accuracy,
        test_accuracy,
    };
    Ok(ExperimentOutcome { report, network })
}

/// Analyze an activation dump: per-layer law fit, plus the block-level
/// view when boundaries are given.
pub fn analyze_dump(dump: &ActivationDump, boundaries: &[usize], rel_tol: f64) -> Result<Report> {
    let trace = equisep::network::ForwardTrace {
        layer_outputs: dump.layers.clone(),
    };
    let profile = separation_profile(&trace, &dump.labels, rel_tol, Split::Train, None)?;
    let mut snapshots = vec![snapshot_report(&profile, "layers")];
    if !boundaries.is_empty() {
        let grouped = group_blocks(
            &dump.layers,
            &dump.labels,
            boundaries,
            rel_tol,
            Split::Train,
            None,
        )?;
        snapshots.push(snapshot_report(&grouped, "blocks"));
    }
    Ok(Report {
        schema_version: SCHEMA_VERSION,
        metadata: Metadata::new(0, None, rel_tol),
        snapshots,
        sweep: None,
        pca: Vec::new(),
        epoch_log: Vec::new(),
        final_train_loss: None,
        final_train_accuracy: None,
        test_accuracy: None,
    })
}
