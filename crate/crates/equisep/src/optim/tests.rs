use super::*;
use crate::network::{init_network, probe_features};
use crate::rng::Rng;

fn config(kind: OptimKind, lr: f64) -> OptimConfig {
    let mut c = OptimConfig::new(kind, lr, 7);
    c.epochs = 6;
    c.batch_size = 16;
    c
}

/// Two well-separated Gaussian blobs per class.
fn gaussian_dataset(n_per_class: usize, k: usize, d: usize, seed: u64) -> ImageDataset {
    let mut rng = Rng::from_seed(seed);
    let n = n_per_class * k;
    let mut features = Matrix::zeros(n, d);
    let mut labels = Vec::with_capacity(n);
    for c in 0..k {
        let center: Vec<f64> = (0..d).map(|_| 4.0 * rng.next_normal()).collect();
        for _ in 0..n_per_class {
            let r = labels.len();
            for (j, &ctr) in center.iter().enumerate() {
                features.set(r, j, ctr + rng.next_normal());
            }
            labels.push(c);
        }
    }
    ImageDataset::new(features, labels, k).unwrap()
}

fn tiny_spec(d: usize, k: usize) -> NetworkSpec {
    NetworkSpec::new(d, vec![8, 8], k)
}

#[test]
fn lr_schedule_matches_paper_thirds() {
    // [PAPER] "annealed by a factor of 10 at 1/3 and 2/3 of the 600
    // epochs": 0.001 until epoch 199, 0.0001 until 399, 0.00001 after.
    let c = OptimConfig::new(OptimKind::Sgd, 0.001, 0);
    assert_eq!(lr_at(&c, 0), 0.001);
    assert_eq!(lr_at(&c, 199), 0.001);
    assert!((lr_at(&c, 200) - 1e-4).abs() < 1e-18);
    assert!((lr_at(&c, 399) - 1e-4).abs() < 1e-18);
    assert!((lr_at(&c, 400) - 1e-5).abs() < 1e-18);
    assert!((lr_at(&c, 599) - 1e-5).abs() < 1e-18);
}

#[test]
fn lr_schedule_boundary_case_three_epochs() {
    let mut c = OptimConfig::new(OptimKind::Sgd, 1.0, 0);
    c.epochs = 3;
    assert_eq!(lr_at(&c, 0), 1.0);
    assert!((lr_at(&c, 1) - 0.1).abs() < 1e-15);
    assert!((lr_at(&c, 2) - 0.01).abs() < 1e-15);
}

fn step_once(kind: OptimKind, w: f64, g: f64, lr: f64, wd: f64) -> (f64, OptimState) {
    let mut c = OptimConfig::new(kind, lr, 0);
    c.weight_decay = wd;
    let mut state = OptimState::new(1);
    let mut params = [w];
    optimizer_step(&c, &mut state, &mut params, &[g], lr, &[0..1]).unwrap();
    (params[0], state)
}

#[test]
fn sgd_step_is_plain_descent() {
    // [TRIVIAL] w = 1, g = 1, lr = 0.1, wd = 0 gives 0.9.
    let (w, _) = step_once(OptimKind::Sgd, 1.0, 1.0, 0.1, 0.0);
    assert!((w - 0.9).abs() < 1e-15);
}

#[test]
fn momentum_steps_match_hand_recursion() {
    // [TRIVIAL] from rest v = g, so the first step is plain descent;
    // [DERIVED] second step with the same gradient: v = 0.9 + 1 = 1.9.
    let mut c = OptimConfig::new(OptimKind::Momentum, 0.1, 0);
    c.weight_decay = 0.0;
    let mut state = OptimState::new(1);
    let mut params = [1.0];
    optimizer_step(&c, &mut state, &mut params, &[1.0], 0.1, &[0..1]).unwrap();
    assert!((params[0] - 0.9).abs() < 1e-15);
    optimizer_step(&c, &mut state, &mut params, &[1.0], 0.1, &[0..1]).unwrap();
    assert!((params[0] - (0.9 - 0.1 * 1.9)).abs() < 1e-15);
}

#[test]
fn adam_first_step_magnitude_is_about_lr() {
    // [DERIVED] bias correction makes m̂ = g and v̂ = g² on step one, so
    // |Δw| = lr·|g|/(|g| + ε).
    for g in [0.5, -3.0, 1e-3] {
        let (w, _) = step_once(OptimKind::Adam, 1.0, g, 0.01, 0.0);
        let expected = 1.0 - 0.01 * g / (g.abs() + 1e-8);
        assert!((w - expected).abs() < 1e-12, "g = {g}: w = {w}");
    }
}

#[test]
fn weight_decay_alone_contracts_geometrically() {
    // With zero gradients an SGD step multiplies w by (1 − lr·wd).
    let mut c = OptimConfig::new(OptimKind::Sgd, 0.1, 0);
    c.weight_decay = 0.5;
    let mut state = OptimState::new(1);
    let mut params = [2.0];
    for _ in 0..5 {
        optimizer_step(&c, &mut state, &mut params, &[0.0], 0.1, &[0..1]).unwrap();
    }
    let expected = 2.0 * (1.0 - 0.1 * 0.5f64).powi(5);
    assert!((params[0] - expected).abs() < 1e-12);
}

#[test]
fn frozen_ranges_are_untouched_even_by_decay() {
    let c = OptimConfig::new(OptimKind::Sgd, 0.1, 0);
    let mut state = OptimState::new(2);
    let mut params = [1.0, 1.0];
    optimizer_step(&c, &mut state, &mut params, &[1.0, 1.0], 0.1, &[1..2]).unwrap();
    assert_eq!(params[0], 1.0);
    assert!(params[1] < 1.0);
}

#[test]
fn non_finite_gradients_abort() {
    let c = OptimConfig::new(OptimKind::Sgd, 0.1, 0);
    let mut state = OptimState::new(1);
    let mut params = [1.0];
    let err = optimizer_step(&c, &mut state, &mut params, &[f64::NAN], 0.1, &[0..1]);
    assert!(matches!(err, Err(Error::NumericalFailure { .. })));
    // Frozen NaN gradients are fine: the range is never read.
    optimizer_step(&c, &mut state, &mut params, &[f64::NAN], 0.1, &[]).unwrap();
}

#[test]
fn config_validation_rejects_bad_values() {
    let mut c = OptimConfig::new(OptimKind::Sgd, 0.0, 0);
    assert!(c.validate().is_err());
    c.base_lr = 0.1;
    c.momentum = 1.0;
    assert!(c.validate().is_err());
    c.momentum = 0.9;
    c.epochs = 0;
    assert!(c.validate().is_err());
    c.epochs = 1;
    assert!(c.validate().is_ok());
}

#[test]
fn training_is_seed_deterministic() {
    let data = gaussian_dataset(20, 3, 6, 1);
    let spec = tiny_spec(6, 3);
    let run = || {
        let net = init_network(&spec, 5).unwrap();
        let mask = FreezeMask::none(net.blocks.len());
        train(net, &data, &config(OptimKind::Adam, 1e-3), &mask, &[]).unwrap()
    };
    let a = run();
    let b = run();
    assert_eq!(a.network, b.network);
    assert_eq!(a.epochs.last().unwrap().loss, b.epochs.last().unwrap().loss);
}

#[test]
fn training_learns_separable_blobs() {
    let data = gaussian_dataset(30, 3, 6, 2);
    let net = init_network(&tiny_spec(6, 3), 5).unwrap();
    let mask = FreezeMask::none(net.blocks.len());
    let mut c = config(OptimKind::Adam, 1e-2);
    c.epochs = 15;
    let record = train(net, &data, &c, &mask, &[]).unwrap();
    let first = record.epochs.first().unwrap();
    let last = record.epochs.last().unwrap();
    assert!(last.loss < first.loss);
    assert!(last.accuracy > 0.95, "accuracy {}", last.accuracy);
}

#[test]
fn frozen_blocks_stay_bitwise_identical() {
    let data = gaussian_dataset(20, 2, 5, 3);
    let spec = NetworkSpec::new(5, vec![6, 6, 6], 2);
    let net = init_network(&spec, 9).unwrap();
    let frozen_before = net.blocks[0].clone();
    let mask = FreezeMask::from_predicate(3, |i| i == 0);
    let record = train(net, &data, &config(OptimKind::Momentum, 0.05), &mask, &[]).unwrap();
    // Parameters and running statistics of the frozen block are pinned.
    assert_eq!(record.network.blocks[0], frozen_before);
    assert_ne!(
        record.network.blocks[1].linear.weight,
        init_network(&spec, 9).unwrap().blocks[1].linear.weight
    );
}

#[test]
fn zero_effective_lr_keeps_parameters() {
    // lr itself must be positive; drive the update to zero through a
    // zero-decay config and explicit zero gradient check instead:
    // a fully frozen network never changes.
    let data = gaussian_dataset(10, 2, 4, 4);
    let spec = NetworkSpec::new(4, vec![5], 2);
    let net = init_network(&spec, 3).unwrap();
    let before = net.flatten_params();
    let mask = FreezeMask::from_predicate(1, |_| true);
    let record = train(net, &data, &config(OptimKind::Sgd, 0.1), &mask, &[]).unwrap();
    assert_eq!(record.network.flatten_params(), before);
}

#[test]
fn snapshots_cover_requested_epochs_and_match_probes() {
    let data = gaussian_dataset(15, 3, 5, 5);
    let spec = tiny_spec(5, 3);
    let net = init_network(&spec, 11).unwrap();
    let c = config(OptimKind::Adam, 1e-3);
    let mask = FreezeMask::none(net.blocks.len());

    // Snapshot 0 equals a probe of the untouched initialization.
    let mut fresh = init_network(&spec, 11).unwrap();
    let trace = probe_features(&mut fresh, &data, c.batch_size).unwrap();
    let init_profile = crate::separation::separation_profile(
        &trace,
        &data.labels,
        DEFAULT_REL_TOL,
        Split::Train,
        Some(0),
    )
    .unwrap();

    let record = train(net, &data, &c, &mask, &[0, 2, 6]).unwrap();
    let epochs: Vec<usize> = record.snapshots.iter().map(|s| s.epoch).collect();
    assert_eq!(epochs, vec![0, 2, 6]);
    assert_eq!(record.snapshots[0].profile.values, init_profile.values);

    // The final snapshot equals a probe of the returned network.
    let mut final_net = record.network.clone();
    let trace = probe_features(&mut final_net, &data, c.batch_size).unwrap();
    let final_profile = crate::separation::separation_profile(
        &trace,
        &data.labels,
        DEFAULT_REL_TOL,
        Split::Train,
        Some(6),
    )
    .unwrap();
    assert_eq!(record.snapshots[2].profile.values, final_profile.values);
}

#[test]
fn train_validates_inputs() {
    let data = gaussian_dataset(10, 2, 4, 6);
    let spec = NetworkSpec::new(4, vec![5], 2);
    let net = init_network(&spec, 1).unwrap();
    let c = config(OptimKind::Sgd, 0.1);
    let short_mask = FreezeMask { frozen: vec![false] };
    assert!(train(net.clone(), &data, &c, &short_mask, &[]).is_err());
    let mask = FreezeMask::none(1);
    assert!(train(net.clone(), &data, &c, &mask, &[3, 1]).is_err());
    assert!(train(net, &data, &c, &mask, &[7]).is_err());
}

#[test]
fn divergence_reports_the_failing_epoch() {
    let data = gaussian_dataset(10, 2, 4, 7);
    let spec = NetworkSpec::new(4, vec![5], 2);
    let net = init_network(&spec, 1).unwrap();
    let mut c = config(OptimKind::Sgd, 1e300);
    c.epochs = 8;
    let mask = FreezeMask::none(1);
    match train(net, &data, &c, &mask, &[]) {
        Err(Error::NumericalFailure { epoch, .. }) => assert!(epoch < 8),
        other => panic!("expected numerical failure, got {other:?}"),
    }
}

#[test]
fn sweep_picks_the_most_negative_law_fit() {
    let data = gaussian_dataset(20, 3, 6, 8);
    let spec = tiny_spec(6, 3);
    let c = config(OptimKind::Adam, 1.0);
    let outcome = sweep_select(&data, &spec, &c, &[1e-4, 1e-3, 1e-2], &[]).unwrap();
    assert_eq!(outcome.entries.len(), 3);
    let best_r = outcome
        .entries
        .iter()
        .find(|e| e.lr == outcome.best_lr)
        .and_then(|e| e.fit.as_ref())
        .unwrap()
        .pearson_r;
    for entry in &outcome.entries {
        if let Some(fit) = &entry.fit {
            assert!(fit.pearson_r >= best_r - 1e-15);
        }
    }
}

#[test]
fn sweep_requires_a_grid_and_a_survivor() {
    let data = gaussian_dataset(10, 2, 4, 9);
    let spec = NetworkSpec::new(4, vec![5, 5], 2);
    let c = config(OptimKind::Sgd, 1.0);
    assert!(matches!(
        sweep_select(&data, &spec, &c, &[], &[]),
        Err(Error::Config(_))
    ));
    // An absurd grid diverges everywhere.
    assert!(matches!(
        sweep_select(&data, &spec, &c, &[1e300, 1e305], &[]),
        Err(Error::SweepFailure)
    ));
}

#[test]
fn paper_lr_grids_are_exact() {
    // [PAPER] Appendix A.1 sweep grids.
    assert_eq!(SGD_LR_GRID, [0.001, 0.003, 0.01, 0.03, 0.1, 0.3, 1.0]);
    assert_eq!(ADAM_LR_GRID, [3e-5, 1e-4, 3e-4, 1e-3, 3e-3]);
}

#[test]
fn frozen_training_runs_both_stages() {
    let data = gaussian_dataset(15, 2, 5, 10);
    let spec = NetworkSpec::new(5, vec![6, 6, 6, 6], 2);
    let net = init_network(&spec, 4).unwrap();
    let c = config(OptimKind::Adam, 1e-3);
    let record = frozen_train(net, &data, &c, 2, &[0, c.epochs]).unwrap();
    assert_eq!(record.epochs.len(), 2 * c.epochs);
    assert_eq!(record.epochs.last().unwrap().epoch, 2 * c.epochs - 1);
    let snapshot_epochs: Vec<usize> = record.snapshots.iter().map(|s| s.epoch).collect();
    assert_eq!(snapshot_epochs, vec![0, c.epochs, c.epochs, 2 * c.epochs]);

    let bad = init_network(&spec, 4).unwrap();
    assert!(frozen_train(bad.clone(), &data, &c, 0, &[]).is_err());
    assert!(frozen_train(bad, &data, &c, 4, &[]).is_err());
}

#[test]
fn pretrain_extend_preserves_kept_blocks() {
    let data = gaussian_dataset(15, 2, 5, 11);
    let spec = NetworkSpec::new(5, vec![6, 6, 6], 2);
    let c = config(OptimKind::Adam, 1e-3);
    let pretrained = train(
        init_network(&spec, 2).unwrap(),
        &data,
        &c,
        &FreezeMask::none(3),
        &[],
    )
    .unwrap()
    .network;

    let record = pretrain_extend(&pretrained, 2, &[6, 6], &data, &c, &[]).unwrap();
    // Depth arithmetic: 2 kept + 2 new blocks, so 5 capture points.
    assert_eq!(record.network.blocks.len(), 4);
    assert_eq!(record.network.spec.depth(), 5);
    for i in 0..2 {
        assert_eq!(record.network.blocks[i], pretrained.blocks[i]);
    }
    assert!(pretrain_extend(&pretrained, 0, &[6], &data, &c, &[]).is_err());
    assert!(pretrain_extend(&pretrained, 4, &[6], &data, &c, &[]).is_err());
    assert!(pretrain_extend(&pretrained, 2, &[], &data, &c, &[]).is_err());
}
