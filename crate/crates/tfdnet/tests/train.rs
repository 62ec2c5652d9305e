//! Training-side tests: mixture loss anchors and bounds, cosine schedule,
//! gradient clipping, Adam update semantics, loop determinism, early
//! stopping, evaluation oracles, and a small end-to-end learnability run.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use tfdnet::autodiff::Graph;
use tfdnet::data::WindowSet;
use tfdnet::error::Error;
use tfdnet::model::{ModelConfig, SeasonalMode, TfdnetModel};
use tfdnet::train::{
    clip_gradients, cosine_lr, evaluate, evaluate_by_step, mixture_loss, persistence_eval,
    train_loop, training_loss, write_history, Adam, EvalReport, Forecaster, LinearBaseline,
    LossKind, TrainConfig,
};

fn randn(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect()
}

fn loss_pair(pred: Vec<f64>, target: Vec<f64>) -> (f64, f64, f64, f64) {
    let n = pred.len();
    let mut g = Graph::inference();
    let p = g.constant(pred, &[1, n]).unwrap();
    let t = g.constant(target, &[1, n]).unwrap();
    let (_, report) = mixture_loss(&mut g, p, t).unwrap();
    (report.loss, report.mean_alpha, report.l1_component, report.l2_component)
}

// ---- mixture loss ---------------------------------------------------------------

#[test]
fn exact_predictions_cost_nothing() {
    let (loss, alpha, l1, l2) = loss_pair(vec![1.5, -2.0, 0.0, 7.25], vec![1.5, -2.0, 0.0, 7.25]);
    assert_eq!(loss, 0.0);
    assert_eq!(alpha, 0.0);
    assert_eq!(l1, 0.0);
    assert_eq!(l2, 0.0);
}

#[test]
fn unit_errors_cost_exactly_one() {
    // At |e| = 1 the blend is alpha*1 + (1-alpha)*1 = 1 regardless of alpha.
    let (loss, alpha, _, _) = loss_pair(vec![2.0, 0.0, -3.0, 5.0], vec![1.0, 1.0, -4.0, 4.0]);
    assert_eq!(loss, 1.0);
    assert!((alpha - 1.0f64.tanh()).abs() < 1e-15);
}

#[test]
fn half_errors_match_the_closed_form_value() {
    // alpha = tanh(0.5); loss = alpha/2 + (1 - alpha)/4 = 0.365529...
    let (loss, _, l1, l2) = loss_pair(vec![0.5, 1.0], vec![0.0, 0.5]);
    assert!((loss - 0.365529).abs() < 1e-5, "loss {loss}");
    let alpha = 0.5f64.tanh();
    assert!((l1 - alpha * 0.5).abs() < 1e-12);
    assert!((l2 - (1.0 - alpha) * 0.25).abs() < 1e-12);
    assert!((l1 + l2 - loss).abs() < 1e-12);
}

#[test]
fn blend_factor_stays_inside_the_open_unit_interval() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..20 {
        let n = 16;
        let pred = randn(&mut rng, n);
        let target: Vec<f64> = pred.iter().map(|v| v + 0.3).collect();
        let (_, alpha, _, _) = loss_pair(pred, target);
        assert!(alpha > 0.0 && alpha < 1.0, "alpha {alpha}");
    }
}

#[test]
fn mixture_sits_between_absolute_and_squared_error() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    // Small errors (|e| <= 1): the blend is at most the absolute error.
    for _ in 0..10 {
        let e: Vec<f64> = (0..32).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        let mae = e.iter().map(|v| v.abs()).sum::<f64>() / 32.0;
        let (loss, _, _, _) = loss_pair(e.clone(), vec![0.0; 32]);
        assert!(loss <= mae + 1e-15, "loss {loss} vs mae {mae}");
    }
    // Large errors (|e| >= 1): at least the absolute error.
    for _ in 0..10 {
        let e: Vec<f64> = (0..32)
            .map(|_| (1.0 + rng.random::<f64>() * 3.0) * if rng.random::<f64>() < 0.5 { -1.0 } else { 1.0 })
            .collect();
        let mae = e.iter().map(|v| v.abs()).sum::<f64>() / 32.0;
        let (loss, _, _, _) = loss_pair(e.clone(), vec![0.0; 32]);
        assert!(loss >= mae - 1e-15, "loss {loss} vs mae {mae}");
    }
}

#[test]
fn squared_objective_is_plain_mean_squared_error() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let pred = randn(&mut rng, 24);
    let target = randn(&mut rng, 24);
    let want: f64 = pred.iter().zip(&target).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / 24.0;
    let mut g = Graph::inference();
    let p = g.constant(pred, &[2, 12]).unwrap();
    let t = g.constant(target, &[2, 12]).unwrap();
    let (_, value) = training_loss(&mut g, p, t, LossKind::L2).unwrap();
    assert!((value - want).abs() < 1e-15);
}

#[test]
fn loss_rejects_mismatched_sizes() {
    let mut g = Graph::inference();
    let p = g.constant(vec![0.0; 6], &[2, 3]).unwrap();
    let t = g.constant(vec![0.0; 4], &[2, 2]).unwrap();
    assert!(mixture_loss(&mut g, p, t).is_err());
}

#[test]
fn mixture_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for trial in 0..10 {
        let pred = randn(&mut rng, 8);
        let target = randn(&mut rng, 8);
        let t_clone = target.clone();
        let err = tfdnet::autodiff::check_gradients(
            move |g, ids| {
                let t = g.constant(t_clone.clone(), &[1, 8]).unwrap();
                let (loss, _) = mixture_loss(g, ids[0], t).unwrap();
                loss
            },
            &[(pred, vec![1, 8])],
            1e-5,
        );
        assert!(err < 1e-4, "trial {trial}: rel err {err}");
    }
}

// ---- schedule and clipping --------------------------------------------------------

#[test]
fn cosine_schedule_hits_its_anchors() {
    assert_eq!(cosine_lr(0.3, 0, 100).unwrap(), 0.3);
    assert_eq!(cosine_lr(0.3, 100, 100).unwrap(), 0.0);
    assert!((cosine_lr(0.3, 50, 100).unwrap() - 0.15).abs() < 1e-12);
    let mut prev = f64::INFINITY;
    for step in 0..=100 {
        let lr = cosine_lr(1.0, step, 100).unwrap();
        assert!(lr <= prev + 1e-15, "step {step}");
        prev = lr;
    }
}

#[test]
fn cosine_schedule_rejects_a_degenerate_horizon() {
    assert!(cosine_lr(0.1, 0, 0).is_err());
    let err = cosine_lr(0.1, 7, 5).unwrap_err();
    assert!(err.to_string().contains("7") && err.to_string().contains("5"), "{err}");
}

#[test]
fn clipping_rescales_only_oversized_gradients() {
    let mut small = vec![vec![0.1, 0.2], vec![0.05]];
    let before = small.clone();
    let norm = clip_gradients(&mut small, 5.0);
    assert!((norm - (0.01f64 + 0.04 + 0.0025).sqrt()).abs() < 1e-15);
    assert_eq!(small, before, "under the ceiling nothing changes");

    let mut big = vec![vec![3.0], vec![4.0]];
    let norm = clip_gradients(&mut big, 1.0);
    assert_eq!(norm, 5.0);
    assert!((big[0][0] - 0.6).abs() < 1e-15);
    assert!((big[1][0] - 0.8).abs() < 1e-15);
}

// ---- Adam --------------------------------------------------------------------

#[test]
fn first_adam_step_moves_by_the_learning_rate() {
    // With uniform unit gradients, bias correction makes the very first
    // update -lr / (1 + eps) for every element.
    let mut model = LinearBaseline::new(3, 2, 0);
    let before = model.snapshot();
    let mut adam = Adam::new(&model);
    let grads = vec![vec![1.0; 6], vec![1.0; 2]];
    adam.step(&mut model, &grads, 0.1).unwrap();
    let after = model.snapshot();
    for (b, a) in before.iter().zip(&after) {
        for (x, y) in b.iter().zip(a) {
            assert!((y - (x - 0.1)).abs() < 1e-8, "{x} -> {y}");
        }
    }
}

#[test]
fn zero_gradients_leave_parameters_untouched() {
    let mut model = LinearBaseline::new(4, 3, 1);
    let before = model.snapshot();
    let mut adam = Adam::new(&model);
    let grads = vec![vec![0.0; 12], vec![0.0; 3]];
    adam.step(&mut model, &grads, 0.5).unwrap();
    assert_eq!(model.snapshot(), before);
}

#[test]
fn identical_gradient_streams_yield_identical_parameters() {
    let mut a = LinearBaseline::new(3, 2, 9);
    let mut b = LinearBaseline::new(3, 2, 9);
    let mut adam_a = Adam::new(&a);
    let mut adam_b = Adam::new(&b);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..5 {
        let grads = vec![randn(&mut rng, 6), randn(&mut rng, 2)];
        adam_a.step(&mut a, &grads, 0.01).unwrap();
        adam_b.step(&mut b, &grads, 0.01).unwrap();
    }
    assert_eq!(a.snapshot(), b.snapshot());
}

#[test]
fn bad_gradients_abort_the_step_without_side_effects() {
    let mut model = LinearBaseline::new(3, 2, 2);
    let before = model.snapshot();
    let mut adam = Adam::new(&model);

    let wrong_count = vec![vec![1.0; 6]];
    assert!(adam.step(&mut model, &wrong_count, 0.1).is_err());

    let mut with_nan = vec![vec![1.0; 6], vec![1.0; 2]];
    with_nan[0][3] = f64::NAN;
    let err = adam.step(&mut model, &with_nan, 0.1).unwrap_err();
    assert!(err.to_string().contains("linear.weight"), "{err}");
    assert_eq!(model.snapshot(), before, "failed steps must not move parameters");

    // The failures above must not have consumed a time step: the next valid
    // update still behaves like the very first one.
    let grads = vec![vec![1.0; 6], vec![1.0; 2]];
    adam.step(&mut model, &grads, 0.1).unwrap();
    for (b, a) in before.iter().zip(&model.snapshot()) {
        for (x, y) in b.iter().zip(a) {
            assert!((y - (x - 0.1)).abs() < 1e-8);
        }
    }
}

// ---- window helpers ---------------------------------------------------------------

/// Row-major `[rows, channels]` sinusoid dataset with per-channel phase.
fn sinusoid_rows(rows: usize, channels: usize, period: f64, noise: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v = Vec::with_capacity(rows * channels);
    for i in 0..rows {
        for ch in 0..channels {
            let phase = ch as f64 * 1.3;
            let x = (std::f64::consts::TAU * i as f64 / period + phase).sin();
            v.push(x + noise * (rng.random::<f64>() * 2.0 - 1.0));
        }
    }
    v
}

fn windows_over(values: &[f64], rows: usize, channels: usize, l: usize, t: usize) -> WindowSet {
    WindowSet::from_split(values, rows, channels, 0..rows, l, t, 1).unwrap()
}

fn tiny_model_config() -> ModelConfig {
    ModelConfig {
        channels: 2,
        lookback: 32,
        horizon: 8,
        scales: vec![8],
        strides: vec![4],
        seasonal_mode: SeasonalMode::Mk,
        individual_rank: 2,
        kernel_count: 1,
        ma_kernel: 3,
        revin_affine: false,
    }
}

// ---- training loop -----------------------------------------------------------------

#[test]
fn same_seed_runs_are_bitwise_identical() {
    let values = sinusoid_rows(160, 2, 24.0, 0.05, 10);
    let train = windows_over(&values[..140 * 2], 140, 2, 32, 8);
    let val = windows_over(&values[100 * 2..], 60, 2, 32, 8);
    let cfg = TrainConfig {
        epochs: 3,
        batch_size: 16,
        base_lr: 1e-3,
        clip_norm: Some(5.0),
        patience: 0,
        seed: 42,
        loss: LossKind::Mixture,
    };
    let mut m1 = TfdnetModel::new(tiny_model_config(), 7).unwrap();
    let out1 = train_loop(&mut m1, &train, &val, &cfg).unwrap();
    let mut m2 = TfdnetModel::new(tiny_model_config(), 7).unwrap();
    let out2 = train_loop(&mut m2, &train, &val, &cfg).unwrap();
    assert_eq!(out1.history, out2.history);
    assert_eq!(out1.best_epoch, out2.best_epoch);
    assert_eq!(out1.best_val_loss.to_bits(), out2.best_val_loss.to_bits());
    assert_eq!(m1.snapshot(), m2.snapshot());
}

#[test]
fn history_records_the_cosine_rate_of_each_epochs_last_batch() {
    let values = sinusoid_rows(140, 2, 24.0, 0.05, 11);
    let train = windows_over(&values[..120 * 2], 120, 2, 32, 8);
    let val = windows_over(&values[90 * 2..], 50, 2, 32, 8);
    let cfg = TrainConfig {
        epochs: 3,
        batch_size: 32,
        base_lr: 2e-3,
        clip_norm: Some(5.0),
        patience: 0,
        seed: 1,
        loss: LossKind::Mixture,
    };
    let mut model = TfdnetModel::new(tiny_model_config(), 3).unwrap();
    let out = train_loop(&mut model, &train, &val, &cfg).unwrap();
    let batches = train.len().div_ceil(32);
    let total = 3 * batches;
    assert_eq!(out.history.len(), 3);
    for (i, rec) in out.history.iter().enumerate() {
        assert_eq!(rec.epoch, i + 1);
        assert!(rec.train_loss.is_finite() && rec.val_loss.is_finite());
        let want = cosine_lr(2e-3, (i + 1) * batches - 1, total).unwrap();
        assert_eq!(rec.lr, want, "epoch {}", i + 1);
    }
}

#[test]
fn zero_learning_rate_freezes_the_model_and_triggers_patience() {
    let values = sinusoid_rows(140, 2, 24.0, 0.05, 12);
    let train = windows_over(&values[..120 * 2], 120, 2, 32, 8);
    let val = windows_over(&values[90 * 2..], 50, 2, 32, 8);
    let model_init = TfdnetModel::new(tiny_model_config(), 13).unwrap();

    // Frozen updates: parameters identical to initialization afterwards, and
    // a constant validation loss means epoch 1 stays the best.
    let cfg = TrainConfig {
        epochs: 4,
        batch_size: 16,
        base_lr: 0.0,
        clip_norm: Some(5.0),
        patience: 0,
        seed: 0,
        loss: LossKind::Mixture,
    };
    let mut frozen = model_init.clone();
    let out = train_loop(&mut frozen, &train, &val, &cfg).unwrap();
    assert_eq!(frozen.snapshot(), model_init.snapshot());
    assert_eq!(out.best_epoch, 1);
    assert!(!out.stopped_early);
    assert_eq!(out.history.len(), 4);
    let v0 = out.history[0].val_loss;
    assert!(out.history.iter().all(|r| r.val_loss == v0));

    // With patience 2 the same stagnation stops after epoch 3.
    let cfg = TrainConfig { patience: 2, epochs: 10, ..cfg };
    let mut stopped = model_init.clone();
    let out = train_loop(&mut stopped, &train, &val, &cfg).unwrap();
    assert!(out.stopped_early);
    assert_eq!(out.history.len(), 3);
    assert_eq!(out.best_epoch, 1);
}

#[test]
fn training_rejects_mismatched_or_empty_window_sets() {
    let values = sinusoid_rows(120, 3, 24.0, 0.05, 13);
    let three_channel = windows_over(&values, 120, 3, 32, 8);
    let mut model = TfdnetModel::new(tiny_model_config(), 1).unwrap();
    let cfg = TrainConfig::default();

    let err = train_loop(&mut model, &three_channel, &three_channel, &cfg).unwrap_err();
    assert!(err.to_string().contains("2 channels"), "{err}");
    assert!(err.to_string().contains("3"), "{err}");

    let two = sinusoid_rows(120, 2, 24.0, 0.05, 14);
    let wrong_span = windows_over(&two, 120, 2, 24, 8);
    let err = train_loop(&mut model, &wrong_span, &wrong_span, &cfg).unwrap_err();
    assert!(err.to_string().contains("32->8") && err.to_string().contains("24->8"), "{err}");

    let empty = WindowSet::from_split(&two, 120, 2, 0..10, 32, 8, 1).unwrap();
    assert!(empty.is_empty());
    let good = windows_over(&two, 120, 2, 32, 8);
    let err = train_loop(&mut model, &empty, &good, &cfg).unwrap_err();
    assert!(matches!(err, Error::EmptyDataset(_)), "{err}");
    let err = train_loop(&mut model, &good, &empty, &cfg).unwrap_err();
    assert!(matches!(err, Error::EmptyDataset(_)), "{err}");
}

#[test]
fn exploding_steps_are_reported_as_divergence() {
    let values = sinusoid_rows(200, 1, 24.0, 0.05, 15);
    let train = windows_over(&values, 200, 1, 16, 4);
    let val = windows_over(&values, 200, 1, 16, 4);
    let mut model = LinearBaseline::new(16, 4, 0);
    let cfg = TrainConfig {
        epochs: 2,
        batch_size: 64,
        base_lr: 1e200,
        clip_norm: None,
        patience: 0,
        seed: 0,
        loss: LossKind::L2,
    };
    let err = train_loop(&mut model, &train, &val, &cfg).unwrap_err();
    assert!(err.to_string().contains("diverged"), "{err}");
}

#[test]
fn the_loop_actually_learns_a_sinusoid() {
    // One noisy channel with a 24-step period; the forecaster must do far
    // better than repeating the last value.
    let rows = 500;
    let values = sinusoid_rows(rows, 1, 24.0, 0.05, 16);
    let train = windows_over(&values[..(350)], 350, 1, 96, 24);
    let val = WindowSet::from_split(&values, rows, 1, 350..430, 96, 24, 1).unwrap();
    let test = WindowSet::from_split(&values, rows, 1, 380..500, 96, 24, 1).unwrap();
    assert!(!train.is_empty() && !val.is_empty() && !test.is_empty());

    let cfg = ModelConfig {
        channels: 1,
        lookback: 96,
        horizon: 24,
        scales: vec![16],
        strides: vec![8],
        seasonal_mode: SeasonalMode::Mk,
        individual_rank: 1,
        kernel_count: 1,
        ma_kernel: 25,
        revin_affine: false,
    };
    let mut model = TfdnetModel::new(cfg, 0).unwrap();
    let tcfg = TrainConfig {
        epochs: 20,
        batch_size: 32,
        base_lr: 3e-3,
        clip_norm: Some(5.0),
        patience: 0,
        seed: 0,
        loss: LossKind::Mixture,
    };
    let out = train_loop(&mut model, &train, &val, &tcfg).unwrap();
    assert_eq!(out.history.len(), 20);

    let report = evaluate(&model, &test, 64).unwrap();
    let naive = persistence_eval(&test).unwrap();
    assert!(report.mse < 0.05, "trained mse {}", report.mse);
    assert!(
        report.mse < 0.5 * naive.mse,
        "trained {} vs persistence {}",
        report.mse,
        naive.mse
    );
}

// ---- evaluation --------------------------------------------------------------------

/// A linear map that copies the window's last sample to every horizon step.
fn persistence_baseline(l: usize, t: usize) -> LinearBaseline {
    let mut model = LinearBaseline::new(l, t, 0);
    model.weight.fill(0.0);
    for row in 0..t {
        model.weight[row * l + (l - 1)] = 1.0;
    }
    model.bias.fill(0.0);
    model
}

#[test]
fn perfect_forecasts_score_zero() {
    let values: Vec<f64> = vec![2.5; 80];
    let windows = windows_over(&values, 80, 1, 8, 4);
    let model = persistence_baseline(8, 4);
    let report = evaluate(&model, &windows, 16).unwrap();
    assert_eq!(report.mse, 0.0);
    assert_eq!(report.mae, 0.0);
    assert_eq!(report.windows, windows.len());
}

#[test]
fn constant_half_step_errors_have_known_metrics() {
    // A ramp of slope 1/2 makes every persistence target miss by 1/2, 1, ...
    // per step; with a single step the error is exactly 1/2 everywhere.
    let values: Vec<f64> = (0..60).map(|i| 0.5 * i as f64).collect();
    let windows = windows_over(&values, 60, 1, 4, 1);
    let model = persistence_baseline(4, 1);
    let report = evaluate(&model, &windows, 16).unwrap();
    assert_eq!(report.mse, 0.25);
    assert_eq!(report.mae, 0.5);
}

#[test]
fn linear_persistence_matches_the_dedicated_baseline_metrics() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let values = randn(&mut rng, 90 * 2);
    let windows = windows_over(&values, 90, 2, 8, 3);
    let model = persistence_baseline(8, 3);
    let via_linear = evaluate(&model, &windows, 32).unwrap();
    let via_rule = persistence_eval(&windows).unwrap();
    assert_eq!(via_linear.mse.to_bits(), via_rule.mse.to_bits());
    assert_eq!(via_linear.mae.to_bits(), via_rule.mae.to_bits());
}

#[test]
fn batch_size_does_not_change_the_metrics() {
    let mut rng = ChaCha8Rng::seed_from_u64(18);
    let values = randn(&mut rng, 70);
    let windows = windows_over(&values, 70, 1, 8, 4);
    assert_eq!(windows.len() % 2, 1, "odd count forces a partial batch");
    let model = LinearBaseline::new(8, 4, 3);
    let all = evaluate(&model, &windows, windows.len()).unwrap();
    let chunked = evaluate(&model, &windows, 2).unwrap();
    assert_eq!(all.mse.to_bits(), chunked.mse.to_bits());
    assert_eq!(all.mae.to_bits(), chunked.mae.to_bits());
    assert_eq!(all.windows, chunked.windows);
}

#[test]
fn per_step_breakdown_is_consistent_with_the_overall_metrics() {
    let mut rng = ChaCha8Rng::seed_from_u64(19);
    let values = randn(&mut rng, 100 * 2);
    let windows = windows_over(&values, 100, 2, 12, 4);
    let model = LinearBaseline::new(12, 4, 5);
    let plain = evaluate(&model, &windows, 16).unwrap();
    let (overall, per_step) = evaluate_by_step(&model, &windows, 16).unwrap();
    assert_eq!(plain.mse.to_bits(), overall.mse.to_bits());
    assert_eq!(plain.mae.to_bits(), overall.mae.to_bits());
    assert_eq!(per_step.len(), 4);
    let mean_mse: f64 = per_step.iter().map(|r| r.mse).sum::<f64>() / 4.0;
    let mean_mae: f64 = per_step.iter().map(|r| r.mae).sum::<f64>() / 4.0;
    assert!((mean_mse - overall.mse).abs() < 1e-12);
    assert!((mean_mae - overall.mae).abs() < 1e-12);

    // The ramp construction makes the per-step error grow with the step.
    let ramp: Vec<f64> = (0..60).map(|i| 0.5 * i as f64).collect();
    let rw = windows_over(&ramp, 60, 1, 4, 3);
    let (_, steps) = evaluate_by_step(&persistence_baseline(4, 3), &rw, 8).unwrap();
    assert_eq!(steps[0].mae, 0.5);
    assert_eq!(steps[1].mae, 1.0);
    assert_eq!(steps[2].mae, 1.5);
}

#[test]
fn the_linear_baseline_computes_an_affine_forecast() {
    // One window, hand-set weights: y = W x + b rowwise.
    let values = vec![1.0, 2.0, 3.0, 4.0, 5.0];
    let windows = windows_over(&values, 5, 1, 3, 2);
    assert_eq!(windows.len(), 1);
    let mut model = LinearBaseline::new(3, 2, 0);
    model.weight = vec![1.0, 0.0, 0.0, 0.0, 0.5, 0.5];
    model.bias = vec![10.0, -1.0];
    let (x, y) = windows.batch(&[0]);
    assert_eq!(x, vec![1.0, 2.0, 3.0]);
    assert_eq!(y, vec![4.0, 5.0]);
    let mut g = Graph::inference();
    let xid = g.constant(x, &[1, 3]).unwrap();
    let (pred, _) = model.predict(&mut g, xid, 1, 1, false).unwrap();
    assert_eq!(g.data(pred), &[11.0, 1.5]);
}

#[test]
fn history_csv_round_trips_through_text() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("history.csv");
    let history = vec![
        tfdnet::train::EpochRecord { epoch: 1, train_loss: 0.5, val_loss: 0.25, lr: 1e-3 },
        tfdnet::train::EpochRecord { epoch: 2, train_loss: 0.125, val_loss: 0.0625, lr: 5e-4 },
    ];
    write_history(&path, &history).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "epoch,train_loss,val_loss,lr");
    assert_eq!(lines.len(), 3);
    let fields: Vec<&str> = lines[1].split(',').collect();
    assert_eq!(fields[0].parse::<usize>().unwrap(), 1);
    assert_eq!(fields[1].parse::<f64>().unwrap(), 0.5);
    assert_eq!(fields[3].parse::<f64>().unwrap(), 1e-3);
}

#[test]
fn evaluation_rejects_empty_or_mismatched_inputs() {
    let values: Vec<f64> = (0..40).map(|i| i as f64).collect();
    let windows = windows_over(&values, 40, 1, 8, 4);
    let model = LinearBaseline::new(8, 4, 0);
    assert!(evaluate(&model, &windows, 0).is_err(), "zero batch size");
    let wrong = LinearBaseline::new(6, 4, 0);
    let err = evaluate(&wrong, &windows, 8).unwrap_err();
    assert!(err.to_string().contains("6->4"), "{err}");
    let empty = WindowSet::from_split(&values, 40, 1, 0..5, 8, 4, 1).unwrap();
    assert!(matches!(evaluate(&model, &empty, 8).unwrap_err(), Error::EmptyDataset(_)));
    let report: EvalReport = persistence_eval(&windows).unwrap();
    assert!(report.mse > 0.0);
}
