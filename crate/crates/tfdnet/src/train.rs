//! Training: the adaptive L1/L2 mixture loss, Adam with cosine learning-rate
//! decay, global-norm gradient clipping, the epoch loop with best-checkpoint
//! tracking and early stopping, and evaluation over a window set.
//!
//! The loop is generic over [`Forecaster`] so the full model and the plain
//! linear baseline train through exactly the same mechanics.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::autodiff::{Graph, TensorId};
use crate::data::WindowSet;
use crate::error::{Error, Result};
use crate::model::{TfdnetModel, INIT_STD};
use std::path::Path;

/// Eager-side numbers reported alongside the mixture loss tensor.
#[derive(Clone, Copy, Debug)]
pub struct MixtureReport {
    pub loss: f64,
    /// Mean of the per-element blend factor `tanh(|error|)`.
    pub mean_alpha: f64,
    /// Mean of the `α·|e|` terms.
    pub l1_component: f64,
    /// Mean of the `(1−α)·e²` terms.
    pub l2_component: f64,
}

/// Elementwise blend of absolute and squared error: with `e = pred − target`
/// and `α = tanh(|e|)`, the loss is `mean(α·|e| + (1−α)·e²)`. Large errors
/// push `α` toward 1 (robust L1 regime), small errors toward 0 (smooth L2
/// regime).
pub fn mixture_loss(g: &mut Graph, pred: TensorId, target: TensorId) -> Result<(TensorId, MixtureReport)> {
    if g.len(pred) != g.len(target) {
        return Err(Error::ShapeMismatch(format!(
            "loss inputs differ in size: prediction has {} values, target has {}",
            g.len(pred),
            g.len(target)
        )));
    }
    let e = g.sub(pred, target)?;
    let a = g.abs(e);
    let alpha = g.tanh(a);
    let l1 = g.mul(alpha, a)?;
    let one_minus = g.affine(alpha, -1.0, 1.0);
    let sq = g.mul(e, e)?;
    let l2 = g.mul(one_minus, sq)?;
    let per_elem = g.add(l1, l2)?;
    let loss = g.mean_all(per_elem)?;
    let count = g.len(alpha).max(1) as f64;
    let mean = |v: &[f64]| v.iter().sum::<f64>() / count;
    let report = MixtureReport {
        loss: g.data(loss)[0],
        mean_alpha: mean(g.data(alpha)),
        l1_component: mean(g.data(l1)),
        l2_component: mean(g.data(l2)),
    };
    Ok((loss, report))
}

/// Which training objective to build.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    /// The adaptive L1/L2 blend of [`mixture_loss`].
    Mixture,
    /// Plain mean squared error.
    L2,
}

/// Scalar training loss of the chosen kind; returns the tensor and its value.
pub fn training_loss(g: &mut Graph, pred: TensorId, target: TensorId, kind: LossKind) -> Result<(TensorId, f64)> {
    match kind {
        LossKind::Mixture => {
            let (loss, report) = mixture_loss(g, pred, target)?;
            Ok((loss, report.loss))
        }
        LossKind::L2 => {
            if g.len(pred) != g.len(target) {
                return Err(Error::ShapeMismatch(format!(
                    "loss inputs differ in size: prediction has {} values, target has {}",
                    g.len(pred),
                    g.len(target)
                )));
            }
            let e = g.sub(pred, target)?;
            let sq = g.mul(e, e)?;
            let loss = g.mean_all(sq)?;
            let value = g.data(loss)[0];
            Ok((loss, value))
        }
    }
}

/// Learning rate at `step` of a cosine decay from `base` to 0 over `total`
/// steps: `base · ½(1 + cos(π·step/total))`.
pub fn cosine_lr(base: f64, step: usize, total: usize) -> Result<f64> {
    if total == 0 {
        return Err(Error::InvalidArgument("cosine schedule needs a positive horizon".into()));
    }
    if step > total {
        return Err(Error::InvalidArgument(format!(
            "cosine schedule stepped past its horizon: step {step} > total {total}"
        )));
    }
    Ok(base * 0.5 * (1.0 + (std::f64::consts::PI * step as f64 / total as f64).cos()))
}

/// Scale all gradients so their joint L2 norm is at most `max_norm`.
/// Returns the pre-clip norm.
pub fn clip_gradients(grads: &mut [Vec<f64>], max_norm: f64) -> f64 {
    let mut sq = 0.0;
    for g in grads.iter() {
        for &v in g {
            sq += v * v;
        }
    }
    let norm = sq.sqrt();
    if norm > max_norm && norm > 0.0 {
        let scale = max_norm / norm;
        for g in grads.iter_mut() {
            for v in g.iter_mut() {
                *v *= scale;
            }
        }
    }
    norm
}

/// Anything the training loop can fit: builds its forward graph over a
/// channel-major batch of window rows and exposes its parameters by index.
pub trait Forecaster {
    fn lookback(&self) -> usize;
    fn horizon(&self) -> usize;
    /// Channel count the forecaster is built for; `None` if it handles any.
    fn expected_channels(&self) -> Option<usize>;
    /// Build the prediction for `x: [rows, lookback]` where
    /// `rows = channels·batch`. Returns the prediction tensor and the graph
    /// ids of every parameter, in the same fixed order as
    /// [`Forecaster::param_sizes`].
    fn predict(
        &self,
        g: &mut Graph,
        x: TensorId,
        batch: usize,
        rows: usize,
        trainable: bool,
    ) -> Result<(TensorId, Vec<TensorId>)>;
    fn param_sizes(&self) -> Vec<usize>;
    fn param_label(&self, index: usize) -> String;
    fn snapshot(&self) -> Vec<Vec<f64>>;
    fn restore(&mut self, snapshot: &[Vec<f64>]);
    /// Call `f(index, data)` for every parameter, in order.
    fn visit_params_mut(&mut self, f: &mut dyn FnMut(usize, &mut [f64]));
}

impl Forecaster for TfdnetModel {
    fn lookback(&self) -> usize {
        self.config.lookback
    }

    fn horizon(&self) -> usize {
        self.config.horizon
    }

    fn expected_channels(&self) -> Option<usize> {
        Some(self.config.channels)
    }

    fn predict(
        &self,
        g: &mut Graph,
        x: TensorId,
        batch: usize,
        _rows: usize,
        trainable: bool,
    ) -> Result<(TensorId, Vec<TensorId>)> {
        let (pred, bound) = self.forward(g, x, batch, trainable)?;
        Ok((pred, bound.params.values().copied().collect()))
    }

    fn param_sizes(&self) -> Vec<usize> {
        self.params.iter().map(|(_, p)| p.data.len()).collect()
    }

    fn param_label(&self, index: usize) -> String {
        self.params
            .iter()
            .nth(index)
            .map(|(name, _)| name.to_string())
            .unwrap_or_else(|| format!("parameter {index}"))
    }

    fn snapshot(&self) -> Vec<Vec<f64>> {
        self.params.iter().map(|(_, p)| p.data.clone()).collect()
    }

    fn restore(&mut self, snapshot: &[Vec<f64>]) {
        for ((_, p), snap) in self.params.iter_mut().zip(snapshot) {
            p.data.copy_from_slice(snap);
        }
    }

    fn visit_params_mut(&mut self, f: &mut dyn FnMut(usize, &mut [f64])) {
        for (i, (_, p)) in self.params.iter_mut().enumerate() {
            f(i, &mut p.data);
        }
    }
}

/// Channel-independent linear map from the look-back window to the horizon:
/// `y = W·x + b` per window row, with no normalization or decomposition.
/// Serves as the simplest trained baseline.
#[derive(Clone, Debug)]
pub struct LinearBaseline {
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
    pub lookback: usize,
    pub horizon: usize,
}

impl LinearBaseline {
    /// Gaussian weight (sigma 0.02), zero bias, like the model's head.
    pub fn new(lookback: usize, horizon: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, INIT_STD).expect("valid sigma");
        LinearBaseline {
            weight: (0..lookback * horizon).map(|_| normal.sample(&mut rng)).collect(),
            bias: vec![0.0; horizon],
            lookback,
            horizon,
        }
    }
}

impl Forecaster for LinearBaseline {
    fn lookback(&self) -> usize {
        self.lookback
    }

    fn horizon(&self) -> usize {
        self.horizon
    }

    fn expected_channels(&self) -> Option<usize> {
        None
    }

    fn predict(
        &self,
        g: &mut Graph,
        x: TensorId,
        _batch: usize,
        rows: usize,
        trainable: bool,
    ) -> Result<(TensorId, Vec<TensorId>)> {
        let w = g.tensor(self.weight.clone(), &[self.horizon, self.lookback], trainable)?;
        let b = g.tensor(self.bias.clone(), &[self.horizon], trainable)?;
        let projected = g.matmul(x, w, rows, self.lookback, self.horizon, true)?;
        let pred = g.add_bias(projected, b)?;
        Ok((pred, vec![w, b]))
    }

    fn param_sizes(&self) -> Vec<usize> {
        vec![self.weight.len(), self.bias.len()]
    }

    fn param_label(&self, index: usize) -> String {
        match index {
            0 => "linear.weight".into(),
            _ => "linear.bias".into(),
        }
    }

    fn snapshot(&self) -> Vec<Vec<f64>> {
        vec![self.weight.clone(), self.bias.clone()]
    }

    fn restore(&mut self, snapshot: &[Vec<f64>]) {
        self.weight.copy_from_slice(&snapshot[0]);
        self.bias.copy_from_slice(&snapshot[1]);
    }

    fn visit_params_mut(&mut self, f: &mut dyn FnMut(usize, &mut [f64])) {
        f(0, &mut self.weight);
        f(1, &mut self.bias);
    }
}

/// Adam optimizer state over an ordered parameter list.
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u32,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    /// Moment buffers sized to the forecaster's parameters.
    pub fn new(model: &dyn Forecaster) -> Self {
        let sizes = model.param_sizes();
        Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: sizes.iter().map(|&s| vec![0.0; s]).collect(),
            v: sizes.iter().map(|&s| vec![0.0; s]).collect(),
        }
    }

    /// One bias-corrected update. `grads` must match the parameter order and
    /// sizes used at construction. A non-finite gradient aborts the step
    /// before touching any parameter.
    pub fn step(&mut self, model: &mut dyn Forecaster, grads: &[Vec<f64>], lr: f64) -> Result<()> {
        if grads.len() != self.m.len() {
            return Err(Error::ShapeMismatch(format!(
                "optimizer expected {} gradient tensors, got {}",
                self.m.len(),
                grads.len()
            )));
        }
        for (i, (g, m)) in grads.iter().zip(&self.m).enumerate() {
            if g.len() != m.len() {
                return Err(Error::ShapeMismatch(format!(
                    "gradient for {} has {} values, parameter has {}",
                    model.param_label(i),
                    g.len(),
                    m.len()
                )));
            }
            if let Some(j) = g.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!(
                    "gradient for {} is not finite at index {j}",
                    model.param_label(i)
                )));
            }
        }
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        let (beta1, beta2, eps) = (self.beta1, self.beta2, self.eps);
        let (ms, vs) = (&mut self.m, &mut self.v);
        model.visit_params_mut(&mut |i, data| {
            let g = &grads[i];
            let (m, v) = (&mut ms[i], &mut vs[i]);
            for j in 0..data.len() {
                let gj = g[j];
                m[j] = beta1 * m[j] + (1.0 - beta1) * gj;
                v[j] = beta2 * v[j] + (1.0 - beta2) * gj * gj;
                let m_hat = m[j] / bc1;
                let v_hat = v[j] / bc2;
                data[j] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        });
        Ok(())
    }
}

/// Knobs for [`train_loop`].
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub base_lr: f64,
    /// Global gradient-norm ceiling; `None` disables clipping.
    pub clip_norm: Option<f64>,
    /// Consecutive non-improving epochs before stopping; 0 disables.
    pub patience: usize,
    /// Seed for batch shuffling.
    pub seed: u64,
    pub loss: LossKind,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 50,
            batch_size: 128,
            base_lr: 5e-4,
            clip_norm: Some(5.0),
            patience: 10,
            seed: 0,
            loss: LossKind::Mixture,
        }
    }
}

/// One row of the training history.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    /// Learning rate of the epoch's final batch.
    pub lr: f64,
}

/// Result of a training run. The model keeps the parameters of the epoch
/// with the lowest validation loss.
#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub stopped_early: bool,
}

fn collect_grads(g: &Graph, ids: &[TensorId], sizes: &[usize]) -> Vec<Vec<f64>> {
    ids.iter()
        .zip(sizes)
        .map(|(&id, &size)| match g.grad(id) {
            Some(grad) => grad.to_vec(),
            None => vec![0.0; size],
        })
        .collect()
}

fn check_channels(model: &dyn Forecaster, windows: &WindowSet) -> Result<()> {
    if let Some(d) = model.expected_channels() {
        if d != windows.channels() {
            return Err(Error::ShapeMismatch(format!(
                "model expects {d} channels, window set has {}",
                windows.channels()
            )));
        }
    }
    if model.lookback() != windows.lookback() || model.horizon() != windows.horizon() {
        return Err(Error::ShapeMismatch(format!(
            "model works on {}->{} windows, window set has {}->{}",
            model.lookback(),
            model.horizon(),
            windows.lookback(),
            windows.horizon()
        )));
    }
    Ok(())
}

/// Mean loss over a window set, in inference mode, chunked by `batch_size`
/// with the final partial chunk included.
fn dataset_loss<M: Forecaster>(model: &M, windows: &WindowSet, batch_size: usize, kind: LossKind) -> Result<f64> {
    let mut total = 0.0;
    let mut count = 0usize;
    let indices: Vec<usize> = (0..windows.len()).collect();
    for chunk in indices.chunks(batch_size) {
        let (x, y) = windows.batch(chunk);
        let rows = windows.channels() * chunk.len();
        let mut g = Graph::inference();
        let xid = g.constant(x, &[rows, windows.lookback()])?;
        let yid = g.constant(y, &[rows, windows.horizon()])?;
        let (pred, _) = model.predict(&mut g, xid, chunk.len(), rows, false)?;
        let (_, value) = training_loss(&mut g, pred, yid, kind)?;
        total += value * chunk.len() as f64;
        count += chunk.len();
    }
    if count == 0 {
        return Err(Error::EmptyDataset("loss over an empty window set".into()));
    }
    Ok(total / count as f64)
}

/// Train `model` on `train`, tracking `val` for checkpoint selection.
///
/// Batches are reshuffled every epoch with a seeded generator, the learning
/// rate follows a cosine decay stepped per batch across the whole run, and
/// training stops early after `patience` epochs without a validation
/// improvement. On return the model holds the best-validation parameters.
/// Given the same seed and data, the run is reproducible bit for bit.
pub fn train_loop<M: Forecaster>(
    model: &mut M,
    train: &WindowSet,
    val: &WindowSet,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    if cfg.epochs == 0 {
        return Err(Error::InvalidArgument("training needs at least one epoch".into()));
    }
    if cfg.batch_size == 0 {
        return Err(Error::InvalidArgument("batch size must be positive".into()));
    }
    if train.is_empty() {
        return Err(Error::EmptyDataset("training split has no windows".into()));
    }
    if val.is_empty() {
        return Err(Error::EmptyDataset("validation split has no windows".into()));
    }
    check_channels(model, train)?;
    check_channels(model, val)?;
    let batches_per_epoch = train.len().div_ceil(cfg.batch_size);
    let total_steps = cfg.epochs * batches_per_epoch;
    let sizes = model.param_sizes();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = Adam::new(model);
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut best_val = f64::INFINITY;
    let mut best_epoch = 0usize;
    let mut best_params = model.snapshot();
    let mut since_best = 0usize;
    let mut stopped_early = false;
    let mut step = 0usize;
    let mut indices: Vec<usize> = (0..train.len()).collect();

    for epoch in 1..=cfg.epochs {
        indices.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut epoch_windows = 0usize;
        let mut last_lr = 0.0;
        for (batch_idx, chunk) in indices.chunks(cfg.batch_size).enumerate() {
            let (x, y) = train.batch(chunk);
            let rows = train.channels() * chunk.len();
            let mut g = Graph::new();
            let xid = g.constant(x, &[rows, train.lookback()])?;
            let yid = g.constant(y, &[rows, train.horizon()])?;
            let (pred, ids) = model.predict(&mut g, xid, chunk.len(), rows, true)?;
            let (loss, value) = training_loss(&mut g, pred, yid, cfg.loss)?;
            if !value.is_finite() {
                return Err(Error::NonFinite(format!(
                    "training diverged: loss is not finite at epoch {epoch}, batch {}",
                    batch_idx + 1
                )));
            }
            g.backward(loss)?;
            let mut grads = collect_grads(&g, &ids, &sizes);
            if let Some(max_norm) = cfg.clip_norm {
                clip_gradients(&mut grads, max_norm);
            }
            let lr = cosine_lr(cfg.base_lr, step, total_steps)?;
            adam.step(model, &grads, lr)?;
            last_lr = lr;
            step += 1;
            epoch_loss += value * chunk.len() as f64;
            epoch_windows += chunk.len();
        }
        let train_loss = epoch_loss / epoch_windows as f64;
        let val_loss = dataset_loss(model, val, cfg.batch_size, cfg.loss)?;
        history.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
            lr: last_lr,
        });
        if val_loss < best_val {
            best_val = val_loss;
            best_epoch = epoch;
            best_params = model.snapshot();
            since_best = 0;
        } else {
            since_best += 1;
            if cfg.patience > 0 && since_best >= cfg.patience {
                stopped_early = true;
                break;
            }
        }
    }
    model.restore(&best_params);
    Ok(TrainOutcome {
        history,
        best_epoch,
        best_val_loss: best_val,
        stopped_early,
    })
}

/// Forecast-quality metrics over a window set.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvalReport {
    pub mse: f64,
    pub mae: f64,
    /// Number of windows evaluated.
    pub windows: usize,
}

/// Mean squared and absolute error of the model over every window,
/// including the final partial batch.
pub fn evaluate<M: Forecaster>(model: &M, windows: &WindowSet, batch_size: usize) -> Result<EvalReport> {
    if batch_size == 0 {
        return Err(Error::InvalidArgument("batch size must be positive".into()));
    }
    if windows.is_empty() {
        return Err(Error::EmptyDataset("evaluation split has no windows".into()));
    }
    check_channels(model, windows)?;
    let mut sq = 0.0;
    let mut ab = 0.0;
    let mut values = 0usize;
    let indices: Vec<usize> = (0..windows.len()).collect();
    for chunk in indices.chunks(batch_size) {
        let (x, y) = windows.batch(chunk);
        let rows = windows.channels() * chunk.len();
        let mut g = Graph::inference();
        let xid = g.constant(x, &[rows, windows.lookback()])?;
        let (pred, _) = model.predict(&mut g, xid, chunk.len(), rows, false)?;
        let p = g.data(pred);
        for (pi, yi) in p.iter().zip(&y) {
            let e = pi - yi;
            sq += e * e;
            ab += e.abs();
        }
        values += y.len();
    }
    Ok(EvalReport {
        mse: sq / values as f64,
        mae: ab / values as f64,
        windows: windows.len(),
    })
}

/// Like [`evaluate`], but additionally splits the error by forecast step:
/// returns the overall report and one report per horizon step 1..=T.
pub fn evaluate_by_step<M: Forecaster>(
    model: &M,
    windows: &WindowSet,
    batch_size: usize,
) -> Result<(EvalReport, Vec<EvalReport>)> {
    if batch_size == 0 {
        return Err(Error::InvalidArgument("batch size must be positive".into()));
    }
    if windows.is_empty() {
        return Err(Error::EmptyDataset("evaluation split has no windows".into()));
    }
    check_channels(model, windows)?;
    let horizon = windows.horizon();
    let mut sq = 0.0;
    let mut ab = 0.0;
    let mut values = 0usize;
    let mut step_sq = vec![0.0; horizon];
    let mut step_ab = vec![0.0; horizon];
    let indices: Vec<usize> = (0..windows.len()).collect();
    for chunk in indices.chunks(batch_size) {
        let (x, y) = windows.batch(chunk);
        let rows = windows.channels() * chunk.len();
        let mut g = Graph::inference();
        let xid = g.constant(x, &[rows, windows.lookback()])?;
        let (pred, _) = model.predict(&mut g, xid, chunk.len(), rows, false)?;
        let p = g.data(pred);
        for r in 0..rows {
            for t in 0..horizon {
                let e = p[r * horizon + t] - y[r * horizon + t];
                sq += e * e;
                ab += e.abs();
                step_sq[t] += e * e;
                step_ab[t] += e.abs();
            }
        }
        values += y.len();
    }
    let rows_total = (values / horizon) as f64;
    let per_step = (0..horizon)
        .map(|t| EvalReport {
            mse: step_sq[t] / rows_total,
            mae: step_ab[t] / rows_total,
            windows: windows.len(),
        })
        .collect();
    let overall = EvalReport {
        mse: sq / values as f64,
        mae: ab / values as f64,
        windows: windows.len(),
    };
    Ok((overall, per_step))
}

/// Metrics of the persistence baseline, which repeats each window's last
/// observed value across the whole horizon.
pub fn persistence_eval(windows: &WindowSet) -> Result<EvalReport> {
    if windows.is_empty() {
        return Err(Error::EmptyDataset("evaluation split has no windows".into()));
    }
    let mut sq = 0.0;
    let mut ab = 0.0;
    let mut values = 0usize;
    let indices: Vec<usize> = (0..windows.len()).collect();
    let lookback = windows.lookback();
    let horizon = windows.horizon();
    for chunk in indices.chunks(256) {
        let (x, y) = windows.batch(chunk);
        let rows = y.len() / horizon;
        for r in 0..rows {
            let last = x[r * lookback + lookback - 1];
            for t in 0..horizon {
                let e = last - y[r * horizon + t];
                sq += e * e;
                ab += e.abs();
            }
        }
        values += y.len();
    }
    Ok(EvalReport {
        mse: sq / values as f64,
        mae: ab / values as f64,
        windows: windows.len(),
    })
}

/// Write the history as CSV with columns `epoch,train_loss,val_loss,lr`.
pub fn write_history(path: &Path, history: &[EpochRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)
        .map_err(|e| Error::io(format!("create {}", path.display()), csv_io(e)))?;
    w.write_record(["epoch", "train_loss", "val_loss", "lr"])
        .map_err(|e| Error::io(format!("write {}", path.display()), csv_io(e)))?;
    for rec in history {
        w.write_record([
            rec.epoch.to_string(),
            rec.train_loss.to_string(),
            rec.val_loss.to_string(),
            rec.lr.to_string(),
        ])
        .map_err(|e| Error::io(format!("write {}", path.display()), csv_io(e)))?;
    }
    w.flush()
        .map_err(|e| Error::io(format!("flush {}", path.display()), e))?;
    Ok(())
}

fn csv_io(e: csv::Error) -> std::io::Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => io,
        other => std::io::Error::other(format!("{other:?}")),
    }
}
