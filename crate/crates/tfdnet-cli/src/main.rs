//! Command-line frontend: train, evaluate, forecast, analyze, spectrogram,
//! and print-default-config verbs over the tfdnet engine.
//!
//! Exit codes: 0 on success, 1 for validation problems (bad flags, bad
//! config values, architecture mismatches, unusable datasets), 2 for
//! runtime failures (I/O, unreadable files, corrupt checkpoints, numeric
//! divergence).

use clap::{Parser, Subcommand};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use tfdnet::autodiff::Graph;
use tfdnet::checkpoint;
use tfdnet::data::{self, RawDataset, SplitRatio, WindowSet};
use tfdnet::model::{ModelConfig, SeasonalMode, TfdnetModel};
use tfdnet::signal::{self, StftConfig};
use tfdnet::train::{self, LossKind, TrainConfig};
use tfdnet::{Error, Result};

#[derive(Parser)]
#[command(name = "tfdnet", version, about = "Long-term time-series forecasting with time-frequency kernels")]
struct Cli {
    /// Run configuration JSON; omitted fields use defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Seed for initialization and batch shuffling.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// Output directory for produced files.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,

    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train a model and write model.ckpt and history.csv.
    Train {
        /// Dataset CSV with a leading date column.
        #[arg(long)]
        data: PathBuf,
    },
    /// Report test-split MSE and MAE of a trained model.
    Evaluate {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Predict the horizon following the end of a series.
    Forecast {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Measure cross-channel correlation of the raw, seasonal, and trend
    /// components, write the matrices, and recommend a seasonal mode.
    Analyze {
        #[arg(long)]
        data: PathBuf,
    },
    /// Export spectrogram magnitudes at each configured scale.
    Spectrogram {
        #[arg(long)]
        data: PathBuf,
        /// Channel to export; omitted exports every channel.
        #[arg(long)]
        channel: Option<usize>,
    },
    /// Print the default run configuration as JSON.
    PrintDefaultConfig,
}

/// User-facing run settings. Unset counts fall back to defaults chosen by
/// dataset size: more than 30 channels selects the wide-dataset profile
/// (batch 32, 100 epochs, mixer rank 64, 16 kernels) and anything smaller
/// the narrow one (batch 128, 50 epochs, full-rank mixer, 4 kernels).
#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RunConfig {
    lookback: usize,
    horizon: usize,
    scales: Vec<usize>,
    strides: Vec<usize>,
    /// Seasonal kernel layout: "IK" or "MK".
    seasonal_mode: String,
    /// Channel-mixer rank; null selects the size-dependent default.
    individual_rank: Option<usize>,
    /// Shared-kernel bank size; null selects the size-dependent default.
    kernel_count: Option<usize>,
    ma_kernel: usize,
    revin_affine: bool,
    /// Training epochs; null selects the size-dependent default.
    epochs: Option<usize>,
    /// Batch size; null selects the size-dependent default.
    batch_size: Option<usize>,
    lr: f64,
    /// Global gradient-norm ceiling; null disables clipping.
    clip_norm: Option<f64>,
    patience: usize,
    /// Training objective: "mixture" or "l2".
    loss: String,
    window_stride: usize,
    /// Chronological split; null uses the catalog entry or 7:1:2.
    split: Option<SplitRatio>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            lookback: 336,
            horizon: 96,
            scales: vec![8, 16, 32],
            strides: vec![4, 8, 16],
            seasonal_mode: "MK".into(),
            individual_rank: None,
            kernel_count: None,
            ma_kernel: 25,
            revin_affine: false,
            epochs: None,
            batch_size: None,
            lr: 5e-4,
            clip_norm: Some(5.0),
            patience: 10,
            loss: "mixture".into(),
            window_stride: 1,
            split: None,
        }
    }
}

impl RunConfig {
    fn load(path: Option<&Path>) -> Result<RunConfig> {
        match path {
            None => Ok(RunConfig::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| Error::io(format!("read config {}", p.display()), e))?;
                serde_json::from_str(&text)
                    .map_err(|e| Error::Config(format!("{}: {e}", p.display())))
            }
        }
    }

    fn seasonal_mode(&self) -> Result<SeasonalMode> {
        match self.seasonal_mode.as_str() {
            "IK" => Ok(SeasonalMode::Ik),
            "MK" => Ok(SeasonalMode::Mk),
            other => Err(Error::Config(format!(
                "unknown seasonal_mode '{other}': expected IK or MK"
            ))),
        }
    }

    fn loss_kind(&self) -> Result<LossKind> {
        match self.loss.as_str() {
            "mixture" => Ok(LossKind::Mixture),
            "l2" => Ok(LossKind::L2),
            other => Err(Error::Config(format!(
                "unknown loss '{other}': expected mixture or l2"
            ))),
        }
    }

    fn model_config(&self, channels: usize) -> Result<ModelConfig> {
        let large = channels > 30;
        let cfg = ModelConfig {
            channels,
            lookback: self.lookback,
            horizon: self.horizon,
            scales: self.scales.clone(),
            strides: self.strides.clone(),
            seasonal_mode: self.seasonal_mode()?,
            individual_rank: self
                .individual_rank
                .unwrap_or(if large { 64.min(channels) } else { channels }),
            kernel_count: self.kernel_count.unwrap_or(if large { 16 } else { 4 }),
            ma_kernel: self.ma_kernel,
            revin_affine: self.revin_affine,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn train_config(&self, channels: usize, seed: u64) -> Result<TrainConfig> {
        let large = channels > 30;
        let cfg = TrainConfig {
            epochs: self.epochs.unwrap_or(if large { 100 } else { 50 }),
            batch_size: self.batch_size.unwrap_or(if large { 32 } else { 128 }),
            base_lr: self.lr,
            clip_norm: self.clip_norm,
            patience: self.patience,
            seed,
            loss: self.loss_kind()?,
        };
        if cfg.epochs == 0 {
            return Err(Error::Config("epochs must be positive".into()));
        }
        if cfg.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if !(cfg.base_lr.is_finite() && cfg.base_lr > 0.0) {
            return Err(Error::Config(format!("lr must be positive, got {}", cfg.base_lr)));
        }
        if self.window_stride == 0 {
            return Err(Error::Config("window_stride must be positive".into()));
        }
        Ok(cfg)
    }

    fn split_ratio(&self, dataset: &str) -> SplitRatio {
        self.split.unwrap_or_else(|| {
            data::catalog_lookup(dataset)
                .map(|d| d.ratio)
                .unwrap_or(SplitRatio::DEFAULT)
        })
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

/// 1 for validation problems, 2 for runtime failures.
fn exit_code(e: &Error) -> u8 {
    match e {
        Error::InvalidArgument(_)
        | Error::ShapeMismatch(_)
        | Error::Config(_)
        | Error::EmptyDataset(_)
        | Error::ArchitectureMismatch { .. } => 1,
        Error::NonFinite(_)
        | Error::Parse { .. }
        | Error::BadMagic { .. }
        | Error::CorruptCheckpoint { .. }
        | Error::Io { .. }
        | Error::Json { .. } => 2,
    }
}

fn run(cli: Cli) -> Result<()> {
    let run_cfg = RunConfig::load(cli.config.as_deref())?;
    match &cli.cmd {
        Cmd::Train { data } => cmd_train(&run_cfg, data, cli.seed, &cli.out),
        Cmd::Evaluate { data, checkpoint } => cmd_evaluate(&run_cfg, data, checkpoint, &cli.out),
        Cmd::Forecast { data, checkpoint } => cmd_forecast(data, checkpoint, &cli.out),
        Cmd::Analyze { data } => cmd_analyze(&run_cfg, data, &cli.out),
        Cmd::Spectrogram { data, channel } => cmd_spectrogram(&run_cfg, data, *channel, &cli.out),
        Cmd::PrintDefaultConfig => {
            let text = serde_json::to_string_pretty(&RunConfig::default())
                .map_err(|e| Error::Config(format!("encode default config: {e}")))?;
            println!("{text}");
            Ok(())
        }
    }
}

fn load_dataset(path: &Path) -> Result<RawDataset> {
    let ds = data::load_csv(path)?;
    for w in &ds.warnings {
        eprintln!("warning: {w}");
    }
    Ok(ds)
}

fn ensure_out_dir(out: &Path) -> Result<()> {
    std::fs::create_dir_all(out).map_err(|e| Error::io(format!("create {}", out.display()), e))
}

/// Split and standardize in place; returns the split ranges and the fitted
/// statistics.
fn prepare(
    ds: &mut RawDataset,
    ratio: SplitRatio,
) -> Result<(data::Splits, data::Standardization)> {
    let splits = data::chronological_split(ds.rows, ratio)?;
    let stats = data::standardize(&mut ds.values, ds.rows, ds.channels, splits.train.end)?;
    Ok((splits, stats))
}

fn window_set(ds: &RawDataset, range: std::ops::Range<usize>, cfg: &ModelConfig, stride: usize) -> Result<WindowSet> {
    WindowSet::from_split(
        &ds.values,
        ds.rows,
        ds.channels,
        range,
        cfg.lookback,
        cfg.horizon,
        stride,
    )
}

#[derive(serde::Serialize)]
struct SplitMetrics {
    mse: f64,
    mae: f64,
    windows: usize,
}

impl From<train::EvalReport> for SplitMetrics {
    fn from(r: train::EvalReport) -> Self {
        SplitMetrics {
            mse: r.mse,
            mae: r.mae,
            windows: r.windows,
        }
    }
}

#[derive(serde::Serialize)]
struct SummaryOut {
    dataset: String,
    best_epoch: usize,
    best_val_loss: f64,
    epochs_run: usize,
    stopped_early: bool,
    val: SplitMetrics,
    test: SplitMetrics,
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let body = serde_json::to_string_pretty(value)
        .map_err(|e| Error::json(format!("encode {}", path.display()), e))?;
    std::fs::write(path, body + "\n").map_err(|e| Error::io(format!("write {}", path.display()), e))
}

fn cmd_train(run_cfg: &RunConfig, data_path: &Path, seed: u64, out: &Path) -> Result<()> {
    let mut ds = load_dataset(data_path)?;
    let model_cfg = run_cfg.model_config(ds.channels)?;
    let train_cfg = run_cfg.train_config(ds.channels, seed)?;
    let ratio = run_cfg.split_ratio(&ds.name);
    let (splits, stats) = prepare(&mut ds, ratio)?;
    let train_set = window_set(&ds, splits.train.clone(), &model_cfg, run_cfg.window_stride)?;
    let val_set = window_set(&ds, splits.val.clone(), &model_cfg, run_cfg.window_stride)?;
    let test_set = window_set(&ds, splits.test.clone(), &model_cfg, run_cfg.window_stride)?;
    println!(
        "dataset: {} ({} rows x {} channels)",
        ds.name, ds.rows, ds.channels
    );
    println!(
        "train windows: {}, val windows: {}, test windows: {}",
        train_set.len(),
        val_set.len(),
        test_set.len()
    );
    let mut model = TfdnetModel::new(model_cfg, seed)?;
    let outcome = train::train_loop(&mut model, &train_set, &val_set, &train_cfg)?;
    for rec in &outcome.history {
        println!(
            "epoch {}: train {} val {} lr {}",
            rec.epoch, rec.train_loss, rec.val_loss, rec.lr
        );
    }
    if outcome.stopped_early {
        println!("early stop after epoch {}", outcome.history.last().map_or(0, |r| r.epoch));
    }
    println!("best epoch: {} (validation loss {})", outcome.best_epoch, outcome.best_val_loss);
    let val_report = train::evaluate(&model, &val_set, train_cfg.batch_size)?;
    let test_report = train::evaluate(&model, &test_set, train_cfg.batch_size)?;
    println!("val mse: {} mae: {}", val_report.mse, val_report.mae);
    println!("test mse: {} mae: {}", test_report.mse, test_report.mae);
    ensure_out_dir(out)?;
    let ckpt_path = out.join("model.ckpt");
    let extras = vec![
        ("norm.mean".to_string(), stats.mean.clone()),
        ("norm.std".to_string(), stats.std.clone()),
    ];
    checkpoint::save(&ckpt_path, &model.config, &model.params, &extras)?;
    let history_path = out.join("history.csv");
    train::write_history(&history_path, &outcome.history)?;
    let summary_path = out.join("summary.json");
    write_json(
        &summary_path,
        &SummaryOut {
            dataset: ds.name.clone(),
            best_epoch: outcome.best_epoch,
            best_val_loss: outcome.best_val_loss,
            epochs_run: outcome.history.len(),
            stopped_early: outcome.stopped_early,
            val: val_report.into(),
            test: test_report.into(),
        },
    )?;
    println!("checkpoint: {}", ckpt_path.display());
    println!("history: {}", history_path.display());
    println!("summary: {}", summary_path.display());
    Ok(())
}

/// Load a checkpoint plus its stored normalization statistics.
fn load_checkpoint(path: &Path) -> Result<(TfdnetModel, data::Standardization)> {
    let (model, extras) = checkpoint::load_model(path)?;
    let mean = extras.get("norm.mean").cloned().ok_or_else(|| Error::CorruptCheckpoint {
        path: path.to_path_buf(),
        message: "missing normalization statistics (norm.mean)".into(),
    })?;
    let std = extras.get("norm.std").cloned().ok_or_else(|| Error::CorruptCheckpoint {
        path: path.to_path_buf(),
        message: "missing normalization statistics (norm.std)".into(),
    })?;
    if mean.len() != model.config.channels || std.len() != model.config.channels {
        return Err(Error::CorruptCheckpoint {
            path: path.to_path_buf(),
            message: format!(
                "normalization statistics cover {} channels, model has {}",
                mean.len(),
                model.config.channels
            ),
        });
    }
    Ok((model, data::Standardization { mean, std }))
}

fn check_channels(model: &TfdnetModel, ds: &RawDataset) -> Result<()> {
    if ds.channels != model.config.channels {
        return Err(Error::ArchitectureMismatch {
            expected: format!("{} channels", model.config.channels),
            found: format!("{} channels in {}", ds.channels, ds.name),
        });
    }
    Ok(())
}

#[derive(serde::Serialize)]
struct StepMetrics {
    step: usize,
    mse: f64,
    mae: f64,
}

#[derive(serde::Serialize)]
struct MetricsOut {
    mse: f64,
    mae: f64,
    windows: usize,
    per_step: Vec<StepMetrics>,
}

fn cmd_evaluate(run_cfg: &RunConfig, data_path: &Path, ckpt_path: &Path, out: &Path) -> Result<()> {
    let (model, stats) = load_checkpoint(ckpt_path)?;
    let mut ds = load_dataset(data_path)?;
    check_channels(&model, &ds)?;
    let splits = data::chronological_split(ds.rows, run_cfg.split_ratio(&ds.name))?;
    stats.apply(&mut ds.values, ds.channels);
    if run_cfg.window_stride == 0 {
        return Err(Error::Config("window_stride must be positive".into()));
    }
    let test_set = window_set(&ds, splits.test.clone(), &model.config, run_cfg.window_stride)?;
    let batch = run_cfg
        .batch_size
        .unwrap_or(if ds.channels > 30 { 32 } else { 128 });
    let (report, per_step) = train::evaluate_by_step(&model, &test_set, batch)?;
    println!("dataset: {} ({} rows x {} channels)", ds.name, ds.rows, ds.channels);
    println!("test windows: {}", report.windows);
    println!("step mse mae");
    for (t, step) in per_step.iter().enumerate() {
        println!("{} {} {}", t + 1, step.mse, step.mae);
    }
    println!("mse: {}", report.mse);
    println!("mae: {}", report.mae);
    ensure_out_dir(out)?;
    let metrics_path = out.join("metrics.json");
    write_json(
        &metrics_path,
        &MetricsOut {
            mse: report.mse,
            mae: report.mae,
            windows: report.windows,
            per_step: per_step
                .iter()
                .enumerate()
                .map(|(t, s)| StepMetrics {
                    step: t + 1,
                    mse: s.mse,
                    mae: s.mae,
                })
                .collect(),
        },
    )?;
    println!("metrics: {}", metrics_path.display());
    Ok(())
}

fn cmd_forecast(data_path: &Path, ckpt_path: &Path, out: &Path) -> Result<()> {
    let (model, stats) = load_checkpoint(ckpt_path)?;
    let mut ds = load_dataset(data_path)?;
    check_channels(&model, &ds)?;
    let (lookback, horizon, channels) = (model.config.lookback, model.config.horizon, model.config.channels);
    if ds.rows < lookback {
        return Err(Error::InvalidArgument(format!(
            "forecast needs at least {lookback} rows of history, {} has {}",
            ds.name, ds.rows
        )));
    }
    stats.apply(&mut ds.values, ds.channels);
    let first = ds.rows - lookback;
    let mut x = vec![0.0; channels * lookback];
    for ch in 0..channels {
        for t in 0..lookback {
            x[ch * lookback + t] = ds.values[(first + t) * channels + ch];
        }
    }
    let mut g = Graph::inference();
    let xid = g.constant(x, &[channels, lookback])?;
    let (pred, _) = model.forward(&mut g, xid, 1, false)?;
    let pred = g.data(pred).to_vec();
    ensure_out_dir(out)?;
    let path = out.join("forecast.csv");
    let mut w = csv::Writer::from_path(&path)
        .map_err(|e| Error::io(format!("create {}", path.display()), std::io::Error::other(e)))?;
    w.write_record(&ds.channel_names)
        .map_err(|e| Error::io(format!("write {}", path.display()), std::io::Error::other(e)))?;
    for t in 0..horizon {
        let row: Vec<String> = (0..channels)
            .map(|ch| (pred[ch * horizon + t] * stats.std[ch] + stats.mean[ch]).to_string())
            .collect();
        w.write_record(&row)
            .map_err(|e| Error::io(format!("write {}", path.display()), std::io::Error::other(e)))?;
    }
    w.flush()
        .map_err(|e| Error::io(format!("flush {}", path.display()), e))?;
    println!("forecast: {} ({} steps x {} channels)", path.display(), horizon, channels);
    Ok(())
}

/// Write a channel-by-channel matrix as CSV with labeled rows and columns.
fn write_matrix_csv(path: &Path, names: &[String], matrix: &[f64], d: usize) -> Result<()> {
    let io_err = |e: csv::Error| std::io::Error::other(e);
    let mut w = csv::Writer::from_path(path)
        .map_err(|e| Error::io(format!("create {}", path.display()), io_err(e)))?;
    let mut header = Vec::with_capacity(d + 1);
    header.push("channel".to_string());
    header.extend_from_slice(names);
    w.write_record(&header)
        .map_err(|e| Error::io(format!("write {}", path.display()), io_err(e)))?;
    for i in 0..d {
        let mut row = Vec::with_capacity(d + 1);
        row.push(names[i].clone());
        row.extend(matrix[i * d..(i + 1) * d].iter().map(|v| v.to_string()));
        w.write_record(&row)
            .map_err(|e| Error::io(format!("write {}", path.display()), io_err(e)))?;
    }
    w.flush().map_err(|e| Error::io(format!("flush {}", path.display()), e))?;
    Ok(())
}

fn cmd_analyze(run_cfg: &RunConfig, data_path: &Path, out: &Path) -> Result<()> {
    let ds = load_dataset(data_path)?;
    if ds.channels < 2 {
        return Err(Error::InvalidArgument(format!(
            "analysis requires D >= 2 channels, got {}",
            ds.channels
        )));
    }
    let mut kernel = run_cfg.ma_kernel.min(2 * ds.rows - 1);
    if kernel % 2 == 0 {
        kernel -= 1;
    }
    let analysis = data::correlation_analysis(&ds.values, ds.rows, ds.channels, kernel)?;
    let components = [
        ("raw", &analysis.raw),
        ("seasonal", &analysis.seasonal),
        ("trend", &analysis.trend),
    ];
    for (label, report) in &components {
        for &c in &report.excluded {
            eprintln!(
                "warning: channel {c} ({}) has no spread in the {label} component and was excluded",
                ds.channel_names.get(c).map(String::as_str).unwrap_or("?")
            );
        }
    }
    ensure_out_dir(out)?;
    for (label, report) in &components {
        let path = out.join(format!("correlation_{label}.csv"));
        write_matrix_csv(&path, &ds.channel_names, &report.matrix, ds.channels)?;
        println!("wrote {}", path.display());
    }
    println!("macc_raw: {}", analysis.raw.macc);
    println!("macc_seasonal: {}", analysis.seasonal.macc);
    println!("macc_trend: {}", analysis.trend.macc);
    let mode = if analysis.seasonal.macc >= analysis.raw.macc { "MK" } else { "IK" };
    println!("recommended seasonal mode: {mode}");
    Ok(())
}

fn cmd_spectrogram(run_cfg: &RunConfig, data_path: &Path, channel: Option<usize>, out: &Path) -> Result<()> {
    let ds = load_dataset(data_path)?;
    if run_cfg.scales.len() != run_cfg.strides.len() {
        return Err(Error::Config(format!(
            "scales and strides must have equal lengths: scales has {} entries, strides has {}",
            run_cfg.scales.len(),
            run_cfg.strides.len()
        )));
    }
    if let Some(c) = channel {
        if c >= ds.channels {
            return Err(Error::InvalidArgument(format!(
                "channel {c} out of range: {} has {} channels",
                ds.name, ds.channels
            )));
        }
    }
    // Channel-major copy of the full series.
    let mut series = vec![0.0; ds.channels * ds.rows];
    for ch in 0..ds.channels {
        for r in 0..ds.rows {
            series[ch * ds.rows + r] = ds.values[r * ds.channels + ch];
        }
    }
    ensure_out_dir(out)?;
    for (&s, &l) in run_cfg.scales.iter().zip(&run_cfg.strides) {
        let cfg = StftConfig::new(s, l).map_err(|e| Error::Config(e.to_string()))?;
        if ds.rows < s {
            return Err(Error::Config(format!(
                "window length {s} exceeds the {} rows of {}",
                ds.rows, ds.name
            )));
        }
        match channel {
            Some(c) => {
                let one = &series[c * ds.rows..(c + 1) * ds.rows];
                let (mags, m, n) = signal::spectrogram_magnitudes(one, ds.rows, cfg)?;
                let path = out.join(format!("spectrogram_s{s}_ch{c}.csv"));
                signal::write_spectrogram_csv(&path, &mags, m, n)?;
                println!("wrote {}", path.display());
            }
            None => {
                let base = out.join(format!("spectrogram_s{s}"));
                let files = signal::spectrogram_export(&series, ds.channels, ds.rows, cfg, &base)?;
                for f in files {
                    println!("wrote {}", f.display());
                }
            }
        }
    }
    Ok(())
}
