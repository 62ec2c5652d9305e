//! The TFDNet model: learnable complex kernels per frequency bin, the
//! trend/seasonal time-frequency blocks, the frequency-axis feed-forward
//! layer, single-scale encoders, multi-scale fusion, and the full forward
//! pass.
//!
//! Batched tensors are laid out channel-major: a batch of `B` windows with
//! `D` channels becomes `R = D·B` rows, row `r = d·B + b`. Channel-shared
//! blocks are row-independent, and per-channel kernels see their rows as
//! contiguous groups.

use indexmap::IndexMap;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::autodiff::{dgemm, BackwardOp, ComplexPair, GradCtx, Graph, TensorId};
use crate::error::{Error, Result};
use crate::preprocess;
use crate::signal::{self, StftConfig, StftPlan};
use std::sync::Arc;

/// Standard deviation of the Gaussian parameter initialization.
pub const INIT_STD: f64 = 0.02;

/// How the seasonal branch parameterizes its kernels.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum SeasonalMode {
    /// Per-channel kernels factored through a low-rank channel mixer.
    #[serde(rename = "IK")]
    Ik,
    /// A bank of shared kernels combined by per-channel sigmoid gates.
    #[serde(rename = "MK")]
    Mk,
}

impl std::fmt::Display for SeasonalMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SeasonalMode::Ik => "IK",
            SeasonalMode::Mk => "MK",
        })
    }
}

/// Complete architecture description.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ModelConfig {
    /// Number of input channels `D`.
    pub channels: usize,
    /// Look-back window length `L`.
    pub lookback: usize,
    /// Forecast horizon `T`.
    pub horizon: usize,
    /// STFT window length per scale.
    pub scales: Vec<usize>,
    /// STFT hop per scale, paired index-wise with `scales`.
    pub strides: Vec<usize>,
    pub seasonal_mode: SeasonalMode,
    /// Rank `I` of the channel mixer (IK mode).
    pub individual_rank: usize,
    /// Number of shared kernels `k` (MK mode).
    pub kernel_count: usize,
    /// Moving-average window of the seasonal-trend decomposition.
    pub ma_kernel: usize,
    /// Learn per-channel scale/shift on the normalized input.
    pub revin_affine: bool,
}

impl ModelConfig {
    /// Defaults for a dataset with `channels` channels. Channel-heavy
    /// datasets get the larger mixer rank and kernel bank.
    pub fn recommended(channels: usize, lookback: usize, horizon: usize) -> Self {
        let large = channels > 30;
        ModelConfig {
            channels,
            lookback,
            horizon,
            scales: vec![8, 16, 32],
            strides: vec![4, 8, 16],
            seasonal_mode: SeasonalMode::Mk,
            individual_rank: if large { 64.min(channels) } else { channels },
            kernel_count: if large { 16 } else { 4 },
            ma_kernel: 25,
            revin_affine: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.channels == 0 {
            return Err(Error::Config("channels must be at least 1".into()));
        }
        if self.horizon == 0 {
            return Err(Error::Config("horizon must be at least 1".into()));
        }
        if self.lookback < 2 {
            return Err(Error::Config("lookback must be at least 2".into()));
        }
        if self.scales.is_empty() {
            return Err(Error::Config("scales must list at least one window length".into()));
        }
        if self.scales.len() != self.strides.len() {
            return Err(Error::Config(format!(
                "scales and strides must have equal lengths: scales has {} entries, strides has {}",
                self.scales.len(),
                self.strides.len()
            )));
        }
        for (i, (&s, &l)) in self.scales.iter().zip(&self.strides).enumerate() {
            StftConfig::new(s, l).map_err(|e| Error::Config(format!("scale {i}: {e}")))?;
            if l > s {
                return Err(Error::Config(format!(
                    "scale {i}: stride {l} exceeds window length {s}"
                )));
            }
            if self.lookback < s {
                return Err(Error::Config(format!(
                    "scale {i}: window length {s} exceeds lookback {}",
                    self.lookback
                )));
            }
        }
        if self.ma_kernel % 2 == 0 || self.ma_kernel == 0 {
            return Err(Error::Config(format!(
                "ma_kernel must be odd and positive, got {}",
                self.ma_kernel
            )));
        }
        if self.ma_kernel > 2 * self.lookback - 1 {
            return Err(Error::Config(format!(
                "ma_kernel {} exceeds the maximum 2L-1 = {} for lookback {}",
                self.ma_kernel,
                2 * self.lookback - 1,
                self.lookback
            )));
        }
        match self.seasonal_mode {
            SeasonalMode::Ik => {
                if self.individual_rank == 0 || self.individual_rank > self.channels {
                    return Err(Error::Config(format!(
                        "IK mode requires 1 <= individual_rank <= channels ({}), got {}",
                        self.channels, self.individual_rank
                    )));
                }
            }
            SeasonalMode::Mk => {
                if self.kernel_count == 0 {
                    return Err(Error::Config("MK mode requires kernel_count >= 1".into()));
                }
            }
        }
        Ok(())
    }

    /// One-line architecture summary used in mismatch diagnostics.
    pub fn summary(&self) -> String {
        format!(
            "{} channels, lookback {}, horizon {}, scales {:?}, strides {:?}, mode {}, rank {}, kernels {}, ma_kernel {}, revin_affine {}",
            self.channels,
            self.lookback,
            self.horizon,
            self.scales,
            self.strides,
            self.seasonal_mode,
            self.individual_rank,
            self.kernel_count,
            self.ma_kernel,
            self.revin_affine
        )
    }
}

// ---- parameters -----------------------------------------------------------------

/// A named trainable tensor's storage.
#[derive(Clone, Debug, PartialEq)]
pub struct Param {
    pub data: Vec<f64>,
    pub shape: Vec<usize>,
}

/// Ordered collection of named parameters; iteration order is insertion
/// order, which fixes the RNG draw order and the checkpoint layout.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamSet {
    map: IndexMap<String, Param>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, data: Vec<f64>, shape: Vec<usize>) {
        debug_assert_eq!(data.len(), shape.iter().product::<usize>());
        self.map.insert(name.into(), Param { data, shape });
    }

    pub fn get(&self, name: &str) -> Option<&Param> {
        self.map.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Param> {
        self.map.get_mut(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Param)> {
        self.map.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Param)> {
        self.map.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    /// Total number of scalar values across all parameters.
    pub fn value_count(&self) -> usize {
        self.map.values().map(|p| p.data.len()).sum()
    }
}

enum InitKind {
    /// Independent Gaussian draws, sigma [`INIT_STD`].
    Noise,
    /// Complex-kernel real part: identity per frequency bin plus noise.
    IdentityBinsPlusNoise { n: usize },
    /// Exact identity matrix (no noise).
    Identity { n: usize },
    Zeros,
    Constant(f64),
}

struct ParamSpec {
    name: String,
    shape: Vec<usize>,
    init: InitKind,
}

fn kernel_specs(prefix: &str, m: usize, n: usize, specs: &mut Vec<ParamSpec>) {
    specs.push(ParamSpec {
        name: format!("{prefix}.re"),
        shape: vec![m, n, n],
        init: InitKind::IdentityBinsPlusNoise { n },
    });
    specs.push(ParamSpec {
        name: format!("{prefix}.im"),
        shape: vec![m, n, n],
        init: InitKind::Noise,
    });
}

fn complex_noise_specs(prefix: &str, shape: Vec<usize>, specs: &mut Vec<ParamSpec>) {
    specs.push(ParamSpec {
        name: format!("{prefix}.re"),
        shape: shape.clone(),
        init: InitKind::Noise,
    });
    specs.push(ParamSpec {
        name: format!("{prefix}.im"),
        shape,
        init: InitKind::Noise,
    });
}

fn param_specs(cfg: &ModelConfig) -> Vec<ParamSpec> {
    let mut specs = Vec::new();
    let d = cfg.channels;
    let rank = cfg.individual_rank;
    for (si, (&s, &l)) in cfg.scales.iter().zip(&cfg.strides).enumerate() {
        let stft = StftConfig { window: s, stride: l };
        let (m, n) = (stft.bins(), stft.frames(cfg.lookback));
        match cfg.seasonal_mode {
            SeasonalMode::Ik => {
                if rank == d {
                    specs.push(ParamSpec {
                        name: format!("seasonal.s{si}.w1.re"),
                        shape: vec![d, rank],
                        init: InitKind::Identity { n: d },
                    });
                    specs.push(ParamSpec {
                        name: format!("seasonal.s{si}.w1.im"),
                        shape: vec![d, rank],
                        init: InitKind::Zeros,
                    });
                } else {
                    complex_noise_specs(&format!("seasonal.s{si}.w1"), vec![d, rank], &mut specs);
                }
                complex_noise_specs(&format!("seasonal.s{si}.w2"), vec![rank, m, n, n], &mut specs);
            }
            SeasonalMode::Mk => {
                for j in 0..cfg.kernel_count {
                    kernel_specs(&format!("seasonal.s{si}.kernel{j}"), m, n, &mut specs);
                    complex_noise_specs(&format!("seasonal.s{si}.gate{j}"), vec![m, n], &mut specs);
                }
            }
        }
        complex_noise_specs(&format!("seasonal.s{si}.ffn.w"), vec![m, m], &mut specs);
        complex_noise_specs(&format!("seasonal.s{si}.ffn.b"), vec![m], &mut specs);
    }
    for (si, (&s, &l)) in cfg.scales.iter().zip(&cfg.strides).enumerate() {
        let stft = StftConfig { window: s, stride: l };
        let (m, n) = (stft.bins(), stft.frames(cfg.lookback));
        kernel_specs(&format!("trend.s{si}.kernel"), m, n, &mut specs);
        complex_noise_specs(&format!("trend.s{si}.ffn.w"), vec![m, m], &mut specs);
        complex_noise_specs(&format!("trend.s{si}.ffn.b"), vec![m], &mut specs);
    }
    let num_scales = cfg.scales.len();
    let fuse_init = 1.0 / num_scales as f64;
    specs.push(ParamSpec {
        name: "seasonal.fuse".into(),
        shape: vec![num_scales],
        init: InitKind::Constant(fuse_init),
    });
    specs.push(ParamSpec {
        name: "trend.fuse".into(),
        shape: vec![num_scales],
        init: InitKind::Constant(fuse_init),
    });
    specs.push(ParamSpec {
        name: "head.weight".into(),
        shape: vec![cfg.horizon, cfg.lookback],
        init: InitKind::Noise,
    });
    specs.push(ParamSpec {
        name: "head.bias".into(),
        shape: vec![cfg.horizon],
        init: InitKind::Zeros,
    });
    if cfg.revin_affine {
        specs.push(ParamSpec {
            name: "revin.weight".into(),
            shape: vec![d],
            init: InitKind::Constant(1.0),
        });
        specs.push(ParamSpec {
            name: "revin.bias".into(),
            shape: vec![d],
            init: InitKind::Zeros,
        });
    }
    specs
}

// ---- model ---------------------------------------------------------------------

/// A TFDNet instance: architecture plus parameter storage.
#[derive(Clone, Debug)]
pub struct TfdnetModel {
    pub config: ModelConfig,
    pub params: ParamSet,
}

impl TfdnetModel {
    /// Create a model with freshly initialized parameters. Kernels start at
    /// identity plus complex Gaussian noise so the initial network is close
    /// to a pass-through; everything else starts at small Gaussian draws.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, INIT_STD).expect("valid sigma");
        let mut params = ParamSet::new();
        for spec in param_specs(&config) {
            let count: usize = spec.shape.iter().product();
            let data = match spec.init {
                InitKind::Noise => (0..count).map(|_| normal.sample(&mut rng)).collect(),
                InitKind::IdentityBinsPlusNoise { n } => {
                    let mut v = Vec::with_capacity(count);
                    for _ in 0..count / (n * n) {
                        for i in 0..n {
                            for j in 0..n {
                                let base = if i == j { 1.0 } else { 0.0 };
                                v.push(base + normal.sample(&mut rng));
                            }
                        }
                    }
                    v
                }
                InitKind::Identity { n } => {
                    let mut v = vec![0.0; count];
                    for i in 0..n {
                        v[i * n + i] = 1.0;
                    }
                    v
                }
                InitKind::Zeros => vec![0.0; count],
                InitKind::Constant(c) => vec![c; count],
            };
            params.insert(spec.name, data, spec.shape);
        }
        Ok(TfdnetModel { config, params })
    }

    /// Rebuild a model from stored parameters, validating that every
    /// expected parameter is present with the right shape.
    pub fn from_parts(config: ModelConfig, params: ParamSet) -> Result<Self> {
        config.validate()?;
        let specs = param_specs(&config);
        if specs.len() != params.len() {
            return Err(Error::ArchitectureMismatch {
                expected: format!("{} parameters for [{}]", specs.len(), config.summary()),
                found: format!("{} parameters", params.len()),
            });
        }
        for spec in &specs {
            match params.get(&spec.name) {
                None => {
                    return Err(Error::ArchitectureMismatch {
                        expected: format!("parameter {} with shape {:?}", spec.name, spec.shape),
                        found: "no such parameter".into(),
                    })
                }
                Some(p) if p.shape != spec.shape => {
                    return Err(Error::ArchitectureMismatch {
                        expected: format!("parameter {} with shape {:?}", spec.name, spec.shape),
                        found: format!("shape {:?}", p.shape),
                    })
                }
                Some(_) => {}
            }
        }
        Ok(TfdnetModel { config, params })
    }

    /// Insert every parameter into `g` and build the per-scale encoder
    /// bindings for series of length `config.lookback`.
    pub fn bind(&self, g: &mut Graph, trainable: bool) -> Result<BoundModel> {
        let mut ids = IndexMap::new();
        for (name, p) in self.params.iter() {
            let id = g.tensor(p.data.clone(), &p.shape, trainable)?;
            ids.insert(name.to_string(), id);
        }
        let cp = |ids: &IndexMap<String, TensorId>, name: &str| -> ComplexPair {
            ComplexPair {
                re: ids[&format!("{name}.re")],
                im: ids[&format!("{name}.im")],
            }
        };
        let cfg = &self.config;
        let mut seasonal = Vec::new();
        let mut trend = Vec::new();
        for (si, (&s, &l)) in cfg.scales.iter().zip(&cfg.strides).enumerate() {
            let plan = StftPlan::new(StftConfig { window: s, stride: l }, cfg.lookback)?;
            let tfb = match cfg.seasonal_mode {
                SeasonalMode::Ik => TfbBinding::Ik {
                    w1: cp(&ids, &format!("seasonal.s{si}.w1")),
                    w2: cp(&ids, &format!("seasonal.s{si}.w2")),
                    channels: cfg.channels,
                    rank: cfg.individual_rank,
                },
                SeasonalMode::Mk => TfbBinding::Mk {
                    kernels: (0..cfg.kernel_count)
                        .map(|j| cp(&ids, &format!("seasonal.s{si}.kernel{j}")))
                        .collect(),
                    gates: (0..cfg.kernel_count)
                        .map(|j| cp(&ids, &format!("seasonal.s{si}.gate{j}")))
                        .collect(),
                },
            };
            seasonal.push(EncoderBinding {
                plan: Arc::clone(&plan),
                tfb,
                ffn_w: cp(&ids, &format!("seasonal.s{si}.ffn.w")),
                ffn_b: cp(&ids, &format!("seasonal.s{si}.ffn.b")),
            });
            trend.push(EncoderBinding {
                plan,
                tfb: TfbBinding::Shared {
                    kernel: cp(&ids, &format!("trend.s{si}.kernel")),
                },
                ffn_w: cp(&ids, &format!("trend.s{si}.ffn.w")),
                ffn_b: cp(&ids, &format!("trend.s{si}.ffn.b")),
            });
        }
        let revin_affine = if cfg.revin_affine {
            Some((ids["revin.weight"], ids["revin.bias"]))
        } else {
            None
        };
        Ok(BoundModel {
            seasonal_fuse: ids["seasonal.fuse"],
            trend_fuse: ids["trend.fuse"],
            head_weight: ids["head.weight"],
            head_bias: ids["head.bias"],
            revin_affine,
            seasonal,
            trend,
            params: ids,
        })
    }

    /// Full forward pass over a channel-major batch.
    ///
    /// `x` holds `channels·batch` rows of length `lookback` (row `d·batch + b`);
    /// the result holds the same rows over `horizon` steps.
    pub fn forward_bound(
        &self,
        g: &mut Graph,
        bound: &BoundModel,
        x: TensorId,
        batch: usize,
    ) -> Result<TensorId> {
        let cfg = &self.config;
        let rows = cfg.channels * batch;
        if g.len(x) != rows * cfg.lookback {
            return Err(Error::ShapeMismatch(format!(
                "model input: expected {rows} rows x {} samples = {} values, got {}",
                cfg.lookback,
                rows * cfg.lookback,
                g.len(x)
            )));
        }
        let (mut normalized, stats) = preprocess::revin_normalize(g, x, cfg.lookback)?;
        if let Some((w, b)) = bound.revin_affine {
            let w_full = expand_per_channel(g, w, batch, rows, cfg.lookback)?;
            let b_full = expand_per_channel(g, b, batch, rows, cfg.lookback)?;
            let scaled = g.mul(normalized, w_full)?;
            normalized = g.add(scaled, b_full)?;
        }
        let parts = preprocess::decompose(g, normalized, cfg.lookback, cfg.ma_kernel)?;
        let mut se_outputs = Vec::with_capacity(bound.seasonal.len());
        for enc in &bound.seasonal {
            se_outputs.push(encoder_forward(g, parts.seasonal, enc, batch)?);
        }
        let mut tr_outputs = Vec::with_capacity(bound.trend.len());
        for enc in &bound.trend {
            tr_outputs.push(encoder_forward(g, parts.trend, enc, batch)?);
        }
        let z_se = multiscale_fuse(g, &se_outputs, bound.seasonal_fuse)?;
        let z_tr = multiscale_fuse(g, &tr_outputs, bound.trend_fuse)?;
        let z = g.add(z_se, z_tr)?;
        let projected = g.matmul(z, bound.head_weight, rows, cfg.lookback, cfg.horizon, true)?;
        let mut forecast = g.add_bias(projected, bound.head_bias)?;
        if let Some((w, b)) = bound.revin_affine {
            let w_full = expand_per_channel(g, w, batch, rows, cfg.horizon)?;
            let b_full = expand_per_channel(g, b, batch, rows, cfg.horizon)?;
            let shifted = g.sub(forecast, b_full)?;
            forecast = g.div(shifted, w_full)?;
        }
        preprocess::revin_denormalize(g, forecast, stats, cfg.horizon)
    }

    /// Bind and run in one call; returns the forecast and the bindings for
    /// gradient extraction.
    pub fn forward(
        &self,
        g: &mut Graph,
        x: TensorId,
        batch: usize,
        trainable: bool,
    ) -> Result<(TensorId, BoundModel)> {
        let bound = self.bind(g, trainable)?;
        let y = self.forward_bound(g, &bound, x, batch)?;
        Ok((y, bound))
    }
}

/// Graph-bound parameters and per-scale encoder structure for one step.
pub struct BoundModel {
    /// Name -> graph tensor for every parameter.
    pub params: IndexMap<String, TensorId>,
    pub seasonal: Vec<EncoderBinding>,
    pub trend: Vec<EncoderBinding>,
    pub seasonal_fuse: TensorId,
    pub trend_fuse: TensorId,
    pub head_weight: TensorId,
    pub head_bias: TensorId,
    pub revin_affine: Option<(TensorId, TensorId)>,
}

/// Kernel parameterization bound to graph tensors.
pub enum TfbBinding {
    /// One kernel shared by every row.
    Shared { kernel: ComplexPair },
    /// Per-channel kernels `W1·W2`, rows grouped by channel.
    Ik {
        w1: ComplexPair,
        w2: ComplexPair,
        channels: usize,
        rank: usize,
    },
    /// Shared kernel bank with per-row gates.
    Mk {
        kernels: Vec<ComplexPair>,
        gates: Vec<ComplexPair>,
    },
}

/// One scale of one branch: STFT plan, kernel block, and feed-forward weights.
pub struct EncoderBinding {
    pub plan: Arc<StftPlan>,
    pub tfb: TfbBinding,
    pub ffn_w: ComplexPair,
    pub ffn_b: ComplexPair,
}

/// Broadcast a per-channel vector `[D]` to `[D·batch, len]` in the
/// channel-major row order used throughout the model.
fn expand_per_channel(g: &mut Graph, v: TensorId, batch: usize, rows: usize, len: usize) -> Result<TensorId> {
    let per_row = g.expand_last(v, batch);
    let flat = g.reshape(per_row, &[rows])?;
    Ok(g.expand_last(flat, len))
}

// ---- kernel operation ------------------------------------------------------------

/// Apply complex kernels bin-wise: for each frequency bin `m`, each output
/// row is the kernel's `N×N` matrix acting on that row's `N` frames,
/// `out[m, i] = Σ_j W[m, i, j] · x[m, j]`.
///
/// `x` is `[R, M, N]` with `R = Σ group_sizes`; `w` is `[G, M, N, N]` and
/// group `g`'s kernel applies to its contiguous block of rows.
pub fn apply_kernel_grouped(
    g: &mut Graph,
    x: ComplexPair,
    w: ComplexPair,
    m: usize,
    n: usize,
    group_sizes: Vec<usize>,
) -> Result<ComplexPair> {
    let rows: usize = group_sizes.iter().sum();
    if g.len(x.re) != rows * m * n || g.len(x.im) != rows * m * n {
        return Err(Error::ShapeMismatch(format!(
            "kernel input: expected {rows}x{m}x{n} = {} values per part, got {} (re) / {} (im)",
            rows * m * n,
            g.len(x.re),
            g.len(x.im)
        )));
    }
    let groups = group_sizes.len();
    if g.len(w.re) != groups * m * n * n || g.len(w.im) != groups * m * n * n {
        return Err(Error::ShapeMismatch(format!(
            "kernel weights: expected {groups}x{m}x{n}x{n} = {} values per part, got {} (re) / {} (im)",
            groups * m * n * n,
            g.len(w.re),
            g.len(w.im)
        )));
    }
    let mut out_re = vec![0.0; rows * m * n];
    let mut out_im = vec![0.0; rows * m * n];
    {
        let mut scratch = CgemmScratch::default();
        let (xre, xim) = (g.data(x.re), g.data(x.im));
        let (wre, wim) = (g.data(w.re), g.data(w.im));
        let mut row_start = 0;
        for (gi, &gr) in group_sizes.iter().enumerate() {
            for bin in 0..m {
                // out[rows, N] = X[rows, N] · W_binᵀ  (complex)
                cgemm_products(
                    &mut scratch, gr, n, n,
                    xre, xim, row_start * m * n + bin * n, ((m * n) as isize, 1),
                    wre, wim, (gi * m + bin) * n * n, (1, n as isize),
                    1.0,
                );
                scratch.apply_re(&mut out_re, row_start * m * n + bin * n, ((m * n) as isize, 1), false);
                scratch.apply_im(&mut out_im, row_start * m * n + bin * n, ((m * n) as isize, 1), false);
            }
            row_start += gr;
        }
    }
    let rg = g.needs_grad(&[x.re, x.im, w.re, w.im]);
    let shape = vec![rows, m, n];
    let ore = g.output(out_re, shape.clone(), rg);
    let oim = g.output(out_im, shape, rg);
    if rg {
        g.push_record(
            vec![ore, oim],
            Box::new(KernelApplyOp { x, w, m, n, group_sizes }),
        );
    }
    Ok(ComplexPair { re: ore, im: oim })
}

/// Single-channel kernel application: `x` is one `[M, N]` spectrum and `w`
/// one `[M, N, N]` kernel.
pub fn kernel_apply(g: &mut Graph, x: ComplexPair, w: ComplexPair, m: usize, n: usize) -> Result<ComplexPair> {
    apply_kernel_grouped(g, x, w, m, n, vec![1])
}

/// Shared-kernel block: one `[M, N, N]` kernel applied to every row of
/// `x: [R, M, N]`.
pub fn trend_tfb(g: &mut Graph, x: ComplexPair, w: ComplexPair, m: usize, n: usize) -> Result<ComplexPair> {
    let rows = g.len(x.re) / (m * n);
    apply_kernel_grouped(g, x, w, m, n, vec![rows])
}

/// Per-channel kernel block with the low-rank channel mixer: the effective
/// kernel of channel `d` is `Σ_r W1[d, r] · W2[r]` (complex), materialized
/// and applied to the channel's contiguous rows. `x` is `[D·batch, M, N]`
/// channel-major.
#[allow(clippy::too_many_arguments)]
pub fn seasonal_tfb_ik(
    g: &mut Graph,
    x: ComplexPair,
    w1: ComplexPair,
    w2: ComplexPair,
    channels: usize,
    rank: usize,
    batch: usize,
    m: usize,
    n: usize,
) -> Result<ComplexPair> {
    if g.len(w1.re) != channels * rank {
        return Err(Error::ShapeMismatch(format!(
            "channel mixer: expected {channels}x{rank} = {} values, got {}",
            channels * rank,
            g.len(w1.re)
        )));
    }
    let w_ind = g.complex_matmul(w1, w2, channels, rank, m * n * n, false)?;
    apply_kernel_grouped(g, x, w_ind, m, n, vec![batch; channels])
}

/// Gated multi-kernel block: every kernel of the bank is applied to all
/// rows, and each row blends the results with scalar gates
/// `sigmoid(|Σ_{m,n} G_k[m,n] · x_row[m,n]|)` (a full complex sum, then the
/// modulus). `x` is `[R, M, N]`.
pub fn seasonal_tfb_mk(
    g: &mut Graph,
    x: ComplexPair,
    kernels: &[ComplexPair],
    gates: &[ComplexPair],
    m: usize,
    n: usize,
) -> Result<ComplexPair> {
    if kernels.is_empty() || kernels.len() != gates.len() {
        return Err(Error::ShapeMismatch(format!(
            "multi-kernel block needs matching non-empty banks, got {} kernels and {} gates",
            kernels.len(),
            gates.len()
        )));
    }
    let rows = g.len(x.re) / (m * n);
    let mut acc: Option<ComplexPair> = None;
    for (kernel, gate) in kernels.iter().zip(gates) {
        if g.len(gate.re) != m * n {
            return Err(Error::ShapeMismatch(format!(
                "gate matrix: expected {m}x{n} = {} values, got {}",
                m * n,
                g.len(gate.re)
            )));
        }
        let h = apply_kernel_grouped(g, x, *kernel, m, n, vec![rows])?;
        // Complex dot of each row with the gate matrix.
        let rr = g.matmul(x.re, gate.re, rows, m * n, 1, false)?;
        let ii = g.matmul(x.im, gate.im, rows, m * n, 1, false)?;
        let ri = g.matmul(x.re, gate.im, rows, m * n, 1, false)?;
        let ir = g.matmul(x.im, gate.re, rows, m * n, 1, false)?;
        let dot_re = g.sub(rr, ii)?;
        let dot_im = g.add(ri, ir)?;
        let magnitude = g.complex_modulus(ComplexPair { re: dot_re, im: dot_im })?;
        let gate_val = g.sigmoid(magnitude);
        let gate_flat = g.expand_last(gate_val, m * n);
        let gate_b = g.reshape(gate_flat, &[rows, m, n])?;
        let term_re = g.mul(gate_b, h.re)?;
        let term_im = g.mul(gate_b, h.im)?;
        acc = Some(match acc {
            None => ComplexPair { re: term_re, im: term_im },
            Some(a) => ComplexPair {
                re: g.add(a.re, term_re)?,
                im: g.add(a.im, term_im)?,
            },
        });
    }
    Ok(acc.expect("at least one kernel"))
}

/// Frequency-axis feed-forward layer: for every row and frame, the
/// `M`-vector across frequency bins passes through a complex `M×M` weight
/// plus bias, with tanh applied to real and imaginary parts independently.
/// The residual connection is the caller's concern. `q` is `[R, M, N]`.
pub fn frequency_ffn(
    g: &mut Graph,
    q: ComplexPair,
    w: ComplexPair,
    b: ComplexPair,
    m: usize,
    n: usize,
) -> Result<ComplexPair> {
    if g.len(w.re) != m * m {
        return Err(Error::ShapeMismatch(format!(
            "feed-forward weight: expected {m}x{m} = {} values, got {}",
            m * m,
            g.len(w.re)
        )));
    }
    if g.len(b.re) != m {
        return Err(Error::ShapeMismatch(format!(
            "feed-forward bias: expected {m} values, got {}",
            g.len(b.re)
        )));
    }
    let rows = g.len(q.re) / (m * n);
    let qt_re = transpose_last_two(g, q.re, rows, m, n);
    let qt_im = transpose_last_two(g, q.im, rows, m, n);
    let qt = ComplexPair { re: qt_re, im: qt_im };
    let mapped = g.complex_matmul(qt, w, rows * n, m, m, true)?;
    let with_bias_re = g.add_bias(mapped.re, b.re)?;
    let with_bias_im = g.add_bias(mapped.im, b.im)?;
    let act_re = g.tanh(with_bias_re);
    let act_im = g.tanh(with_bias_im);
    let out_re = transpose_last_two(g, act_re, rows, n, m);
    let out_im = transpose_last_two(g, act_im, rows, n, m);
    Ok(ComplexPair { re: out_re, im: out_im })
}

/// One scale of one branch: transform, kernel block, feed-forward residual,
/// inverse transform. Maps `[R, L]` to `[R, L]`.
pub fn encoder_forward(g: &mut Graph, x: TensorId, enc: &EncoderBinding, batch: usize) -> Result<TensorId> {
    let plan = &enc.plan;
    let (m, n) = (plan.m, plan.n);
    let spectrum = signal::stft(g, x, plan)?;
    let q = match &enc.tfb {
        TfbBinding::Shared { kernel } => trend_tfb(g, spectrum, *kernel, m, n)?,
        TfbBinding::Ik { w1, w2, channels, rank } => {
            seasonal_tfb_ik(g, spectrum, *w1, *w2, *channels, *rank, batch, m, n)?
        }
        TfbBinding::Mk { kernels, gates } => seasonal_tfb_mk(g, spectrum, kernels, gates, m, n)?,
    };
    let f = frequency_ffn(g, q, enc.ffn_w, enc.ffn_b, m, n)?;
    let z_re = g.add(q.re, f.re)?;
    let z_im = g.add(q.im, f.im)?;
    signal::istft(g, ComplexPair { re: z_re, im: z_im }, plan)
}

/// Weighted sum across scales with one learned scalar per scale, shared by
/// all rows and time positions.
pub fn multiscale_fuse(g: &mut Graph, outputs: &[TensorId], weights: TensorId) -> Result<TensorId> {
    if outputs.is_empty() {
        return Err(Error::InvalidArgument("fusion needs at least one scale output".into()));
    }
    if g.len(weights) != outputs.len() {
        return Err(Error::ShapeMismatch(format!(
            "fusion weights: expected {} entries, got {}",
            outputs.len(),
            g.len(weights)
        )));
    }
    let mut acc: Option<TensorId> = None;
    for (i, &out) in outputs.iter().enumerate() {
        let wi = g.select(weights, i)?;
        let term = g.scale_by(out, wi)?;
        acc = Some(match acc {
            None => term,
            Some(a) => g.add(a, term)?,
        });
    }
    Ok(acc.expect("at least one output"))
}

// ---- transpose of the trailing axes -----------------------------------------------

fn transpose_copy(src: &[f64], rows: usize, d1: usize, d2: usize) -> Vec<f64> {
    let mut out = vec![0.0; rows * d1 * d2];
    for r in 0..rows {
        let base = r * d1 * d2;
        for i in 0..d1 {
            for j in 0..d2 {
                out[base + j * d1 + i] = src[base + i * d2 + j];
            }
        }
    }
    out
}

/// `[rows, d1, d2]` -> `[rows, d2, d1]`.
fn transpose_last_two(g: &mut Graph, x: TensorId, rows: usize, d1: usize, d2: usize) -> TensorId {
    let data = transpose_copy(g.data(x), rows, d1, d2);
    let rg = g.needs_grad(&[x]);
    let out = g.output(data, vec![rows, d2, d1], rg);
    if rg {
        g.push_record(vec![out], Box::new(TransposeOp { x, rows, d1, d2 }));
    }
    out
}

struct TransposeOp {
    x: TensorId,
    rows: usize,
    d1: usize,
    d2: usize,
}

impl BackwardOp for TransposeOp {
    fn backward(&self, out_grads: &[Option<Vec<f64>>], ctx: &mut GradCtx) {
        let g = match &out_grads[0] {
            Some(g) => g,
            None => return,
        };
        // The output was [rows, d2, d1]; transposing the gradient back
        // yields the input layout.
        let back = transpose_copy(g, self.rows, self.d2, self.d1);
        if let Some(gx) = ctx.grad_mut(self.x) {
            for (d, v) in gx.iter_mut().zip(&back) {
                *d += v;
            }
        }
    }
}

// ---- fused complex GEMM kernel ------------------------------------------------------

/// Scratch for the three-product complex GEMM: with `P1 = Are·Bre`,
/// `P2 = Aim·Bim`, `P3 = (Are+Aim)·(Bre+σ·Bim)`, the product
/// `(Are+i·Aim)(Bre+i·σ·Bim)` is `re = P1 − σ·P2`, `im = P3 − P1 − σ·P2`;
/// `σ = −1` conjugates `B`.
#[derive(Default)]
struct CgemmScratch {
    p1: Vec<f64>,
    p2: Vec<f64>,
    p3: Vec<f64>,
    sa: Vec<f64>,
    sb: Vec<f64>,
    mm: usize,
    nn: usize,
    sigma: f64,
}

#[allow(clippy::too_many_arguments)]
fn cgemm_products(
    s: &mut CgemmScratch,
    mm: usize,
    kk: usize,
    nn: usize,
    a_re: &[f64],
    a_im: &[f64],
    a_off: usize,
    a_strides: (isize, isize),
    b_re: &[f64],
    b_im: &[f64],
    b_off: usize,
    b_strides: (isize, isize),
    sigma: f64,
) {
    s.mm = mm;
    s.nn = nn;
    s.sigma = sigma;
    s.p1.clear();
    s.p1.resize(mm * nn, 0.0);
    s.p2.clear();
    s.p2.resize(mm * nn, 0.0);
    s.p3.clear();
    s.p3.resize(mm * nn, 0.0);
    s.sa.clear();
    s.sa.resize(mm * kk, 0.0);
    s.sb.clear();
    s.sb.resize(kk * nn, 0.0);
    let (rsa, csa) = a_strides;
    for i in 0..mm {
        for t in 0..kk {
            let idx = (a_off as isize + i as isize * rsa + t as isize * csa) as usize;
            s.sa[i * kk + t] = a_re[idx] + a_im[idx];
        }
    }
    let (rsb, csb) = b_strides;
    for t in 0..kk {
        for j in 0..nn {
            let idx = (b_off as isize + t as isize * rsb + j as isize * csb) as usize;
            s.sb[t * nn + j] = b_re[idx] + sigma * b_im[idx];
        }
    }
    dgemm(mm, kk, nn, 1.0, a_re, a_off, a_strides, b_re, b_off, b_strides, 0.0, &mut s.p1, 0, (nn as isize, 1));
    dgemm(mm, kk, nn, 1.0, a_im, a_off, a_strides, b_im, b_off, b_strides, 0.0, &mut s.p2, 0, (nn as isize, 1));
    dgemm(mm, kk, nn, 1.0, &s.sa, 0, (kk as isize, 1), &s.sb, 0, (nn as isize, 1), 0.0, &mut s.p3, 0, (nn as isize, 1));
}

impl CgemmScratch {
    /// Write `P1 − σ·P2` into the strided destination; add when `accumulate`.
    fn apply_re(&self, out: &mut [f64], off: usize, (rs, cs): (isize, isize), accumulate: bool) {
        for i in 0..self.mm {
            for j in 0..self.nn {
                let v = self.p1[i * self.nn + j] - self.sigma * self.p2[i * self.nn + j];
                let idx = (off as isize + i as isize * rs + j as isize * cs) as usize;
                if accumulate {
                    out[idx] += v;
                } else {
                    out[idx] = v;
                }
            }
        }
    }

    /// Write `P3 − P1 − σ·P2` into the strided destination; add when `accumulate`.
    fn apply_im(&self, out: &mut [f64], off: usize, (rs, cs): (isize, isize), accumulate: bool) {
        for i in 0..self.mm {
            for j in 0..self.nn {
                let base = i * self.nn + j;
                let v = self.p3[base] - self.p1[base] - self.sigma * self.p2[base];
                let idx = (off as isize + i as isize * rs + j as isize * cs) as usize;
                if accumulate {
                    out[idx] += v;
                } else {
                    out[idx] = v;
                }
            }
        }
    }
}

struct KernelApplyOp {
    x: ComplexPair,
    w: ComplexPair,
    m: usize,
    n: usize,
    group_sizes: Vec<usize>,
}

impl BackwardOp for KernelApplyOp {
    fn backward(&self, out_grads: &[Option<Vec<f64>>], ctx: &mut GradCtx) {
        let (m, n) = (self.m, self.n);
        let rows: usize = self.group_sizes.iter().sum();
        let zeros;
        let (g_re, g_im) = match (&out_grads[0], &out_grads[1]) {
            (Some(re), Some(im)) => (re.as_slice(), im.as_slice()),
            (Some(re), None) => {
                zeros = vec![0.0; rows * m * n];
                (re.as_slice(), zeros.as_slice())
            }
            (None, Some(im)) => {
                zeros = vec![0.0; rows * m * n];
                (zeros.as_slice(), im.as_slice())
            }
            (None, None) => return,
        };
        let xre = ctx.val(self.x.re);
        let xim = ctx.val(self.x.im);
        let wre = ctx.val(self.w.re);
        let wim = ctx.val(self.w.im);
        let mut scratch = CgemmScratch::default();
        let needs_x = ctx.grad_mut(self.x.re).is_some() || ctx.grad_mut(self.x.im).is_some();
        let needs_w = ctx.grad_mut(self.w.re).is_some() || ctx.grad_mut(self.w.im).is_some();

        if needs_x {
            // dX = dY · conj(W), per bin, W not transposed.
            let mut row_start = 0;
            for (gi, &gr) in self.group_sizes.iter().enumerate() {
                for bin in 0..m {
                    cgemm_products(
                        &mut scratch, gr, n, n,
                        g_re, g_im, row_start * m * n + bin * n, ((m * n) as isize, 1),
                        wre, wim, (gi * m + bin) * n * n, (n as isize, 1),
                        -1.0,
                    );
                    if let Some(gx) = ctx.grad_mut(self.x.re) {
                        scratch.apply_re(gx, row_start * m * n + bin * n, ((m * n) as isize, 1), true);
                    }
                    if let Some(gx) = ctx.grad_mut(self.x.im) {
                        scratch.apply_im(gx, row_start * m * n + bin * n, ((m * n) as isize, 1), true);
                    }
                }
                row_start += gr;
            }
        }
        if needs_w {
            // dW = dYᵀ · conj(X), per bin and group.
            let mut row_start = 0;
            for (gi, &gr) in self.group_sizes.iter().enumerate() {
                for bin in 0..m {
                    cgemm_products(
                        &mut scratch, n, gr, n,
                        g_re, g_im, row_start * m * n + bin * n, (1, (m * n) as isize),
                        xre, xim, row_start * m * n + bin * n, ((m * n) as isize, 1),
                        -1.0,
                    );
                    if let Some(gw) = ctx.grad_mut(self.w.re) {
                        scratch.apply_re(gw, (gi * m + bin) * n * n, (n as isize, 1), true);
                    }
                    if let Some(gw) = ctx.grad_mut(self.w.im) {
                        scratch.apply_im(gw, (gi * m + bin) * n * n, (n as isize, 1), true);
                    }
                }
                row_start += gr;
            }
        }
    }
}
