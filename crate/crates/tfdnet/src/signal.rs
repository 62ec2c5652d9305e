//! Short-time Fourier transform and its inverse.
//!
//! Conventions: rectangular (all-ones) window; analysis frames of length `S`
//! every `l` samples over a series padded by `S` samples total (`ceil(S/2)`
//! left, `floor(S/2)` right) with edge replication, giving `N = floor(L/l) + 1`
//! frames; only the `M = S/2 + 1` non-redundant bins of the real-signal
//! spectrum are kept. The inverse expands the retained bins by conjugate
//! symmetry, inverse-transforms each frame, overlap-adds, divides each sample
//! by its frame-coverage count, and strips the padding, which reconstructs
//! the input exactly up to rounding.
//!
//! Both directions participate in the differentiation graph.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use crate::autodiff::{dgemm, BackwardOp, ComplexPair, GradCtx, Graph, TensorId};
use crate::error::{Error, Result};

/// Window length and hop of an STFT.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct StftConfig {
    /// Window length `S` in samples; must be even.
    pub window: usize,
    /// Hop `l` in samples; `1 ≤ l ≤ S`.
    pub stride: usize,
}

impl StftConfig {
    pub fn new(window: usize, stride: usize) -> Result<Self> {
        let cfg = StftConfig { window, stride };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.window < 2 || self.window % 2 != 0 {
            return Err(Error::InvalidArgument(format!(
                "window length must be even and at least 2, got {}",
                self.window
            )));
        }
        if self.stride == 0 || self.stride > self.window {
            return Err(Error::InvalidArgument(format!(
                "stride must satisfy 1 <= stride <= window ({}), got {}",
                self.window, self.stride
            )));
        }
        Ok(())
    }

    /// Number of retained frequency bins `M = S/2 + 1`.
    pub fn bins(&self) -> usize {
        self.window / 2 + 1
    }

    /// Number of frames for a series of length `len`.
    pub fn frames(&self, len: usize) -> usize {
        len / self.stride + 1
    }
}

/// Precomputed transform tables for one `(config, series length)` pair.
///
/// Plans are immutable and shared (`Arc`) between the forward and backward
/// passes of the recorded operations.
pub struct StftPlan {
    pub cfg: StftConfig,
    /// Original series length `L`.
    pub len: usize,
    /// Frequency bins `M`.
    pub m: usize,
    /// Frames `N`.
    pub n: usize,
    pad_left: usize,
    padded: usize,
    /// Padded position -> source index (edge replication).
    src_idx: Vec<usize>,
    /// Analysis tables, `[M, S]`: `cos(2π·t·ω/S)` and `sin(2π·t·ω/S)`.
    cos_tab: Vec<f64>,
    sin_tab: Vec<f64>,
    /// Synthesis tables, `[S, M]`, conjugate-symmetry weights folded in.
    inv_cos: Vec<f64>,
    inv_sin: Vec<f64>,
    /// Reciprocal frame-coverage count per padded position (0 if uncovered).
    inv_coverage: Vec<f64>,
    /// Every original sample is covered by at least one frame.
    fully_covered: bool,
}

impl StftPlan {
    pub fn new(cfg: StftConfig, len: usize) -> Result<Arc<Self>> {
        cfg.validate()?;
        let s = cfg.window;
        let l = cfg.stride;
        if len < s {
            return Err(Error::InvalidArgument(format!(
                "series length {len} is shorter than the window length {s}"
            )));
        }
        let m = cfg.bins();
        let n = cfg.frames(len);
        let pad_left = s.div_ceil(2);
        let padded = len + s;

        let src_idx: Vec<usize> = (0..padded)
            .map(|p| (p as isize - pad_left as isize).clamp(0, len as isize - 1) as usize)
            .collect();

        let tau = std::f64::consts::TAU;
        let mut cos_tab = vec![0.0; m * s];
        let mut sin_tab = vec![0.0; m * s];
        for w in 0..m {
            for t in 0..s {
                let angle = tau * (t as f64) * (w as f64) / s as f64;
                cos_tab[w * s + t] = angle.cos();
                sin_tab[w * s + t] = angle.sin();
            }
        }
        // Full-spectrum inverse via conjugate symmetry: interior bins count
        // twice, DC and Nyquist once; the 1/S inverse-DFT factor is folded in.
        let mut inv_cos = vec![0.0; s * m];
        let mut inv_sin = vec![0.0; s * m];
        for t in 0..s {
            for w in 0..m {
                let weight = if w == 0 || w == s / 2 { 1.0 } else { 2.0 };
                let angle = tau * (t as f64) * (w as f64) / s as f64;
                inv_cos[t * m + w] = weight * angle.cos() / s as f64;
                inv_sin[t * m + w] = -weight * angle.sin() / s as f64;
            }
        }

        let mut coverage = vec![0u32; padded];
        for frame in 0..n {
            for t in 0..s {
                coverage[frame * l + t] += 1;
            }
        }
        let fully_covered = coverage[pad_left..pad_left + len].iter().all(|&c| c > 0);
        let inv_coverage = coverage
            .iter()
            .map(|&c| if c == 0 { 0.0 } else { 1.0 / c as f64 })
            .collect();

        Ok(Arc::new(StftPlan {
            cfg,
            len,
            m,
            n,
            pad_left,
            padded,
            src_idx,
            cos_tab,
            sin_tab,
            inv_cos,
            inv_sin,
            inv_coverage,
            fully_covered,
        }))
    }

    /// Forward transform of `rows` stacked series, each of length `self.len`.
    /// Returns `(re, im)`, each laid out `[rows, M, N]`.
    pub fn forward(&self, x: &[f64], rows: usize) -> (Vec<f64>, Vec<f64>) {
        assert_eq!(x.len(), rows * self.len);
        let (s, l, m, n) = (self.cfg.window, self.cfg.stride, self.m, self.n);
        let rn = rows * n;
        let mut frames = vec![0.0; rn * s];
        for r in 0..rows {
            let row = &x[r * self.len..(r + 1) * self.len];
            for frame in 0..n {
                let dst = &mut frames[(r * n + frame) * s..(r * n + frame + 1) * s];
                for t in 0..s {
                    dst[t] = row[self.src_idx[frame * l + t]];
                }
            }
        }
        // Frame-major spectra [rows·N, M], then transpose to bin-major [rows, M, N].
        let mut fm_re = vec![0.0; rn * m];
        let mut fm_im = vec![0.0; rn * m];
        dgemm(rn, s, m, 1.0, &frames, 0, (s as isize, 1), &self.cos_tab, 0, (1, s as isize), 0.0, &mut fm_re, 0, (m as isize, 1));
        dgemm(rn, s, m, -1.0, &frames, 0, (s as isize, 1), &self.sin_tab, 0, (1, s as isize), 0.0, &mut fm_im, 0, (m as isize, 1));
        let mut re = vec![0.0; rows * m * n];
        let mut im = vec![0.0; rows * m * n];
        for r in 0..rows {
            for frame in 0..n {
                let src = (r * n + frame) * m;
                for w in 0..m {
                    re[r * m * n + w * n + frame] = fm_re[src + w];
                    im[r * m * n + w * n + frame] = fm_im[src + w];
                }
            }
        }
        (re, im)
    }

    /// Inverse transform of `rows` stacked spectra laid out `[rows, M, N]`.
    pub fn inverse(&self, re: &[f64], im: &[f64], rows: usize) -> Vec<f64> {
        let (s, l, m, n) = (self.cfg.window, self.cfg.stride, self.m, self.n);
        assert_eq!(re.len(), rows * m * n);
        assert_eq!(im.len(), rows * m * n);
        let rn = rows * n;
        let mut fm_re = vec![0.0; rn * m];
        let mut fm_im = vec![0.0; rn * m];
        for r in 0..rows {
            for frame in 0..n {
                let dst = (r * n + frame) * m;
                for w in 0..m {
                    fm_re[dst + w] = re[r * m * n + w * n + frame];
                    fm_im[dst + w] = im[r * m * n + w * n + frame];
                }
            }
        }
        let mut time = vec![0.0; rn * s];
        dgemm(rn, m, s, 1.0, &fm_re, 0, (m as isize, 1), &self.inv_cos, 0, (1, m as isize), 0.0, &mut time, 0, (s as isize, 1));
        dgemm(rn, m, s, 1.0, &fm_im, 0, (m as isize, 1), &self.inv_sin, 0, (1, m as isize), 1.0, &mut time, 0, (s as isize, 1));
        let mut out = vec![0.0; rows * self.len];
        let mut padded = vec![0.0; self.padded];
        for r in 0..rows {
            padded.fill(0.0);
            for frame in 0..n {
                let src = &time[(r * n + frame) * s..(r * n + frame + 1) * s];
                let base = frame * l;
                for t in 0..s {
                    padded[base + t] += src[t];
                }
            }
            let row = &mut out[r * self.len..(r + 1) * self.len];
            for t in 0..self.len {
                row[t] = padded[self.pad_left + t] * self.inv_coverage[self.pad_left + t];
            }
        }
        out
    }
}

fn rows_for(g: &Graph, x: TensorId, len: usize, what: &str) -> Result<usize> {
    let total = g.len(x);
    if len == 0 || total % len != 0 {
        return Err(Error::ShapeMismatch(format!(
            "{what}: tensor of {total} elements is not a stack of length-{len} series"
        )));
    }
    Ok(total / len)
}

/// Record the forward transform of `x` (`[rows, L]` flat) on the graph.
/// Returns the complex spectra laid out `[rows, M, N]`.
pub fn stft(g: &mut Graph, x: TensorId, plan: &Arc<StftPlan>) -> Result<ComplexPair> {
    let rows = rows_for(g, x, plan.len, "stft")?;
    let (re, im) = plan.forward(g.data(x), rows);
    let rg = g.needs_grad(&[x]);
    let shape = vec![rows, plan.m, plan.n];
    let out_re = g.output(re, shape.clone(), rg);
    let out_im = g.output(im, shape, rg);
    if rg {
        g.push_record(
            vec![out_re, out_im],
            Box::new(StftOp {
                x,
                plan: Arc::clone(plan),
                rows,
            }),
        );
    }
    Ok(ComplexPair { re: out_re, im: out_im })
}

/// Record the inverse transform of spectra `[rows, M, N]` on the graph.
/// Returns the reconstructed series `[rows, L]`.
pub fn istft(g: &mut Graph, z: ComplexPair, plan: &Arc<StftPlan>) -> Result<TensorId> {
    if !plan.fully_covered {
        return Err(Error::InvalidArgument(format!(
            "inverse STFT undefined: window {} with stride {} leaves samples of a length-{} series uncovered",
            plan.cfg.window, plan.cfg.stride, plan.len
        )));
    }
    let per = plan.m * plan.n;
    let rows = rows_for(g, z.re, per, "istft")?;
    if g.len(z.im) != g.len(z.re) {
        return Err(Error::ShapeMismatch(format!(
            "istft: re has {} elements but im has {}",
            g.len(z.re),
            g.len(z.im)
        )));
    }
    let data = plan.inverse(g.data(z.re), g.data(z.im), rows);
    let rg = g.needs_grad(&[z.re, z.im]);
    let out = g.output(data, vec![rows, plan.len], rg);
    if rg {
        g.push_record(
            vec![out],
            Box::new(IstftOp {
                z,
                plan: Arc::clone(plan),
                rows,
            }),
        );
    }
    Ok(out)
}

struct StftOp {
    x: TensorId,
    plan: Arc<StftPlan>,
    rows: usize,
}

impl BackwardOp for StftOp {
    fn backward(&self, out_grads: &[Option<Vec<f64>>], ctx: &mut GradCtx) {
        let plan = &self.plan;
        let (s, l, m, n) = (plan.cfg.window, plan.cfg.stride, plan.m, plan.n);
        let rows = self.rows;
        let rn = rows * n;
        // Adjoint of the analysis DFT: back to frame-major, then to frames.
        let mut d_frames = vec![0.0; rn * s];
        let mut fm = vec![0.0; rn * m];
        let mut first = true;
        if let Some(g_re) = &out_grads[0] {
            for r in 0..rows {
                for frame in 0..n {
                    let dst = (r * n + frame) * m;
                    for w in 0..m {
                        fm[dst + w] = g_re[r * m * n + w * n + frame];
                    }
                }
            }
            dgemm(rn, m, s, 1.0, &fm, 0, (m as isize, 1), &plan.cos_tab, 0, (s as isize, 1), 0.0, &mut d_frames, 0, (s as isize, 1));
            first = false;
        }
        if let Some(g_im) = &out_grads[1] {
            for r in 0..rows {
                for frame in 0..n {
                    let dst = (r * n + frame) * m;
                    for w in 0..m {
                        fm[dst + w] = g_im[r * m * n + w * n + frame];
                    }
                }
            }
            let beta = if first { 0.0 } else { 1.0 };
            dgemm(rn, m, s, -1.0, &fm, 0, (m as isize, 1), &plan.sin_tab, 0, (s as isize, 1), beta, &mut d_frames, 0, (s as isize, 1));
        }
        if let Some(gx) = ctx.grad_mut(self.x) {
            for r in 0..rows {
                let row = &mut gx[r * plan.len..(r + 1) * plan.len];
                for frame in 0..n {
                    let src = &d_frames[(r * n + frame) * s..(r * n + frame + 1) * s];
                    for t in 0..s {
                        row[plan.src_idx[frame * l + t]] += src[t];
                    }
                }
            }
        }
    }
}

struct IstftOp {
    z: ComplexPair,
    plan: Arc<StftPlan>,
    rows: usize,
}

impl BackwardOp for IstftOp {
    fn backward(&self, out_grads: &[Option<Vec<f64>>], ctx: &mut GradCtx) {
        let g = match &out_grads[0] {
            Some(g) => g,
            None => return,
        };
        let plan = &self.plan;
        let (s, l, m, n) = (plan.cfg.window, plan.cfg.stride, plan.m, plan.n);
        let rows = self.rows;
        let rn = rows * n;
        // Adjoint of strip+normalize: spread onto padded positions, then
        // gather per frame (each frame reads its padded span once).
        let mut d_time = vec![0.0; rn * s];
        let mut d_padded = vec![0.0; plan.padded];
        for r in 0..rows {
            d_padded.fill(0.0);
            for t in 0..plan.len {
                d_padded[plan.pad_left + t] =
                    g[r * plan.len + t] * plan.inv_coverage[plan.pad_left + t];
            }
            for frame in 0..n {
                let dst = &mut d_time[(r * n + frame) * s..(r * n + frame + 1) * s];
                let base = frame * l;
                for t in 0..s {
                    dst[t] = d_padded[base + t];
                }
            }
        }
        let mut fm = vec![0.0; rn * m];
        dgemm(rn, s, m, 1.0, &d_time, 0, (s as isize, 1), &plan.inv_cos, 0, (m as isize, 1), 0.0, &mut fm, 0, (m as isize, 1));
        if let Some(g_re) = ctx.grad_mut(self.z.re) {
            for r in 0..rows {
                for frame in 0..n {
                    let src = (r * n + frame) * m;
                    for w in 0..m {
                        g_re[r * m * n + w * n + frame] += fm[src + w];
                    }
                }
            }
        }
        dgemm(rn, s, m, 1.0, &d_time, 0, (s as isize, 1), &plan.inv_sin, 0, (m as isize, 1), 0.0, &mut fm, 0, (m as isize, 1));
        if let Some(g_im) = ctx.grad_mut(self.z.im) {
            for r in 0..rows {
                for frame in 0..n {
                    let src = (r * n + frame) * m;
                    for w in 0..m {
                        g_im[r * m * n + w * n + frame] += fm[src + w];
                    }
                }
            }
        }
    }
}

/// Magnitude spectrogram of a single series: returns (`|X̃|` as `[M, N]`
/// row-major, M, N).
pub fn spectrogram_magnitudes(x: &[f64], len: usize, cfg: StftConfig) -> Result<(Vec<f64>, usize, usize)> {
    if x.len() != len {
        return Err(Error::ShapeMismatch(format!(
            "spectrogram: series of {} values declared as length {len}",
            x.len()
        )));
    }
    let plan = StftPlan::new(cfg, len)?;
    let (re, im) = plan.forward(x, 1);
    let mags = re.iter().zip(&im).map(|(a, b)| a.hypot(*b)).collect();
    Ok((mags, plan.m, plan.n))
}

/// Write one magnitude matrix as CSV: header `freq_bin,frame_0,...`, one row
/// per frequency bin from low to high.
pub fn write_spectrogram_csv(path: &Path, magnitudes: &[f64], m: usize, n: usize) -> Result<()> {
    if magnitudes.len() != m * n {
        return Err(Error::ShapeMismatch(format!(
            "spectrogram matrix: expected {m}x{n} = {} values, got {}",
            m * n,
            magnitudes.len()
        )));
    }
    let mut wtr = csv::Writer::from_path(path)
        .map_err(|e| Error::io(format!("cannot write spectrogram {}", path.display()), into_io(e)))?;
    let mut header = Vec::with_capacity(n + 1);
    header.push("freq_bin".to_string());
    header.extend((0..n).map(|f| format!("frame_{f}")));
    wtr.write_record(&header)
        .map_err(|e| Error::io(format!("cannot write spectrogram {}", path.display()), into_io(e)))?;
    for w in 0..m {
        let mut row = Vec::with_capacity(n + 1);
        row.push(w.to_string());
        for frame in 0..n {
            row.push(magnitudes[w * n + frame].to_string());
        }
        wtr.write_record(&row)
            .map_err(|e| Error::io(format!("cannot write spectrogram {}", path.display()), into_io(e)))?;
    }
    wtr.flush()
        .map_err(|e| Error::io(format!("cannot write spectrogram {}", path.display()), e))?;
    Ok(())
}

/// Write per-channel spectrogram magnitude CSVs.
///
/// `x` holds `channels` stacked series of length `len`. One file is written
/// per channel at `base` with its extension replaced by `_ch{i}.csv`; rows
/// are frequency bins (low to high), columns are frames, and the header is
/// `freq_bin,frame_0,...,frame_{N-1}`. Returns the written paths.
pub fn spectrogram_export(
    x: &[f64],
    channels: usize,
    len: usize,
    cfg: StftConfig,
    base: &Path,
) -> Result<Vec<PathBuf>> {
    if channels == 0 || x.len() != channels * len {
        return Err(Error::ShapeMismatch(format!(
            "spectrogram_export: {} values do not form {channels} series of length {len}",
            x.len()
        )));
    }
    let stem = base.with_extension("");
    let mut written = Vec::with_capacity(channels);
    for ch in 0..channels {
        let (mags, m, n) = spectrogram_magnitudes(&x[ch * len..(ch + 1) * len], len, cfg)?;
        let path = PathBuf::from(format!("{}_ch{ch}.csv", stem.display()));
        write_spectrogram_csv(&path, &mags, m, n)?;
        written.push(path);
    }
    Ok(written)
}

fn into_io(e: csv::Error) -> std::io::Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => io,
        other => std::io::Error::other(format!("{other:?}")),
    }
}
