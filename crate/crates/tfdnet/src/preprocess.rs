//! Instance normalization and seasonal-trend decomposition.

use crate::autodiff::{BackwardOp, GradCtx, Graph, TensorId};
use crate::error::{Error, Result};

/// Per-row normalization statistics held as graph tensors so that
/// denormalization differentiates through them.
#[derive(Clone, Copy, Debug)]
pub struct RevinStats {
    /// Per-row mean, `[rows]`.
    pub mean: TensorId,
    /// Per-row population standard deviation floored at 1e-8, `[rows]`.
    pub std: TensorId,
}

/// Floor applied to the per-row standard deviation.
pub const STD_FLOOR: f64 = 1e-8;

/// Normalize each row of `x` (`[rows, len]`) to zero mean and unit
/// population standard deviation. Rows with (near-)zero variance map to
/// zeros thanks to the floored standard deviation.
pub fn revin_normalize(g: &mut Graph, x: TensorId, len: usize) -> Result<(TensorId, RevinStats)> {
    if len < 2 {
        return Err(Error::InvalidArgument(format!(
            "instance normalization needs at least 2 samples per row, got {len}"
        )));
    }
    if g.len(x) % len != 0 {
        return Err(Error::ShapeMismatch(format!(
            "revin_normalize: tensor of {} elements is not a stack of length-{len} rows",
            g.len(x)
        )));
    }
    let mean = g.mean_last(x)?;
    let mean_b = g.expand_last(mean, len);
    let centered = g.sub(x, mean_b)?;
    let sq = g.mul(centered, centered)?;
    let var = g.mean_last(sq)?;
    let sd_raw = g.sqrt(var);
    let sd = g.max_const(sd_raw, STD_FLOOR);
    let sd_b = g.expand_last(sd, len);
    let normalized = g.div(centered, sd_b)?;
    Ok((normalized, RevinStats { mean, std: sd }))
}

/// Invert [`revin_normalize`] on a forecast: `y·std + mean` per row.
pub fn revin_denormalize(g: &mut Graph, y: TensorId, stats: RevinStats, len: usize) -> Result<TensorId> {
    let rows = g.len(stats.mean);
    if g.len(y) != rows * len {
        return Err(Error::ShapeMismatch(format!(
            "revin_denormalize: {} elements do not form {rows} rows of length {len}",
            g.len(y)
        )));
    }
    let sd_b = g.expand_last(stats.std, len);
    let scaled = g.mul(y, sd_b)?;
    let mean_b = g.expand_last(stats.mean, len);
    g.add(scaled, mean_b)
}

/// Trend and seasonal parts of a series; they sum back to the input.
#[derive(Clone, Copy, Debug)]
pub struct Decomposition {
    pub trend: TensorId,
    pub seasonal: TensorId,
}

/// Split each row of `x` (`[rows, len]`) into a moving-average trend and a
/// seasonal remainder. The average runs over a centered window of `kernel`
/// samples with edge-replication padding, so row length is preserved and
/// `trend + seasonal == x` exactly.
pub fn decompose(g: &mut Graph, x: TensorId, len: usize, kernel: usize) -> Result<Decomposition> {
    if kernel % 2 == 0 || kernel == 0 {
        return Err(Error::InvalidArgument(format!(
            "moving-average kernel must be odd and positive, got {kernel}"
        )));
    }
    if kernel > 2 * len - 1 {
        return Err(Error::InvalidArgument(format!(
            "moving-average kernel {kernel} exceeds the maximum 2L-1 = {} for row length {len}",
            2 * len - 1
        )));
    }
    if len == 0 || g.len(x) % len != 0 {
        return Err(Error::ShapeMismatch(format!(
            "decompose: tensor of {} elements is not a stack of length-{len} rows",
            g.len(x)
        )));
    }
    let rows = g.len(x) / len;
    let data = moving_average(g.data(x), rows, len, kernel);
    let rg = g.needs_grad(&[x]);
    let shape = g.shape(x).to_vec();
    let trend = g.output(data, shape, rg);
    if rg {
        g.push_record(vec![trend], Box::new(MovingAverageOp { x, rows, len, kernel }));
    }
    let seasonal = g.sub(x, trend)?;
    Ok(Decomposition { trend, seasonal })
}

/// Centered moving average with edge replication over each row.
pub(crate) fn moving_average(x: &[f64], rows: usize, len: usize, kernel: usize) -> Vec<f64> {
    if kernel == 1 {
        // Unit window: exact identity, bypassing prefix-sum rounding.
        return x.to_vec();
    }
    let half = kernel / 2;
    let inv = 1.0 / kernel as f64;
    let mut out = vec![0.0; rows * len];
    let padded_len = len + kernel - 1;
    let mut prefix = vec![0.0; padded_len + 1];
    for r in 0..rows {
        let row = &x[r * len..(r + 1) * len];
        for p in 0..padded_len {
            let src = (p as isize - half as isize).clamp(0, len as isize - 1) as usize;
            prefix[p + 1] = prefix[p] + row[src];
        }
        let dst = &mut out[r * len..(r + 1) * len];
        for (t, d) in dst.iter_mut().enumerate() {
            *d = (prefix[t + kernel] - prefix[t]) * inv;
        }
    }
    out
}

struct MovingAverageOp {
    x: TensorId,
    rows: usize,
    len: usize,
    kernel: usize,
}

impl BackwardOp for MovingAverageOp {
    fn backward(&self, out_grads: &[Option<Vec<f64>>], ctx: &mut GradCtx) {
        let g = match &out_grads[0] {
            Some(g) => g,
            None => return,
        };
        let (rows, len, kernel) = (self.rows, self.len, self.kernel);
        let half = kernel / 2;
        let inv = 1.0 / kernel as f64;
        let padded_len = len + kernel - 1;
        if let Some(gx) = ctx.grad_mut(self.x) {
            // Each output t averages padded positions [t, t+kernel); spread
            // g[t]/kernel over that span with a difference array, then fold
            // the padded positions onto their replicated sources.
            let mut diff = vec![0.0; padded_len + 1];
            for r in 0..rows {
                diff.fill(0.0);
                let grow = &g[r * len..(r + 1) * len];
                for (t, gt) in grow.iter().enumerate() {
                    let c = gt * inv;
                    diff[t] += c;
                    diff[t + kernel] -= c;
                }
                let dst = &mut gx[r * len..(r + 1) * len];
                let mut running = 0.0;
                for (p, d) in diff[..padded_len].iter().enumerate() {
                    running += d;
                    let src = (p as isize - half as isize).clamp(0, len as isize - 1) as usize;
                    dst[src] += running;
                }
            }
        }
    }
}
