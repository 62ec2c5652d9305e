//! Dataset handling: CSV loading in the ETT layout (leading `date` column,
//! one column per channel), the catalog of known benchmark datasets,
//! chronological splitting, train-statistics standardization, sliding-window
//! sampling, and cross-channel correlation analysis.

use crate::error::{Error, Result};
use crate::preprocess;
use std::ops::Range;
use std::path::Path;

/// A loaded multivariate series, row-major `[rows, channels]`.
#[derive(Clone, Debug)]
pub struct RawDataset {
    /// File stem, used for catalog lookups.
    pub name: String,
    pub channel_names: Vec<String>,
    pub values: Vec<f64>,
    pub rows: usize,
    pub channels: usize,
    /// Non-fatal observations from loading, e.g. catalog size mismatches.
    pub warnings: Vec<String>,
}

/// Catalog entry for a known benchmark dataset.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DatasetInfo {
    pub name: &'static str,
    pub rows: usize,
    pub channels: usize,
    pub ratio: SplitRatio,
}

/// Chronological split proportions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct SplitRatio {
    pub train: u32,
    pub val: u32,
    pub test: u32,
}

impl SplitRatio {
    pub const ETT: SplitRatio = SplitRatio { train: 6, val: 2, test: 2 };
    pub const DEFAULT: SplitRatio = SplitRatio { train: 7, val: 1, test: 2 };

    pub fn sum(&self) -> u32 {
        self.train + self.val + self.test
    }
}

const CATALOG: &[DatasetInfo] = &[
    DatasetInfo { name: "ETTh1", rows: 17420, channels: 7, ratio: SplitRatio::ETT },
    DatasetInfo { name: "ETTh2", rows: 17420, channels: 7, ratio: SplitRatio::ETT },
    DatasetInfo { name: "ETTm1", rows: 69680, channels: 7, ratio: SplitRatio::ETT },
    DatasetInfo { name: "ETTm2", rows: 69680, channels: 7, ratio: SplitRatio::ETT },
    DatasetInfo { name: "electricity", rows: 26304, channels: 321, ratio: SplitRatio::DEFAULT },
    DatasetInfo { name: "traffic", rows: 17544, channels: 862, ratio: SplitRatio::DEFAULT },
    DatasetInfo { name: "weather", rows: 52696, channels: 21, ratio: SplitRatio::DEFAULT },
    DatasetInfo { name: "illness", rows: 966, channels: 7, ratio: SplitRatio::DEFAULT },
];

/// The known benchmark datasets with their sizes and split conventions.
pub fn catalog() -> &'static [DatasetInfo] {
    CATALOG
}

/// Case-insensitive catalog lookup by dataset name (file stem).
pub fn catalog_lookup(name: &str) -> Option<&'static DatasetInfo> {
    CATALOG.iter().find(|d| d.name.eq_ignore_ascii_case(name))
}

fn csv_to_io(e: csv::Error) -> std::io::Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => io,
        other => std::io::Error::other(format!("{other:?}")),
    }
}

/// Load a CSV in the ETT layout. The first header cell must be `date`; every
/// other column is a channel. Cell positions in errors are 1-based, with the
/// header as row 1.
pub fn load_csv(path: &Path) -> Result<RawDataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| Error::io(format!("open {}", path.display()), csv_to_io(e)))?;
    let headers = reader
        .headers()
        .map_err(|e| Error::io(format!("read header of {}", path.display()), csv_to_io(e)))?
        .clone();
    if headers.is_empty() || !headers[0].eq_ignore_ascii_case("date") {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            row: 1,
            column: 1,
            message: format!(
                "expected a leading 'date' column, found '{}'",
                headers.get(0).unwrap_or("")
            ),
        });
    }
    if headers.len() < 2 {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            row: 1,
            column: 1,
            message: "no channel columns after 'date'".into(),
        });
    }
    let channel_names: Vec<String> = headers.iter().skip(1).map(str::to_string).collect();
    let channels = channel_names.len();
    let mut values = Vec::new();
    let mut rows = 0usize;
    for (i, record) in reader.records().enumerate() {
        let file_row = i + 2;
        let record = record.map_err(|e| match e.kind() {
            csv::ErrorKind::UnequalLengths { len, .. } => Error::Parse {
                path: path.to_path_buf(),
                row: file_row,
                column: *len as usize + 1,
                message: format!("expected {} fields, found {}", channels + 1, len),
            },
            _ => Error::io(format!("read {}", path.display()), csv_to_io(e)),
        })?;
        for (c, field) in record.iter().enumerate().skip(1) {
            let v: f64 = field.trim().parse().map_err(|_| Error::Parse {
                path: path.to_path_buf(),
                row: file_row,
                column: c + 1,
                message: format!("'{field}' is not a number"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    row: file_row,
                    column: c + 1,
                    message: format!("value {v} is not finite"),
                });
            }
            values.push(v);
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(Error::EmptyDataset(format!("{} has no data rows", path.display())));
    }
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let mut warnings = Vec::new();
    if let Some(info) = catalog_lookup(&name) {
        if info.rows != rows || info.channels != channels {
            warnings.push(format!(
                "dataset '{}' is cataloged as {} rows x {} channels, file has {} rows x {} channels",
                info.name, info.rows, info.channels, rows, channels
            ));
        }
    }
    Ok(RawDataset {
        name,
        channel_names,
        values,
        rows,
        channels,
        warnings,
    })
}

/// Row ranges of a chronological split.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Splits {
    pub train: Range<usize>,
    pub val: Range<usize>,
    pub test: Range<usize>,
}

/// Split `rows` chronologically. Boundaries are `rows·train/sum` and
/// `rows·(train+val)/sum` in integer arithmetic; the test split runs to the
/// end.
pub fn chronological_split(rows: usize, ratio: SplitRatio) -> Result<Splits> {
    let sum = ratio.sum() as usize;
    if sum == 0 || ratio.train == 0 {
        return Err(Error::InvalidArgument(format!(
            "split ratio {}:{}:{} has no training share",
            ratio.train, ratio.val, ratio.test
        )));
    }
    let b1 = rows * ratio.train as usize / sum;
    let b2 = rows * (ratio.train + ratio.val) as usize / sum;
    if b1 == 0 {
        return Err(Error::EmptyDataset(format!(
            "{rows} rows leave an empty training split at ratio {}:{}:{}",
            ratio.train, ratio.val, ratio.test
        )));
    }
    Ok(Splits {
        train: 0..b1,
        val: b1..b2,
        test: b2..rows,
    })
}

/// Per-channel location/scale computed on the training rows.
#[derive(Clone, Debug, PartialEq)]
pub struct Standardization {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardization {
    /// Fit on the first `train_rows` rows of row-major `[rows, channels]`
    /// data. Uses the population standard deviation; a channel whose spread
    /// is below 1e-8 gets scale 1 so constant channels pass through.
    pub fn fit(values: &[f64], rows: usize, channels: usize, train_rows: usize) -> Result<Self> {
        if train_rows == 0 {
            return Err(Error::EmptyDataset("standardization over zero training rows".into()));
        }
        if train_rows > rows || values.len() != rows * channels {
            return Err(Error::ShapeMismatch(format!(
                "standardization: {rows} rows x {channels} channels with {} values, train_rows {train_rows}",
                values.len()
            )));
        }
        let mut mean = vec![0.0; channels];
        let mut std = vec![0.0; channels];
        for c in 0..channels {
            let mut sum = 0.0;
            for r in 0..train_rows {
                sum += values[r * channels + c];
            }
            let mu = sum / train_rows as f64;
            let mut sq = 0.0;
            for r in 0..train_rows {
                let d = values[r * channels + c] - mu;
                sq += d * d;
            }
            let sigma = (sq / train_rows as f64).sqrt();
            mean[c] = mu;
            std[c] = if sigma < 1e-8 { 1.0 } else { sigma };
        }
        Ok(Standardization { mean, std })
    }

    /// Map values to standardized units in place.
    pub fn apply(&self, values: &mut [f64], channels: usize) {
        debug_assert_eq!(channels, self.mean.len());
        for (i, v) in values.iter_mut().enumerate() {
            let c = i % channels;
            *v = (*v - self.mean[c]) / self.std[c];
        }
    }

    /// Map standardized values back to original units in place.
    pub fn invert(&self, values: &mut [f64], channels: usize) {
        debug_assert_eq!(channels, self.mean.len());
        for (i, v) in values.iter_mut().enumerate() {
            let c = i % channels;
            *v = *v * self.std[c] + self.mean[c];
        }
    }
}

/// Fit on the training rows and standardize the whole array in place.
pub fn standardize(
    values: &mut [f64],
    rows: usize,
    channels: usize,
    train_rows: usize,
) -> Result<Standardization> {
    let stats = Standardization::fit(values, rows, channels, train_rows)?;
    stats.apply(values, channels);
    Ok(stats)
}

/// Number of sliding windows of total span `lookback + horizon` that fit in
/// `len` rows at the given stride.
pub fn window_count(len: usize, lookback: usize, horizon: usize, stride: usize) -> usize {
    let span = lookback + horizon;
    if stride == 0 || len < span {
        return 0;
    }
    (len - span) / stride + 1
}

/// Sliding windows over one contiguous split of a dataset. Each window is a
/// `lookback`-row input paired with the following `horizon` rows as target;
/// windows never leave the split.
#[derive(Clone, Debug)]
pub struct WindowSet {
    values: Vec<f64>,
    channels: usize,
    lookback: usize,
    horizon: usize,
    starts: Vec<usize>,
}

impl WindowSet {
    /// Build windows over `range` of row-major `[rows, channels]` data.
    pub fn from_split(
        values: &[f64],
        rows: usize,
        channels: usize,
        range: Range<usize>,
        lookback: usize,
        horizon: usize,
        stride: usize,
    ) -> Result<WindowSet> {
        if values.len() != rows * channels {
            return Err(Error::ShapeMismatch(format!(
                "window sampler: {rows} rows x {channels} channels but {} values",
                values.len()
            )));
        }
        if range.end > rows || range.start > range.end {
            return Err(Error::InvalidArgument(format!(
                "window sampler: split {range:?} out of bounds for {rows} rows"
            )));
        }
        if stride == 0 {
            return Err(Error::InvalidArgument("window stride must be positive".into()));
        }
        if lookback == 0 || horizon == 0 {
            return Err(Error::InvalidArgument(
                "window sampler needs positive lookback and horizon".into(),
            ));
        }
        let len = range.len();
        let count = window_count(len, lookback, horizon, stride);
        let starts: Vec<usize> = (0..count).map(|i| i * stride).collect();
        let slice = &values[range.start * channels..range.end * channels];
        Ok(WindowSet {
            values: slice.to_vec(),
            channels,
            lookback,
            horizon,
            starts,
        })
    }

    pub fn len(&self) -> usize {
        self.starts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.starts.is_empty()
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn lookback(&self) -> usize {
        self.lookback
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// Assemble the windows at `idxs` as channel-major batches: the input is
    /// `[channels·B, lookback]` and the target `[channels·B, horizon]`, with
    /// row `d·B + b` holding channel `d` of window `idxs[b]`.
    pub fn batch(&self, idxs: &[usize]) -> (Vec<f64>, Vec<f64>) {
        let b = idxs.len();
        let (d, l, t) = (self.channels, self.lookback, self.horizon);
        let mut x = vec![0.0; d * b * l];
        let mut y = vec![0.0; d * b * t];
        for (bi, &wi) in idxs.iter().enumerate() {
            let s = self.starts[wi];
            for ch in 0..d {
                let xrow = (ch * b + bi) * l;
                for step in 0..l {
                    x[xrow + step] = self.values[(s + step) * d + ch];
                }
                let yrow = (ch * b + bi) * t;
                for step in 0..t {
                    y[yrow + step] = self.values[(s + l + step) * d + ch];
                }
            }
        }
        (x, y)
    }
}

/// Per-channel moving-average decomposition of row-major `[rows, channels]`
/// data into `(trend, seasonal)` with `trend + seasonal == input`.
pub fn trend_seasonal_components(
    values: &[f64],
    rows: usize,
    channels: usize,
    kernel: usize,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if values.len() != rows * channels {
        return Err(Error::ShapeMismatch(format!(
            "decomposition: {rows} rows x {channels} channels but {} values",
            values.len()
        )));
    }
    if rows == 0 {
        return Err(Error::EmptyDataset("decomposition of an empty series".into()));
    }
    if kernel == 0 || kernel % 2 == 0 {
        return Err(Error::InvalidArgument(format!(
            "moving-average kernel must be odd and positive, got {kernel}"
        )));
    }
    if kernel > 2 * rows - 1 {
        return Err(Error::InvalidArgument(format!(
            "moving-average kernel {kernel} too large for {rows} rows"
        )));
    }
    let mut trend_out = vec![0.0; values.len()];
    let mut seasonal_out = vec![0.0; values.len()];
    let mut series = vec![0.0; rows];
    for c in 0..channels {
        for r in 0..rows {
            series[r] = values[r * channels + c];
        }
        let trend = preprocess::moving_average(&series, 1, rows, kernel);
        for r in 0..rows {
            trend_out[r * channels + c] = trend[r];
            seasonal_out[r * channels + c] = series[r] - trend[r];
        }
    }
    Ok((trend_out, seasonal_out))
}

/// Seasonal component of row-major `[rows, channels]` data: each channel
/// minus its centered moving average (edge-replicated), with the same odd
/// `kernel` used by the model's decomposition.
pub fn seasonal_component(values: &[f64], rows: usize, channels: usize, kernel: usize) -> Result<Vec<f64>> {
    trend_seasonal_components(values, rows, channels, kernel).map(|(_, seasonal)| seasonal)
}

/// Mean absolute cross-channel Pearson correlation.
#[derive(Clone, Debug, PartialEq)]
pub struct CorrelationReport {
    /// Mean of `|ρ|` over all unordered channel pairs with spread.
    pub macc: f64,
    /// Full `[channels, channels]` matrix of `|ρ|`, row-major. Entries for
    /// excluded channels are NaN; the diagonal of usable channels is 1.
    pub matrix: Vec<f64>,
    /// Channels excluded for having (numerically) zero variance.
    pub excluded: Vec<usize>,
}

/// Compute the mean absolute correlation across channels of row-major
/// `[rows, channels]` data. Channels without spread are excluded and
/// reported; fewer than two usable channels is an error.
pub fn channel_correlation(values: &[f64], rows: usize, channels: usize) -> Result<CorrelationReport> {
    if values.len() != rows * channels {
        return Err(Error::ShapeMismatch(format!(
            "correlation: {rows} rows x {channels} channels but {} values",
            values.len()
        )));
    }
    if channels < 2 {
        return Err(Error::InvalidArgument(format!(
            "analysis requires at least 2 channels, got {channels}"
        )));
    }
    if rows < 2 {
        return Err(Error::InvalidArgument(format!(
            "analysis requires at least 2 rows, got {rows}"
        )));
    }
    let mut centered = vec![0.0; channels * rows];
    let mut stds = vec![0.0; channels];
    let mut excluded = Vec::new();
    let mut kept = Vec::new();
    for c in 0..channels {
        let mut sum = 0.0;
        for r in 0..rows {
            sum += values[r * channels + c];
        }
        let mu = sum / rows as f64;
        let mut sq = 0.0;
        for r in 0..rows {
            let d = values[r * channels + c] - mu;
            centered[c * rows + r] = d;
            sq += d * d;
        }
        let sigma = (sq / rows as f64).sqrt();
        stds[c] = sigma;
        if sigma <= 1e-12 * mu.abs().max(1.0) {
            excluded.push(c);
        } else {
            kept.push(c);
        }
    }
    if kept.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "analysis requires at least 2 channels with spread; {} of {channels} channels are constant",
            excluded.len()
        )));
    }
    let mut matrix = vec![f64::NAN; channels * channels];
    for &i in &kept {
        matrix[i * channels + i] = 1.0;
    }
    let mut total = 0.0;
    let mut pairs = 0usize;
    for (a, &i) in kept.iter().enumerate() {
        for &j in kept.iter().skip(a + 1) {
            let mut cov = 0.0;
            let (ci, cj) = (&centered[i * rows..(i + 1) * rows], &centered[j * rows..(j + 1) * rows]);
            for r in 0..rows {
                cov += ci[r] * cj[r];
            }
            let rho = cov / rows as f64 / (stds[i] * stds[j]);
            matrix[i * channels + j] = rho.abs();
            matrix[j * channels + i] = rho.abs();
            total += rho.abs();
            pairs += 1;
        }
    }
    Ok(CorrelationReport {
        macc: total / pairs as f64,
        matrix,
        excluded,
    })
}

/// Cross-channel correlation of a series and of its decomposed parts.
#[derive(Clone, Debug, PartialEq)]
pub struct CorrelationAnalysis {
    pub raw: CorrelationReport,
    pub seasonal: CorrelationReport,
    pub trend: CorrelationReport,
}

/// Correlation structure of row-major `[rows, channels]` data before and
/// after moving-average decomposition (odd `ma_kernel`). A seasonal
/// correlation at or above the raw one indicates channels share periodic
/// structure worth modeling jointly.
pub fn correlation_analysis(
    values: &[f64],
    rows: usize,
    channels: usize,
    ma_kernel: usize,
) -> Result<CorrelationAnalysis> {
    let raw = channel_correlation(values, rows, channels)?;
    let (trend, seasonal) = trend_seasonal_components(values, rows, channels, ma_kernel)?;
    Ok(CorrelationAnalysis {
        raw,
        seasonal: channel_correlation(&seasonal, rows, channels)?,
        trend: channel_correlation(&trend, rows, channels)?,
    })
}
