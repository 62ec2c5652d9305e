//! TFDNet: a time-frequency domain forecasting engine for long-term
//! multivariate time series.
//!
//! The model normalizes each input window per instance, splits it into trend
//! and seasonal components with a moving average, maps each component into
//! the time-frequency domain with multi-scale short-time Fourier transforms,
//! applies learnable complex-valued kernels per frequency bin together with a
//! frequency-axis feed-forward layer, inverts the transforms, fuses the
//! scales, and projects the fused series onto the forecast horizon with a
//! shared linear head. Training uses reverse-mode differentiation over an
//! eager tape, Adam with cosine learning-rate decay, and a mixture L1/L2
//! loss.
//!
//! Modules:
//! - [`autodiff`]: the tensor tape (real tensors; complex values as pairs).
//! - [`signal`]: STFT and inverse STFT with exact round-trip.
//! - [`preprocess`]: instance normalization and seasonal-trend decomposition.
//! - [`model`]: the TFDNet blocks and full forward pass.
//! - [`train`]: loss, optimizer, training loop, evaluation, baselines.
//! - [`data`]: CSV ingestion, chronological splits, windowing, correlation.
//! - [`checkpoint`]: binary model serialization.

pub mod autodiff;
pub mod checkpoint;
pub mod data;
pub mod error;
pub mod model;
pub mod preprocess;
pub mod signal;
pub mod train;

pub use error::{Error, Result};
