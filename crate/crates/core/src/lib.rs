//! Streaming single-channel speech enhancement.
//!
//! The processing chain is a low-delay filterbank ([`frames`]) with a 22.5 ms
//! analysis window and a 20 ms synthesis window, a 66-feature band compression
//! of the magnitude spectrum ([`bands`]), a time-frequency mask from either the
//! classical Wiener suppressor ([`suppressor`]) or one of two neural mask
//! estimators ([`neural`]), and overlap-add resynthesis. [`pipeline`] wires
//! these into a per-stream processor.
//!
//! [`mixture`] generates SNR-controlled training/test mixtures and [`metrics`]
//! scores enhanced output with SDR and STOI.

pub mod audio;
pub mod bands;
mod error;
pub mod frames;
pub mod metrics;
pub mod mixture;
pub mod neural;
pub mod pipeline;
pub mod resample;
pub mod suppressor;

pub use audio::AudioBuffer;
pub use bands::{BandLayout, FeatureFrame, MaskFrame};
pub use error::{Error, Result};
pub use frames::{ComplexSpectrum, WindowConfig, WindowPair};
pub use neural::{Model, ModelKind};
pub use pipeline::{Engine, EngineKind, StreamProcessor};
pub use suppressor::{Suppressor, SuppressorConfig};

/// Internal processing rate of the filterbank and all models.
pub const PROCESSING_RATE: u32 = 32_000;

/// Number of one-sided bins of the 1024-point FFT.
pub const NUM_BINS: usize = 513;

/// Frames per second at the default 10 ms hop.
pub const FRAME_RATE: u32 = 100;
