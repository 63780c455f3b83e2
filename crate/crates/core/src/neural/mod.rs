//! Neural mask estimators, their weight files, complexity accounting and
//! mask application.

use std::fmt;
use std::path::Path;

use crate::bands::{FeatureFrame, MaskFrame};
use crate::error::{Error, Result};
use crate::frames::ComplexSpectrum;

pub mod gru;
pub mod unet;
pub mod weights;

pub use gru::GruModel;
pub use unet::UnetModel;
pub use weights::{Tensor, TensorSpec, WeightFile};

/// Default attenuation limit applied to neural masks.
pub const NEURAL_MAX_ATTEN_DB: f64 = 15.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelKind {
    Gru,
    Unet,
}

impl ModelKind {
    pub fn code(self) -> u8 {
        match self {
            ModelKind::Gru => 0,
            ModelKind::Unet => 1,
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::Gru => "gru",
            ModelKind::Unet => "unet",
        })
    }
}

/// Frame-synchronous mask estimation with per-stream state.
pub trait Layer {
    /// Consumes one feature frame and advances the state by one frame.
    fn step(&mut self, features: &FeatureFrame) -> Result<MaskFrame>;
    /// Returns the streaming state to its initial zeros.
    fn reset(&mut self);
}

#[inline]
pub(crate) fn sigmoid(x: f32) -> f32 {
    1.0 / (1.0 + (-x).exp())
}

/// A loaded network with its streaming state.
/// The engine boxes it, so the variant size gap does not matter.
#[allow(clippy::large_enum_variant)]
#[derive(Debug, Clone)]
pub enum Model {
    Gru(GruModel),
    Unet(UnetModel),
}

impl Model {
    pub fn from_weights(file: &WeightFile) -> Result<Self> {
        file.validate()?;
        Ok(match file.kind {
            ModelKind::Gru => Model::Gru(GruModel::from_weights(file)?),
            ModelKind::Unet => Model::Unet(UnetModel::from_weights(file)?),
        })
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            Model::Gru(_) => ModelKind::Gru,
            Model::Unet(_) => ModelKind::Unet,
        }
    }

    /// Run a sequence through the whole-sequence evaluation path.
    pub fn forward_batch(&mut self, frames: &[FeatureFrame]) -> Result<Vec<MaskFrame>> {
        match self {
            Model::Gru(m) => m.forward_batch(frames),
            Model::Unet(m) => m.forward_batch(frames),
        }
    }
}

impl Layer for Model {
    fn step(&mut self, features: &FeatureFrame) -> Result<MaskFrame> {
        match self {
            Model::Gru(m) => m.step(features),
            Model::Unet(m) => m.step(features),
        }
    }

    fn reset(&mut self) {
        match self {
            Model::Gru(m) => m.reset(),
            Model::Unet(m) => m.reset(),
        }
    }
}

/// Reads and validates a weight file, returning a model with zeroed state.
pub fn load_weights(path: impl AsRef<Path>) -> Result<Model> {
    Model::from_weights(&WeightFile::read(path)?)
}

/// Trainable parameters of a model kind, from its tensor schema.
pub fn count_params(kind: ModelKind) -> u64 {
    weights::schema(kind).iter().map(|t| t.numel() as u64).sum()
}

pub fn count_macs_per_frame(kind: ModelKind) -> u64 {
    match kind {
        ModelKind::Gru => gru::MACS_PER_FRAME,
        ModelKind::Unet => unet::macs_per_frame(),
    }
}

pub fn count_macs_per_second(kind: ModelKind, frame_rate: u32) -> u64 {
    count_macs_per_frame(kind) * frame_rate as u64
}

/// Multiplies each bin by `max(gain, 10^(-max_atten_db / 20))`.
pub fn apply_mask(
    spec: &ComplexSpectrum,
    gains: &[f64],
    max_atten_db: f64,
) -> Result<ComplexSpectrum> {
    if gains.len() != spec.len() {
        return Err(Error::usage(format!(
            "{} gains for a {}-bin spectrum",
            gains.len(),
            spec.len()
        )));
    }
    if let Some(k) = gains.iter().position(|g| !(0.0..=1.0).contains(g)) {
        return Err(Error::usage(format!(
            "gain {} at bin {k} outside [0, 1]",
            gains[k]
        )));
    }
    let floor = crate::suppressor::db_to_gain_floor(max_atten_db);
    let mut out = spec.clone();
    for (b, g) in out.bins.iter_mut().zip(gains) {
        *b *= g.max(floor);
    }
    Ok(out)
}

/// Human-readable summary of a weight file.
pub fn describe(file: &WeightFile, frame_rate: u32) -> String {
    use std::fmt::Write;
    let mut s = String::new();
    let _ = writeln!(s, "kind\t{}", file.kind);
    let _ = writeln!(s, "tensors\t{}", file.tensors.len());
    let _ = writeln!(s, "name\tdims\tcount");
    for t in &file.tensors {
        let dims: Vec<String> = t.dims.iter().map(|d| d.to_string()).collect();
        let _ = writeln!(s, "{}\t{}\t{}", t.name, dims.join("x"), t.data.len());
    }
    let _ = writeln!(s, "params\t{}", file.param_count());
    let _ = writeln!(s, "macs_per_frame\t{}", count_macs_per_frame(file.kind));
    let _ = writeln!(
        s,
        "macs_per_second\t{}",
        count_macs_per_second(file.kind, frame_rate)
    );
    s
}
