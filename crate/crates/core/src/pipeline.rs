//! Per-stream processing: framing, mask estimation and overlap-add.

use std::fmt;
use std::str::FromStr;

use crate::audio::AudioBuffer;
use crate::bands::{compress, expand_mask, make_layout, BandLayout};
use crate::error::{Error, Result};
use crate::frames::{
    design_windows, latency_samples, Analyzer, ComplexSpectrum, Synthesizer, WindowConfig,
    WindowPair,
};
use crate::neural::{apply_mask, Layer, Model};
use crate::resample::{resample_2x, Direction};
use crate::suppressor::{Suppressor, SuppressorConfig};
use crate::PROCESSING_RATE;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EngineKind {
    Baseline,
    Gru,
    Unet,
}

impl EngineKind {
    pub fn is_neural(self) -> bool {
        !matches!(self, EngineKind::Baseline)
    }

    /// Attenuation limit used when none is configured.
    pub fn default_max_atten_db(self) -> f64 {
        match self {
            EngineKind::Baseline => SuppressorConfig::default().max_atten_db,
            _ => crate::neural::NEURAL_MAX_ATTEN_DB,
        }
    }
}

impl fmt::Display for EngineKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EngineKind::Baseline => "baseline",
            EngineKind::Gru => "gru",
            EngineKind::Unet => "unet",
        })
    }
}

impl FromStr for EngineKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "baseline" => Ok(EngineKind::Baseline),
            "gru" => Ok(EngineKind::Gru),
            "unet" => Ok(EngineKind::Unet),
            other => Err(Error::usage(format!(
                "unknown engine `{other}` (expected baseline, gru or unet)"
            ))),
        }
    }
}

/// Per-frame spectral modification.
#[derive(Debug, Clone)]
pub enum Engine {
    /// Unit mask; the filterbank alone.
    Identity,
    Baseline(Box<Suppressor>),
    Neural {
        model: Box<Model>,
        layout: BandLayout,
        max_atten_db: f64,
    },
}

impl Engine {
    pub fn baseline(cfg: SuppressorConfig) -> Result<Self> {
        Ok(Engine::Baseline(Box::new(Suppressor::new(
            cfg,
            crate::NUM_BINS,
        )?)))
    }

    pub fn neural(model: Model, max_atten_db: f64) -> Result<Self> {
        if !(max_atten_db.is_finite() && max_atten_db >= 0.0) {
            return Err(Error::config(format!(
                "max attenuation {max_atten_db} dB must be finite and non-negative"
            )));
        }
        Ok(Engine::Neural {
            model: Box::new(model),
            layout: make_layout(),
            max_atten_db,
        })
    }

    pub fn kind(&self) -> Option<EngineKind> {
        match self {
            Engine::Identity => None,
            Engine::Baseline(_) => Some(EngineKind::Baseline),
            Engine::Neural { model, .. } => Some(match model.kind() {
                crate::ModelKind::Gru => EngineKind::Gru,
                crate::ModelKind::Unet => EngineKind::Unet,
            }),
        }
    }

    /// Enhances one frame, advancing the engine state.
    pub fn process(&mut self, spec: &ComplexSpectrum) -> Result<ComplexSpectrum> {
        match self {
            Engine::Identity => Ok(spec.clone()),
            Engine::Baseline(s) => Ok(s.suppress_frame(spec)?.1),
            Engine::Neural {
                model,
                layout,
                max_atten_db,
            } => {
                let features = compress(&spec.magnitudes(), layout)?;
                let mask = model.step(&features)?.clamped();
                let gains = expand_mask(&mask, layout)?;
                apply_mask(spec, &gains, *max_atten_db)
            }
        }
    }

    pub fn reset(&mut self) -> Result<()> {
        match self {
            Engine::Identity => {}
            Engine::Baseline(s) => **s = Suppressor::new(s.config().clone(), s.noise_psd().len())?,
            Engine::Neural { model, .. } => model.reset(),
        }
        Ok(())
    }
}

/// Streaming enhancer for one signal at the processing rate. Each call to
/// [`StreamProcessor::process_hop`] consumes and produces one hop; output
/// lags input by [`StreamProcessor::latency`] samples.
pub struct StreamProcessor {
    wp: WindowPair,
    analyzer: Analyzer,
    synthesizer: Synthesizer,
    engine: Engine,
    frame: Vec<f64>,
    spec: ComplexSpectrum,
}

impl StreamProcessor {
    pub fn new(engine: Engine) -> Result<Self> {
        Self::with_windows(engine, design_windows(&WindowConfig::default())?)
    }

    pub fn with_windows(engine: Engine, wp: WindowPair) -> Result<Self> {
        if wp.num_bins() != crate::NUM_BINS && !matches!(engine, Engine::Identity) {
            return Err(Error::config(format!(
                "engines need a {}-bin filterbank, windows give {}",
                crate::NUM_BINS,
                wp.num_bins()
            )));
        }
        Ok(Self {
            analyzer: Analyzer::new(&wp),
            synthesizer: Synthesizer::new(&wp),
            frame: vec![0.0; wp.analysis_len()],
            spec: ComplexSpectrum::zeros(wp.num_bins()),
            engine,
            wp,
        })
    }

    pub fn hop(&self) -> usize {
        self.wp.hop
    }

    pub fn latency(&self) -> usize {
        latency_samples(&self.wp)
    }

    pub fn windows(&self) -> &WindowPair {
        &self.wp
    }

    pub fn engine(&self) -> &Engine {
        &self.engine
    }

    pub fn process_hop(&mut self, input: &[f64], output: &mut [f64]) -> Result<()> {
        let hop = self.wp.hop;
        if input.len() != hop || output.len() != hop {
            return Err(Error::usage(format!(
                "hop buffers have {} and {} samples, expected {hop}",
                input.len(),
                output.len()
            )));
        }
        if let Some(i) = input.iter().position(|v| !v.is_finite()) {
            return Err(Error::usage(format!(
                "non-finite input sample at offset {i}"
            )));
        }
        self.frame.copy_within(hop.., 0);
        let n = self.frame.len();
        self.frame[n - hop..].copy_from_slice(input);
        self.analyzer.analyze_into(&self.frame, &mut self.spec)?;
        let enhanced = self.engine.process(&self.spec)?;
        self.synthesizer.synthesize_into(&enhanced, output)
    }

    /// Streams `x` through, zero-padding the last hop. The output is delayed
    /// by the latency and has the padded length.
    pub fn process(&mut self, x: &[f64]) -> Result<Vec<f64>> {
        let hop = self.wp.hop;
        let mut out = vec![0.0; x.len().div_ceil(hop) * hop];
        let mut chunk = vec![0.0; hop];
        for (k, o) in out.chunks_mut(hop).enumerate() {
            let src = &x[k * hop..((k + 1) * hop).min(x.len())];
            chunk[..src.len()].copy_from_slice(src);
            chunk[src.len()..].fill(0.0);
            self.process_hop(&chunk, o)?;
        }
        Ok(out)
    }

    /// Latency-compensated processing: pads the tail with zeros, drops the
    /// leading `latency` samples and returns exactly `x.len()` samples.
    pub fn enhance(&mut self, x: &[f64]) -> Result<Vec<f64>> {
        let latency = self.latency();
        let mut padded = x.to_vec();
        padded.resize(x.len() + latency, 0.0);
        let mut y = self.process(&padded)?;
        y.drain(..latency);
        y.truncate(x.len());
        Ok(y)
    }

    /// Clears the filterbank history and the engine state.
    pub fn reset(&mut self) -> Result<()> {
        self.frame.fill(0.0);
        self.synthesizer.reset();
        self.engine.reset()
    }
}

/// Enhances a whole buffer with a fresh stream. 16 kHz input is processed at
/// 32 kHz and brought back; the output has the input's rate and length.
pub fn enhance_buffer(audio: &AudioBuffer, engine: Engine) -> Result<AudioBuffer> {
    audio.validate()?;
    let mut proc = StreamProcessor::new(engine)?;
    if audio.sample_rate == PROCESSING_RATE {
        return Ok(AudioBuffer::new(
            proc.enhance(&audio.samples)?,
            PROCESSING_RATE,
        ));
    }
    let up = resample_2x(audio, Direction::Up);
    let y = AudioBuffer::new(proc.enhance(&up.samples)?, PROCESSING_RATE);
    let mut down = resample_2x(&y, Direction::Down);
    down.samples.truncate(audio.len());
    Ok(down)
}
