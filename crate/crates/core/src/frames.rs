//! Low-delay analysis/synthesis filterbank.
//!
//! The analysis window is longer than the synthesis window. A frame holds the
//! newest `analysis_len` input samples, is weighted by the analysis window and
//! left-padded with zeros to the FFT length, so the newest sample always sits
//! at the last FFT position. Resynthesis keeps only the last `synthesis_len`
//! samples of the inverse transform, weights them by the synthesis window and
//! overlap-adds at a hop of half the synthesis length.
//!
//! The analysis window rises as a square-root Hann half of length
//! `analysis_len - hop` and falls as a square-root Hann half of length `hop`.
//! The synthesis window is chosen so that the product of the two windows over
//! the synthesis support is a periodic Hann window of `synthesis_len`, which
//! sums to one at 50% overlap.

use std::fmt;
use std::sync::Arc;

pub use realfft::num_complex::Complex64;
use realfft::{ComplexToReal, RealFftPlanner, RealToComplex};

use crate::error::{Error, Result};

/// Maximum tolerated deviation of the overlap-added window product from one.
pub const COLA_TOLERANCE: f64 = 1e-10;

/// Parameters for [`design_windows`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowConfig {
    pub sample_rate: u32,
    pub analysis_ms: f64,
    pub synthesis_ms: f64,
    pub hop_ms: f64,
    pub fft_len: usize,
}

impl Default for WindowConfig {
    fn default() -> Self {
        Self {
            sample_rate: 32_000,
            analysis_ms: 22.5,
            synthesis_ms: 20.0,
            hop_ms: 10.0,
            fft_len: 1024,
        }
    }
}

/// Analysis and synthesis windows for one filterbank configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowPair {
    pub analysis: Vec<f64>,
    pub synthesis: Vec<f64>,
    pub hop: usize,
    pub fft_len: usize,
}

impl WindowPair {
    pub fn analysis_len(&self) -> usize {
        self.analysis.len()
    }

    pub fn synthesis_len(&self) -> usize {
        self.synthesis.len()
    }

    pub fn num_bins(&self) -> usize {
        self.fft_len / 2 + 1
    }

    /// Offset of the synthesis support inside the analysis frame.
    pub fn synthesis_offset(&self) -> usize {
        self.analysis.len() - self.synthesis.len()
    }

    /// Product of the two windows over one analysis frame; zero before the
    /// synthesis support starts.
    pub fn product(&self) -> Vec<f64> {
        let off = self.synthesis_offset();
        self.analysis
            .iter()
            .enumerate()
            .map(|(i, a)| {
                if i < off {
                    0.0
                } else {
                    a * self.synthesis[i - off]
                }
            })
            .collect()
    }

    /// Largest steady-state deviation of the overlap-added window product from one.
    pub fn cola_residual(&self) -> f64 {
        let product = self.product();
        (0..self.hop)
            .map(|n| {
                let sum: f64 = product.iter().skip(n).step_by(self.hop).sum();
                (sum - 1.0).abs()
            })
            .fold(0.0, f64::max)
    }
}

fn samples_for(ms: f64, sample_rate: u32, what: &str) -> Result<usize> {
    let exact = ms * sample_rate as f64 / 1000.0;
    let rounded = exact.round();
    if (exact - rounded).abs() > 1e-9 || rounded < 1.0 {
        return Err(Error::config(format!(
            "{what} of {ms} ms is not a positive whole number of samples at {sample_rate} Hz"
        )));
    }
    Ok(rounded as usize)
}

/// Builds the asymmetric window pair and checks the overlap-add condition.
pub fn design_windows(cfg: &WindowConfig) -> Result<WindowPair> {
    let analysis_len = samples_for(cfg.analysis_ms, cfg.sample_rate, "analysis window")?;
    let synthesis_len = samples_for(cfg.synthesis_ms, cfg.sample_rate, "synthesis window")?;
    let hop = samples_for(cfg.hop_ms, cfg.sample_rate, "hop")?;

    if analysis_len < synthesis_len {
        return Err(Error::config(format!(
            "analysis window ({analysis_len} samples) must not be shorter than synthesis window ({synthesis_len} samples)"
        )));
    }
    if synthesis_len != 2 * hop {
        return Err(Error::config(format!(
            "hop ({hop} samples) must split the synthesis window ({synthesis_len} samples) into two equal halves"
        )));
    }
    if analysis_len > cfg.fft_len {
        return Err(Error::config(format!(
            "analysis window ({analysis_len} samples) exceeds FFT length {}",
            cfg.fft_len
        )));
    }
    if !cfg.fft_len.is_multiple_of(2) {
        return Err(Error::config(format!(
            "FFT length {} must be even",
            cfg.fft_len
        )));
    }

    let rise_len = analysis_len - hop;
    let mut analysis = Vec::with_capacity(analysis_len);
    for n in 0..rise_len {
        analysis.push((std::f64::consts::PI * n as f64 / (2 * rise_len) as f64).sin());
    }
    for j in 0..hop {
        analysis.push((std::f64::consts::PI * j as f64 / (2 * hop) as f64).cos());
    }

    let offset = analysis_len - synthesis_len;
    let synthesis: Vec<f64> = (0..synthesis_len)
        .map(|m| {
            if m >= hop {
                analysis[offset + m]
            } else {
                let target = (std::f64::consts::PI * m as f64 / synthesis_len as f64)
                    .sin()
                    .powi(2);
                if target == 0.0 {
                    0.0
                } else {
                    target / analysis[offset + m]
                }
            }
        })
        .collect();

    let pair = WindowPair {
        analysis,
        synthesis,
        hop,
        fft_len: cfg.fft_len,
    };
    let residual = pair.cola_residual();
    if residual.is_nan() || residual >= COLA_TOLERANCE {
        return Err(Error::config(format!(
            "window product violates constant overlap-add (residual {residual:e})"
        )));
    }
    Ok(pair)
}

/// Algorithmic input-to-output delay of the filterbank in samples.
pub fn latency_samples(wp: &WindowPair) -> usize {
    wp.synthesis_len()
}

/// One-sided spectrum of a single frame.
#[derive(Clone, PartialEq)]
pub struct ComplexSpectrum {
    pub bins: Vec<Complex64>,
}

impl ComplexSpectrum {
    pub fn zeros(num_bins: usize) -> Self {
        Self {
            bins: vec![Complex64::new(0.0, 0.0); num_bins],
        }
    }

    pub fn len(&self) -> usize {
        self.bins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bins.is_empty()
    }

    pub fn magnitudes(&self) -> Vec<f64> {
        self.bins.iter().map(|c| c.norm()).collect()
    }

    pub fn power(&self) -> Vec<f64> {
        self.bins.iter().map(|c| c.norm_sqr()).collect()
    }

    /// Multiplies each bin by a real gain.
    pub fn scale(&mut self, gains: &[f64]) {
        debug_assert_eq!(gains.len(), self.bins.len());
        for (b, g) in self.bins.iter_mut().zip(gains) {
            *b *= *g;
        }
    }
}

impl fmt::Debug for ComplexSpectrum {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ComplexSpectrum")
            .field("num_bins", &self.bins.len())
            .finish()
    }
}

/// Forward transform of windowed frames.
pub struct Analyzer {
    window: Vec<f64>,
    fft: Arc<dyn RealToComplex<f64>>,
    input: Vec<f64>,
    scratch: Vec<Complex64>,
}

impl Analyzer {
    pub fn new(wp: &WindowPair) -> Self {
        let fft = RealFftPlanner::<f64>::new().plan_fft_forward(wp.fft_len);
        Self {
            window: wp.analysis.clone(),
            input: fft.make_input_vec(),
            scratch: fft.make_scratch_vec(),
            fft,
        }
    }

    /// Transforms the newest `analysis_len` samples (oldest first).
    pub fn analyze(&mut self, frame: &[f64]) -> Result<ComplexSpectrum> {
        let mut out = ComplexSpectrum::zeros(self.input.len() / 2 + 1);
        self.analyze_into(frame, &mut out)?;
        Ok(out)
    }

    pub fn analyze_into(&mut self, frame: &[f64], out: &mut ComplexSpectrum) -> Result<()> {
        if frame.len() != self.window.len() {
            return Err(Error::usage(format!(
                "analysis frame has {} samples, expected {}",
                frame.len(),
                self.window.len()
            )));
        }
        let pad = self.input.len() - frame.len();
        self.input[..pad].fill(0.0);
        for ((dst, x), w) in self.input[pad..].iter_mut().zip(frame).zip(&self.window) {
            *dst = x * w;
        }
        out.bins
            .resize(self.input.len() / 2 + 1, Complex64::new(0.0, 0.0));
        self.fft
            .process_with_scratch(&mut self.input, &mut out.bins, &mut self.scratch)
            .expect("buffer sizes fixed at construction");
        Ok(())
    }
}

/// Overlap-add state of one stream.
///
/// `overlap` carries the tail of the previous synthesis frame. `held` is the
/// hop that became final on the previous call; it is released one hop later,
/// at the point a real-time device could first play it out.
#[derive(Debug, Clone, PartialEq)]
pub struct OlaState {
    pub overlap: Vec<f64>,
    pub held: Vec<f64>,
    pub frames_emitted: u64,
}

impl OlaState {
    pub fn new(wp: &WindowPair) -> Self {
        Self {
            overlap: vec![0.0; wp.synthesis_len() - wp.hop],
            held: vec![0.0; wp.hop],
            frames_emitted: 0,
        }
    }
}

/// Inverse transform, synthesis windowing and overlap-add.
pub struct Synthesizer {
    window: Vec<f64>,
    hop: usize,
    ifft: Arc<dyn ComplexToReal<f64>>,
    spectrum: Vec<Complex64>,
    time: Vec<f64>,
    scratch: Vec<Complex64>,
    state: OlaState,
}

impl Synthesizer {
    pub fn new(wp: &WindowPair) -> Self {
        let ifft = RealFftPlanner::<f64>::new().plan_fft_inverse(wp.fft_len);
        Self {
            window: wp.synthesis.clone(),
            hop: wp.hop,
            spectrum: ifft.make_input_vec(),
            time: ifft.make_output_vec(),
            scratch: ifft.make_scratch_vec(),
            ifft,
            state: OlaState::new(wp),
        }
    }

    pub fn state(&self) -> &OlaState {
        &self.state
    }

    pub fn reset(&mut self) {
        self.state.overlap.fill(0.0);
        self.state.held.fill(0.0);
        self.state.frames_emitted = 0;
    }

    /// Consumes one frame spectrum and returns `hop` output samples.
    pub fn synthesize(&mut self, spec: &ComplexSpectrum) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.hop];
        self.synthesize_into(spec, &mut out)?;
        Ok(out)
    }

    pub fn synthesize_into(&mut self, spec: &ComplexSpectrum, out: &mut [f64]) -> Result<()> {
        if spec.len() != self.spectrum.len() {
            return Err(Error::usage(format!(
                "spectrum has {} bins, expected {}",
                spec.len(),
                self.spectrum.len()
            )));
        }
        if out.len() != self.hop {
            return Err(Error::usage(format!(
                "output chunk has {} samples, expected {}",
                out.len(),
                self.hop
            )));
        }
        self.spectrum.copy_from_slice(&spec.bins);
        // DC and Nyquist of a real signal are real.
        let last = self.spectrum.len() - 1;
        self.spectrum[0].im = 0.0;
        self.spectrum[last].im = 0.0;
        self.ifft
            .process_with_scratch(&mut self.spectrum, &mut self.time, &mut self.scratch)
            .expect("buffer sizes fixed at construction");

        let n = self.time.len();
        let norm = 1.0 / n as f64;
        let tail = &self.time[n - self.window.len()..];
        let hop = self.hop;

        out.copy_from_slice(&self.state.held);
        for (i, h) in self.state.held.iter_mut().enumerate() {
            *h = self.state.overlap[i] + tail[i] * self.window[i] * norm;
        }
        for (i, o) in self.state.overlap.iter_mut().enumerate() {
            *o = tail[hop + i] * self.window[hop + i] * norm;
        }
        self.state.frames_emitted += 1;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn default_pair() -> WindowPair {
        design_windows(&WindowConfig::default()).unwrap()
    }

    fn symmetric_cfg() -> WindowConfig {
        WindowConfig {
            analysis_ms: 20.0,
            ..WindowConfig::default()
        }
    }

    /// Runs a signal through analyze -> (gains) -> synthesize.
    fn run(wp: &WindowPair, x: &[f64], gain: impl Fn(usize) -> f64) -> Vec<f64> {
        let mut ana = Analyzer::new(wp);
        let mut syn = Synthesizer::new(wp);
        let mut frame = vec![0.0; wp.analysis_len()];
        let gains: Vec<f64> = (0..wp.num_bins()).map(gain).collect();
        let mut y = Vec::with_capacity(x.len());
        for chunk in x.chunks(wp.hop) {
            assert_eq!(chunk.len(), wp.hop);
            frame.rotate_left(wp.hop);
            let n = frame.len();
            frame[n - wp.hop..].copy_from_slice(chunk);
            let mut spec = ana.analyze(&frame).unwrap();
            spec.scale(&gains);
            y.extend(syn.synthesize(&spec).unwrap());
        }
        y
    }

    fn white(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| StandardNormal.sample(&mut rng))
            .collect::<Vec<f64>>()
    }

    #[test]
    fn default_lengths() {
        let wp = default_pair();
        assert_eq!(wp.analysis_len(), 720);
        assert_eq!(wp.synthesis_len(), 640);
        assert_eq!(wp.hop, 320);
        assert_eq!(wp.num_bins(), 513);
        assert!(wp.analysis.iter().chain(&wp.synthesis).all(|&w| w >= 0.0));
    }

    #[test]
    fn cola_residual_by_direct_summation() {
        // Independent of `cola_residual`: shift the two windows against an
        // explicit time axis and sum the products.
        let wp = default_pair();
        let (la, ls, r) = (720i64, 640i64, 320i64);
        let mut worst: f64 = 0.0;
        for n in 2000..2000 + r {
            let mut sum = 0.0;
            for k in 0..20i64 {
                // frame k ends at sample k*r + la - 1
                let start = k * r;
                let i = n - start;
                if i >= la - ls && i < la {
                    sum += wp.analysis[i as usize] * wp.synthesis[(i - (la - ls)) as usize];
                }
            }
            worst = worst.max((sum - 1.0).abs());
        }
        assert!(worst < 1e-10, "residual {worst:e}");
        assert!(wp.cola_residual() < 1e-10);
    }

    #[test]
    fn symmetric_config_is_sqrt_hann() {
        let wp = design_windows(&symmetric_cfg()).unwrap();
        assert_eq!(wp.analysis_len(), 640);
        for n in 0..640 {
            let sqrt_hann = (std::f64::consts::PI * n as f64 / 640.0).sin();
            assert!((wp.analysis[n] - sqrt_hann).abs() < 1e-12);
            assert!((wp.synthesis[n] - sqrt_hann).abs() < 1e-12);
        }
    }

    #[test]
    fn latency() {
        assert_eq!(latency_samples(&default_pair()), 640);
        assert_eq!(
            latency_samples(&design_windows(&symmetric_cfg()).unwrap()),
            640
        );
        let wide = WindowConfig {
            sample_rate: 16_000,
            ..WindowConfig::default()
        };
        assert_eq!(latency_samples(&design_windows(&wide).unwrap()), 320);
    }

    #[test]
    fn bad_configs_name_the_constraint() {
        let err = |cfg| design_windows(&cfg).unwrap_err().to_string();
        let e = err(WindowConfig {
            analysis_ms: 15.0,
            ..WindowConfig::default()
        });
        assert!(e.contains("must not be shorter"), "{e}");
        let e = err(WindowConfig {
            hop_ms: 5.0,
            ..WindowConfig::default()
        });
        assert!(e.contains("two equal halves"), "{e}");
        let e = err(WindowConfig {
            fft_len: 512,
            ..WindowConfig::default()
        });
        assert!(e.contains("exceeds FFT length"), "{e}");
        let e = err(WindowConfig {
            analysis_ms: 22.51,
            ..WindowConfig::default()
        });
        assert!(e.contains("whole number"), "{e}");
    }

    #[test]
    fn zero_frame_gives_zero_spectrum() {
        let wp = default_pair();
        let spec = Analyzer::new(&wp).analyze(&[0.0; 720]).unwrap();
        assert!(spec.bins.iter().all(|c| c.norm() == 0.0));
        assert_eq!(spec.len(), 513);
    }

    #[test]
    fn wrong_frame_length_is_usage_error() {
        let wp = default_pair();
        assert!(matches!(
            Analyzer::new(&wp).analyze(&[0.0; 719]),
            Err(Error::Usage(_))
        ));
    }

    #[test]
    fn bin_centered_cosine_peaks_at_its_bin() {
        let wp = default_pair();
        let frame: Vec<f64> = (0..720)
            .map(|n| (2.0 * std::f64::consts::PI * 10.0 * n as f64 / 1024.0).cos())
            .collect();
        let mag = Analyzer::new(&wp).analyze(&frame).unwrap().magnitudes();
        let peak = mag
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0;
        assert_eq!(peak, 10);
    }

    #[test]
    fn impulse_at_newest_sample_is_flat() {
        let wp = default_pair();
        let mut frame = vec![0.0; 720];
        frame[719] = 1.0;
        let spec = Analyzer::new(&wp).analyze(&frame).unwrap();
        let expected = wp.analysis[719].abs();
        assert!(expected > 0.0);
        for c in &spec.bins {
            assert!((c.norm() - expected).abs() < 1e-12);
        }
        // Real-valued edges.
        assert_eq!(spec.bins[0].im, 0.0);
        assert!(spec.bins[512].im.abs() < 1e-15);
    }

    #[test]
    fn unit_mask_reconstructs_delayed_input() {
        let wp = default_pair();
        let x = white(320 * 60, 7);
        let y = run(&wp, &x, |_| 1.0);
        let lat = latency_samples(&wp);
        let worst = (2 * wp.hop..x.len())
            .map(|n| (y[n] - x[n - lat]).abs())
            .fold(0.0, f64::max);
        assert!(worst < 1e-6, "max error {worst:e}");
        // Zero history makes the first samples exact as well.
        assert!(y[..lat].iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn zero_spectra_give_zero_output() {
        let wp = default_pair();
        let mut syn = Synthesizer::new(&wp);
        for _ in 0..5 {
            let y = syn.synthesize(&ComplexSpectrum::zeros(513)).unwrap();
            assert!(y.iter().all(|&v| v == 0.0));
        }
        assert_eq!(syn.state().frames_emitted, 5);
        assert_eq!(syn.state().overlap.len(), 320);
    }

    #[test]
    fn impulse_energy_arrives_within_synthesis_length() {
        let wp = default_pair();
        for pos in [0usize, 1000, 1319, 1555] {
            let mut x = vec![0.0; 320 * 20];
            x[pos] = 1.0;
            for g in [1.0, 0.5] {
                let y = run(&wp, &x, |_| g);
                let total: f64 = y.iter().map(|v| v * v).sum();
                let inside: f64 = y[pos..=pos + 640].iter().map(|v| v * v).sum();
                assert!((total - inside).abs() < 1e-20);
                assert!((y[pos + 640] - g).abs() < 1e-12);
                // Causality: nothing before the impulse.
                assert!(y[..pos].iter().all(|&v| v == 0.0));
            }
        }
    }

    #[test]
    fn analysis_is_linear() {
        let wp = default_pair();
        let mut ana = Analyzer::new(&wp);
        let a = white(720, 1);
        let b = white(720, 2);
        let (ca, cb) = (0.7, -1.3);
        let mix: Vec<f64> = a.iter().zip(&b).map(|(x, y)| ca * x + cb * y).collect();
        let sa = ana.analyze(&a).unwrap();
        let sb = ana.analyze(&b).unwrap();
        let sm = ana.analyze(&mix).unwrap();
        for k in 0..513 {
            let lin = sa.bins[k] * ca + sb.bins[k] * cb;
            assert!((sm.bins[k] - lin).norm() < 1e-10);
        }
    }
}
