//! Classical Wiener-filter noise suppressor.
//!
//! Per frame and bin:
//!
//! 1. the noise PSD follows a first-order recursion whose smoothing factor is
//!    fast (`alpha_noise`) when the bin looks like noise and slow
//!    (`alpha_speech`) when its power exceeds three times the current noise
//!    estimate, and is floored by a minimum-statistics tracker;
//! 2. the a posteriori SNR is the observed power over the noise PSD;
//! 3. the a priori SNR comes from the decision-directed blend of the previous
//!    gain and the instantaneous SNR;
//! 4. the Wiener gain `xi / (xi + 1)` is floored at the maximum attenuation.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::frames::ComplexSpectrum;

/// Floor applied to every denominator.
pub const EPS: f64 = 1e-12;
/// A bin is treated as noise-like while its power stays at or below this
/// multiple of the current noise estimate.
pub const SPEECH_THRESHOLD: f64 = 3.0;
/// Bias compensation applied to the tracked minimum.
pub const MINSTAT_BIAS: f64 = 1.5;
/// Smoothing of the power fed to the minimum tracker.
pub const MINSTAT_SMOOTHING: f64 = 0.85;
/// Frames averaged to seed the noise estimate.
pub const INIT_FRAMES: u64 = 5;

#[derive(Debug, Clone, PartialEq)]
pub struct SuppressorConfig {
    pub max_atten_db: f64,
    pub alpha_dd: f64,
    pub alpha_noise: f64,
    pub alpha_speech: f64,
    pub minstat_window_s: f64,
    /// Use the previous frame's a posteriori SNR in the decision-directed
    /// term, as in the original Ephraim-Malah estimator. Off by default.
    pub dd_previous_gamma: bool,
    pub frame_rate: f64,
}

impl Default for SuppressorConfig {
    fn default() -> Self {
        Self {
            max_atten_db: 12.0,
            alpha_dd: 0.98,
            alpha_noise: 0.85,
            alpha_speech: 0.99,
            minstat_window_s: 1.5,
            dd_previous_gamma: false,
            frame_rate: crate::FRAME_RATE as f64,
        }
    }
}

impl SuppressorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.max_atten_db > 0.0 && self.max_atten_db.is_finite()) {
            return Err(Error::config(format!(
                "max attenuation must be a positive number of dB, got {}",
                self.max_atten_db
            )));
        }
        for (name, v) in [
            ("alpha_dd", self.alpha_dd),
            ("alpha_noise", self.alpha_noise),
            ("alpha_speech", self.alpha_speech),
        ] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::config(format!("{name} must lie in (0, 1), got {v}")));
            }
        }
        if !(self.minstat_window_s > 0.0 && self.minstat_window_s.is_finite()) {
            return Err(Error::config(format!(
                "minimum-statistics window must be positive, got {} s",
                self.minstat_window_s
            )));
        }
        if self.frame_rate.is_nan() || self.frame_rate <= 0.0 {
            return Err(Error::config("frame rate must be positive"));
        }
        Ok(())
    }

    /// Gain floor `10^(-max_atten_db / 20)`.
    pub fn gain_floor(&self) -> f64 {
        db_to_gain_floor(self.max_atten_db)
    }

    fn window_frames(&self) -> usize {
        ((self.minstat_window_s * self.frame_rate).round() as usize).max(1)
    }
}

pub fn db_to_gain_floor(max_atten_db: f64) -> f64 {
    10f64.powf(-max_atten_db / 20.0)
}

/// `noise <- alpha * noise + (1 - alpha) * power`, bin by bin.
pub fn recursive_psd_update(noise: &mut [f64], power: &[f64], alpha: impl Fn(usize) -> f64) {
    for (k, (n, p)) in noise.iter_mut().zip(power).enumerate() {
        let a = alpha(k);
        *n = a * *n + (1.0 - a) * p;
    }
}

/// `|X|^2 / max(noise, EPS)`.
pub fn a_posteriori_snr(power: &[f64], noise_psd: &[f64]) -> Vec<f64> {
    power
        .iter()
        .zip(noise_psd)
        .map(|(p, n)| p / n.max(EPS))
        .collect()
}

/// Decision-directed a priori SNR:
/// `alpha * G_prev^2 * gamma_dd + (1 - alpha) * max(gamma - 1, 0)`, where
/// `gamma_dd` is the current or the previous a posteriori SNR.
pub fn decision_directed_xi(
    prev_gain: &[f64],
    gamma_dd: &[f64],
    gamma: &[f64],
    alpha: f64,
) -> Vec<f64> {
    prev_gain
        .iter()
        .zip(gamma_dd)
        .zip(gamma)
        .map(|((g, gd), gm)| alpha * g * g * gd + (1.0 - alpha) * (gm - 1.0).max(0.0))
        .collect()
}

/// Wiener gain with an attenuation floor.
pub fn wiener_gain(xi: f64, g_min: f64) -> f64 {
    (xi / (xi + 1.0)).max(g_min)
}

/// Exact sliding-window minimum over the last `len` pushes, per bin.
#[derive(Debug, Clone)]
struct SlidingMin {
    len: u64,
    tick: u64,
    queues: Vec<VecDeque<(u64, f64)>>,
}

impl SlidingMin {
    fn new(bins: usize, len: usize) -> Self {
        Self {
            len: len as u64,
            tick: 0,
            queues: vec![VecDeque::new(); bins],
        }
    }

    fn push(&mut self, values: &[f64]) {
        let t = self.tick;
        for (q, &v) in self.queues.iter_mut().zip(values) {
            while q.back().is_some_and(|&(_, b)| b >= v) {
                q.pop_back();
            }
            q.push_back((t, v));
            while q.front().is_some_and(|&(i, _)| i + self.len <= t) {
                q.pop_front();
            }
        }
        self.tick += 1;
    }

    fn min(&self, bin: usize) -> f64 {
        self.queues[bin].front().map_or(0.0, |&(_, v)| v)
    }
}

/// Per-stream suppressor state.
#[derive(Debug, Clone)]
pub struct Suppressor {
    cfg: SuppressorConfig,
    g_min: f64,
    noise_psd: Vec<f64>,
    prev_gain: Vec<f64>,
    prev_gamma: Vec<f64>,
    smoothed_power: Vec<f64>,
    minimum: SlidingMin,
    frames_seen: u64,
}

impl Suppressor {
    pub fn new(cfg: SuppressorConfig, num_bins: usize) -> Result<Self> {
        cfg.validate()?;
        let window = cfg.window_frames();
        Ok(Self {
            g_min: cfg.gain_floor(),
            noise_psd: vec![0.0; num_bins],
            prev_gain: vec![1.0; num_bins],
            prev_gamma: vec![0.0; num_bins],
            smoothed_power: vec![0.0; num_bins],
            minimum: SlidingMin::new(num_bins, window),
            frames_seen: 0,
            cfg,
        })
    }

    pub fn config(&self) -> &SuppressorConfig {
        &self.cfg
    }

    pub fn gain_floor(&self) -> f64 {
        self.g_min
    }

    pub fn noise_psd(&self) -> &[f64] {
        &self.noise_psd
    }

    pub fn prev_gain(&self) -> &[f64] {
        &self.prev_gain
    }

    /// Advances the noise PSD estimate by one frame of `|X|^2`.
    pub fn update_noise_psd(&mut self, power: &[f64]) -> Result<&[f64]> {
        if power.len() != self.noise_psd.len() {
            return Err(Error::usage(format!(
                "power spectrum has {} bins, expected {}",
                power.len(),
                self.noise_psd.len()
            )));
        }
        if let Some(k) = power.iter().position(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::usage(format!(
                "power at bin {k} is {} (must be finite and non-negative)",
                power[k]
            )));
        }

        if self.frames_seen == 0 {
            self.smoothed_power.copy_from_slice(power);
        } else {
            recursive_psd_update(&mut self.smoothed_power, power, |_| MINSTAT_SMOOTHING);
        }
        self.minimum.push(&self.smoothed_power);

        if self.frames_seen < INIT_FRAMES {
            // Running mean of the first frames.
            let n = self.frames_seen as f64;
            for (est, p) in self.noise_psd.iter_mut().zip(power) {
                *est = (*est * n + p) / (n + 1.0);
            }
        } else {
            let (fast, slow) = (self.cfg.alpha_noise, self.cfg.alpha_speech);
            let prev = &self.noise_psd;
            let alphas: Vec<f64> = power
                .iter()
                .zip(prev)
                .map(|(p, n)| {
                    if *p <= SPEECH_THRESHOLD * n {
                        fast
                    } else {
                        slow
                    }
                })
                .collect();
            recursive_psd_update(&mut self.noise_psd, power, |k| alphas[k]);
            for (k, est) in self.noise_psd.iter_mut().enumerate() {
                *est = est.max(MINSTAT_BIAS * self.minimum.min(k));
            }
        }
        self.frames_seen += 1;
        Ok(&self.noise_psd)
    }

    /// Computes the gains for one frame and applies them.
    pub fn suppress_frame(
        &mut self,
        spec: &ComplexSpectrum,
    ) -> Result<(Vec<f64>, ComplexSpectrum)> {
        let mut enhanced = spec.clone();
        let gains = self.gains(spec)?;
        enhanced.scale(&gains);
        Ok((gains, enhanced))
    }

    /// Gain computation without applying it.
    pub fn gains(&mut self, spec: &ComplexSpectrum) -> Result<Vec<f64>> {
        let power = spec.power();
        self.update_noise_psd(&power)?;
        let gamma = a_posteriori_snr(&power, &self.noise_psd);
        let gamma_dd = if self.cfg.dd_previous_gamma {
            &self.prev_gamma
        } else {
            &gamma
        };
        let xi = decision_directed_xi(&self.prev_gain, gamma_dd, &gamma, self.cfg.alpha_dd);
        let gains: Vec<f64> = xi.iter().map(|&x| wiener_gain(x, self.g_min)).collect();
        self.prev_gain.copy_from_slice(&gains);
        self.prev_gamma = gamma;
        Ok(gains)
    }
}
