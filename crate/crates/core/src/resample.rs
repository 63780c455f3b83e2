//! Rational-ratio resampling with a Kaiser-windowed sinc low-pass.
//!
//! The filter is symmetric and applied centred, so output sample `m` is
//! aligned with input time `m * down / up` and no delay compensation is
//! needed. Each polyphase branch is normalized to unit DC gain.

use crate::audio::AudioBuffer;
use crate::error::{Error, Result};

/// Half-length (in high-rate samples) of the 2x filter: 32 taps per branch.
pub const HALF_BAND_HALF_LEN: usize = 32;
pub const HALF_BAND_BETA: f64 = 8.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Up,
    Down,
}

/// Zeroth-order modified Bessel function of the first kind (power series).
pub fn bessel_i0(x: f64) -> f64 {
    let q = x * x / 4.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..200 {
        term *= q / (k * k) as f64;
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

pub fn kaiser(offset: f64, half_len: f64, beta: f64) -> f64 {
    let r = offset / half_len;
    if r.abs() > 1.0 {
        return 0.0;
    }
    bessel_i0(beta * (1.0 - r * r).sqrt()) / bessel_i0(beta)
}

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        let px = std::f64::consts::PI * x;
        px.sin() / px
    }
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Polyphase resampler by `up / down`.
#[derive(Debug, Clone)]
pub struct Resampler {
    up: usize,
    down: usize,
    half_len: usize,
    /// `phases[p][i]` is the tap at high-rate offset `p + (first_offset[p] + i) * up`.
    phases: Vec<Vec<f64>>,
    first_offset: Vec<isize>,
}

impl Resampler {
    /// `half_len` is in samples at the intermediate rate `up * fs_in`.
    pub fn new(up: usize, down: usize, half_len: usize, beta: f64) -> Result<Self> {
        if up == 0 || down == 0 {
            return Err(Error::config("resampling factors must be positive"));
        }
        let g = gcd(up, down);
        let (up, down) = (up / g, down / g);
        let cutoff = 0.5 / up.max(down) as f64;
        let h = |d: isize| {
            2.0 * cutoff * sinc(2.0 * cutoff * d as f64) * kaiser(d as f64, half_len as f64, beta)
        };
        let hl = half_len as isize;
        let mut phases = Vec::with_capacity(up);
        let mut first_offset = Vec::with_capacity(up);
        for p in 0..up as isize {
            // offsets d = p + j*up within [-hl, hl]
            let jmin = (-hl - p).div_euclid(up as isize)
                + if (-hl - p).rem_euclid(up as isize) == 0 {
                    0
                } else {
                    1
                };
            let jmax = (hl - p).div_euclid(up as isize);
            let taps: Vec<f64> = (jmin..=jmax).map(|j| h(p + j * up as isize)).collect();
            let sum: f64 = taps.iter().sum();
            phases.push(taps.iter().map(|t| t / sum).collect());
            first_offset.push(jmin);
        }
        Ok(Self {
            up,
            down,
            half_len,
            phases,
            first_offset,
        })
    }

    pub fn ratio(&self) -> (usize, usize) {
        (self.up, self.down)
    }

    pub fn half_len(&self) -> usize {
        self.half_len
    }

    pub fn output_len(&self, input_len: usize) -> usize {
        (input_len * self.up).div_ceil(self.down)
    }

    pub fn process(&self, x: &[f64]) -> Vec<f64> {
        let (up, down) = (self.up as isize, self.down as isize);
        let n_in = x.len() as isize;
        (0..self.output_len(x.len()))
            .map(|m| {
                // y[m] = sum_n x[n] h(m*down - n*up)
                let j0 = m as isize * down;
                let p = j0.rem_euclid(up);
                let base = j0.div_euclid(up);
                let taps = &self.phases[p as usize];
                let jmin = self.first_offset[p as usize];
                // d = p + j*up = j0 - n*up  =>  n = base - j
                let mut acc = 0.0;
                for (i, t) in taps.iter().enumerate() {
                    let n = base - (jmin + i as isize);
                    if n >= 0 && n < n_in {
                        acc += t * x[n as usize];
                    }
                }
                acc
            })
            .collect()
    }
}

/// Doubles or halves the sample rate with the 64-tap (32 per branch)
/// Kaiser(beta = 8) half-band filter.
pub fn resample_2x(x: &AudioBuffer, direction: Direction) -> AudioBuffer {
    let (up, down, rate) = match direction {
        Direction::Up => (2, 1, x.sample_rate * 2),
        Direction::Down => (1, 2, x.sample_rate / 2),
    };
    let r = Resampler::new(up, down, HALF_BAND_HALF_LEN, HALF_BAND_BETA)
        .expect("fixed factors are valid");
    AudioBuffer::new(r.process(&x.samples), rate)
}
