//! Test signals and a straight-line STOI oracle shared by the integration and
//! acceptance tests. The oracle uses its own resampler (Hann-windowed sinc
//! evaluated at fractional positions), a naive DFT and rounded band edges, so
//! it shares no code with the library.
#![allow(dead_code)]

use std::f64::consts::PI;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Voiced harmonic bursts at a syllable rate with short pauses.
pub fn speech_like(seconds: f64, fs: u32, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = (seconds * fs as f64) as usize;
    let f0 = rng.random_range(90.0..230.0);
    let rate = rng.random_range(2.5..5.0);
    let formant = rng.random_range(400.0..900.0);
    (0..n)
        .map(|i| {
            let t = i as f64 / fs as f64;
            let env = (PI * rate * t).sin().max(0.0).powi(2);
            let pitch = f0 * (1.0 + 0.12 * (2.0 * PI * 0.6 * t).sin());
            let voiced: f64 = (1..20)
                .map(|h| {
                    let f = pitch * h as f64;
                    let weight = 1.0 / (1.0 + ((f - formant) / 300.0).powi(2));
                    weight * (2.0 * PI * f * t).sin()
                })
                .sum();
            0.15 * env * voiced + 0.003 * rng.random_range(-1.0..1.0)
        })
        .collect()
}

pub fn white(n: usize, amp: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.random_range(-amp..amp)).collect()
}

pub fn power(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64
}

/// `x + g * white` with `g` chosen for the requested SNR.
pub fn add_white_noise(x: &[f64], snr_db: f64, seed: u64) -> Vec<f64> {
    let n = white(x.len(), 1.0, seed);
    let g = (power(x) / (power(&n) * 10f64.powf(snr_db / 10.0))).sqrt();
    x.iter().zip(&n).map(|(a, b)| a + g * b).collect()
}

const ORACLE_FS: f64 = 10_000.0;

fn oracle_resample(x: &[f64], fs_in: f64) -> Vec<f64> {
    if fs_in == ORACLE_FS {
        return x.to_vec();
    }
    let ratio = fs_in / ORACLE_FS;
    let cutoff = 0.5 / ratio.max(1.0);
    let half = (32.0 * ratio.max(1.0)).ceil();
    let out_len = (x.len() as f64 / ratio).ceil() as usize;
    let mut y = Vec::with_capacity(out_len);
    for m in 0..out_len {
        let t = m as f64 * ratio;
        let lo = (t - half).ceil().max(0.0) as usize;
        let hi = ((t + half).floor() as usize).min(x.len() - 1);
        let (mut acc, mut wsum) = (0.0, 0.0);
        for (n, xn) in x.iter().enumerate().take(hi + 1).skip(lo) {
            let d = t - n as f64;
            let arg = 2.0 * cutoff * d;
            let sinc = if arg == 0.0 {
                1.0
            } else {
                (PI * arg).sin() / (PI * arg)
            };
            let w = 0.5 + 0.5 * (PI * d / half).cos();
            let h = sinc * w;
            acc += h * xn;
            wsum += h;
        }
        y.push(acc / wsum);
    }
    y
}

fn oracle_window() -> Vec<f64> {
    (0..256)
        .map(|n| 0.5 * (1.0 - (2.0 * PI * (n + 1) as f64 / 257.0).cos()))
        .collect()
}

fn oracle_frames(x: &[f64]) -> Vec<Vec<f64>> {
    let w = oracle_window();
    let mut frames = Vec::new();
    let mut start = 0;
    while start + 256 < x.len() {
        frames.push((0..256).map(|j| w[j] * x[start + j]).collect());
        start += 128;
    }
    frames
}

/// Direct transcription of the published STOI procedure.
pub fn stoi_oracle(x: &[f64], y: &[f64], fs: u32) -> f64 {
    let x = oracle_resample(x, fs as f64);
    let y = oracle_resample(y, fs as f64);

    // silent frame removal
    let fx = oracle_frames(&x);
    let fy = oracle_frames(&y);
    let energy: Vec<f64> = fx
        .iter()
        .map(|f| 20.0 * (f.iter().map(|v| v * v).sum::<f64>().sqrt() + f64::EPSILON).log10())
        .collect();
    let top = energy.iter().cloned().fold(f64::MIN, f64::max);
    let keep: Vec<usize> = (0..fx.len()).filter(|&i| energy[i] > top - 40.0).collect();
    let len = (keep.len() - 1) * 128 + 256;
    let mut xs = vec![0.0; len];
    let mut ys = vec![0.0; len];
    for (k, &i) in keep.iter().enumerate() {
        for j in 0..256 {
            xs[k * 128 + j] += fx[i][j];
            ys[k * 128 + j] += fy[i][j];
        }
    }

    // band edges, rounded to the nearest bin of a 512-point DFT
    let bin = |f: f64| (f * 512.0 / ORACLE_FS).round() as usize;
    let edges: Vec<(usize, usize)> = (0..15)
        .map(|k| {
            let k = k as f64;
            (
                bin(150.0 * 2f64.powf((2.0 * k - 1.0) / 6.0)),
                bin(150.0 * 2f64.powf((2.0 * k + 1.0) / 6.0)),
            )
        })
        .collect();

    let tob = |s: &[f64]| -> Vec<Vec<f64>> {
        let frames = oracle_frames(s);
        let mut out = vec![vec![0.0; frames.len()]; 15];
        for (t, f) in frames.iter().enumerate() {
            for (b, &(lo, hi)) in edges.iter().enumerate() {
                let mut e = 0.0;
                for k in lo..hi {
                    let (mut re, mut im) = (0.0, 0.0);
                    for (n, v) in f.iter().enumerate() {
                        let ph = -2.0 * PI * (k * n) as f64 / 512.0;
                        re += v * ph.cos();
                        im += v * ph.sin();
                    }
                    e += re * re + im * im;
                }
                out[b][t] = e.sqrt();
            }
        }
        out
    };
    let xb = tob(&xs);
    let yb = tob(&ys);

    let frames = xb[0].len();
    let c = 10f64.powf(15.0 / 20.0);
    let mut sum = 0.0;
    let mut count = 0;
    for m in 30..=frames {
        for b in 0..15 {
            let xseg = &xb[b][m - 30..m];
            let yseg = &yb[b][m - 30..m];
            let nx: f64 = xseg.iter().map(|v| v * v).sum::<f64>().sqrt();
            let ny: f64 = yseg.iter().map(|v| v * v).sum::<f64>().sqrt();
            let a = nx / (ny + f64::EPSILON);
            let yp: Vec<f64> = (0..30)
                .map(|i| (a * yseg[i]).min((1.0 + c) * xseg[i]))
                .collect();
            let mx = xseg.iter().sum::<f64>() / 30.0;
            let my = yp.iter().sum::<f64>() / 30.0;
            let (mut num, mut dx, mut dy) = (0.0, 0.0, 0.0);
            for i in 0..30 {
                num += (xseg[i] - mx) * (yp[i] - my);
                dx += (xseg[i] - mx).powi(2);
                dy += (yp[i] - my).powi(2);
            }
            sum += num / ((dx.sqrt() + f64::EPSILON) * (dy.sqrt() + f64::EPSILON));
            count += 1;
        }
    }
    sum / count as f64
}

/// The five fixed cases compared against the oracle: (seed, snr_db, rate).
pub const ORACLE_CASES: [(u64, f64, u32); 5] = [
    (1, 0.0, 32_000),
    (2, 0.0, 32_000),
    (3, -5.0, 32_000),
    (4, 5.0, 16_000),
    (5, 0.0, 16_000),
];

/// Reference and noisy estimate for one oracle case.
pub fn oracle_case(seed: u64, snr_db: f64, fs: u32) -> (Vec<f64>, Vec<f64>) {
    let x = speech_like(3.0, fs, seed);
    let y = add_white_noise(&x, snr_db, seed + 100);
    (x, y)
}
