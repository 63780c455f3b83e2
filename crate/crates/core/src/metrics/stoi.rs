//! Short-time objective intelligibility.
//!
//! Constants follow the reference implementation: 10 kHz analysis rate,
//! 256-sample Hann frames with 50 % overlap zero-padded to 512, 15 third-octave
//! bands from 150 Hz, 30-frame (384 ms) envelope segments, a -15 dB lower SDR
//! bound for clipping and removal of frames 40 dB below the loudest one.
//! The Hann window is `hanning(258)[1..257]`, i.e. without its zero end points.

use realfft::RealFftPlanner;

use crate::audio::AudioBuffer;
use crate::error::{Error, Result};
use crate::resample::Resampler;

pub const FS: u32 = 10_000;
pub const FRAME_LEN: usize = 256;
pub const HOP: usize = 128;
pub const NFFT: usize = 512;
pub const NUM_BANDS: usize = 15;
pub const MIN_FREQ: f64 = 150.0;
/// Frames per envelope segment.
pub const SEGMENT: usize = 30;
pub const BETA_DB: f64 = -15.0;
pub const DYN_RANGE_DB: f64 = 40.0;
const EPS: f64 = f64::EPSILON;

/// Half-length factor and Kaiser beta of the 10 kHz resampler.
const RESAMPLE_HALF_LEN_FACTOR: usize = 10;
const RESAMPLE_BETA: f64 = 5.0;

fn hann() -> Vec<f64> {
    // hanning(M) = 0.5 - 0.5 cos(2 pi n / (M - 1)), M = FRAME_LEN + 2
    let m = (FRAME_LEN + 2) as f64;
    (1..=FRAME_LEN)
        .map(|n| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * n as f64 / (m - 1.0)).cos())
        .collect()
}

/// Frame start indices: `0, HOP, ...` strictly below `len - FRAME_LEN`.
fn frame_starts(len: usize) -> impl Iterator<Item = usize> {
    (0..len.saturating_sub(FRAME_LEN)).step_by(HOP)
}

/// Drops frames whose reference energy is more than 40 dB below the peak
/// frame and overlap-adds the remaining windowed frames.
pub fn remove_silent_frames(x: &[f64], y: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let w = hann();
    let starts: Vec<usize> = frame_starts(x.len()).collect();
    let windowed = |s: &[f64], i: usize| -> Vec<f64> {
        w.iter()
            .zip(&s[i..i + FRAME_LEN])
            .map(|(a, b)| a * b)
            .collect()
    };
    let energies: Vec<f64> = starts
        .iter()
        .map(|&i| {
            let f = windowed(x, i);
            20.0 * (f.iter().map(|v| v * v).sum::<f64>().sqrt() + EPS).log10()
        })
        .collect();
    let peak = energies.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let kept: Vec<usize> = starts
        .iter()
        .zip(&energies)
        .filter(|(_, &e)| peak - DYN_RANGE_DB - e < 0.0)
        .map(|(&i, _)| i)
        .collect();
    if kept.is_empty() {
        return (Vec::new(), Vec::new());
    }
    let out_len = (kept.len() - 1) * HOP + FRAME_LEN;
    let (mut xs, mut ys) = (vec![0.0; out_len], vec![0.0; out_len]);
    for (k, &i) in kept.iter().enumerate() {
        let o = k * HOP;
        for (j, (a, b)) in windowed(x, i).into_iter().zip(windowed(y, i)).enumerate() {
            xs[o + j] += a;
            ys[o + j] += b;
        }
    }
    (xs, ys)
}

/// Third-octave band edges as `[lo, hi)` bin ranges of the 512-point FFT.
pub fn third_octave_bins() -> Vec<(usize, usize)> {
    let nearest = |f: f64| -> usize {
        let mut best = 0;
        let mut dist = f64::INFINITY;
        for k in 0..=NFFT / 2 {
            let d = (k as f64 * FS as f64 / NFFT as f64 - f).powi(2);
            if d < dist {
                dist = d;
                best = k;
            }
        }
        best
    };
    (0..NUM_BANDS)
        .map(|i| {
            let k = i as f64;
            let lo = MIN_FREQ * 2f64.powf((2.0 * k - 1.0) / 6.0);
            let hi = MIN_FREQ * 2f64.powf((2.0 * k + 1.0) / 6.0);
            (nearest(lo), nearest(hi))
        })
        .collect()
}

/// Third-octave band magnitudes, `[band][frame]`.
fn band_envelopes(x: &[f64], bands: &[(usize, usize)]) -> Vec<Vec<f64>> {
    let w = hann();
    let mut planner = RealFftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(NFFT);
    let mut input = fft.make_input_vec();
    let mut spec = fft.make_output_vec();
    let mut out = vec![Vec::new(); bands.len()];
    for i in frame_starts(x.len()) {
        input.fill(0.0);
        for (d, (a, b)) in input.iter_mut().zip(w.iter().zip(&x[i..i + FRAME_LEN])) {
            *d = a * b;
        }
        fft.process(&mut input, &mut spec).expect("fixed FFT sizes");
        for (o, &(lo, hi)) in out.iter_mut().zip(bands) {
            o.push(
                spec[lo..hi]
                    .iter()
                    .map(|c| c.norm_sqr())
                    .sum::<f64>()
                    .sqrt(),
            );
        }
    }
    out
}

fn to_analysis_rate(x: &AudioBuffer) -> Result<Vec<f64>> {
    if x.sample_rate == FS {
        return Ok(x.samples.clone());
    }
    let (up, down) = (FS as usize, x.sample_rate as usize);
    let g = gcd(up, down);
    let (up, down) = (up / g, down / g);
    let r = Resampler::new(
        up,
        down,
        RESAMPLE_HALF_LEN_FACTOR * up.max(down),
        RESAMPLE_BETA,
    )?;
    Ok(r.process(&x.samples))
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Intelligibility score of `estimate` against `reference`, in [-1, 1].
pub fn stoi(reference: &AudioBuffer, estimate: &AudioBuffer) -> Result<f64> {
    if reference.sample_rate != estimate.sample_rate {
        return Err(Error::usage(format!(
            "sample rates differ: {} vs {} Hz",
            reference.sample_rate, estimate.sample_rate
        )));
    }
    if reference.len() != estimate.len() {
        return Err(Error::usage(format!(
            "lengths differ: {} vs {} samples",
            reference.len(),
            estimate.len()
        )));
    }
    if reference.sample_rate == 0 || reference.duration_s() < 1.0 {
        return Err(Error::usage(format!(
            "input of {:.3} s is shorter than 1 s",
            reference.duration_s()
        )));
    }
    if reference.samples.iter().all(|v| *v == 0.0) {
        return Err(Error::usage("reference is silent"));
    }
    let x = to_analysis_rate(reference)?;
    let y = to_analysis_rate(estimate)?;
    let (x, y) = remove_silent_frames(&x, &y);

    let bands = third_octave_bins();
    let xb = band_envelopes(&x, &bands);
    let yb = band_envelopes(&y, &bands);
    let frames = xb[0].len();
    if frames < SEGMENT {
        return Err(Error::usage(format!(
            "only {frames} non-silent frames, need at least {SEGMENT}"
        )));
    }

    let clip = 10f64.powf(-BETA_DB / 20.0);
    let segments = frames - SEGMENT + 1;
    let mut total = 0.0;
    for (xband, yband) in xb.iter().zip(&yb) {
        for m in SEGMENT..=frames {
            let xs = &xband[m - SEGMENT..m];
            let ys = &yband[m - SEGMENT..m];
            let norm = |v: &[f64]| v.iter().map(|a| a * a).sum::<f64>().sqrt();
            let alpha = norm(xs) / (norm(ys) + EPS);
            let yc: Vec<f64> = ys
                .iter()
                .zip(xs)
                .map(|(b, a)| (alpha * b).min(a * (1.0 + clip)))
                .collect();
            let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
            let (mx, my) = (mean(xs), mean(&yc));
            let xc: Vec<f64> = xs.iter().map(|a| a - mx).collect();
            let yc: Vec<f64> = yc.iter().map(|b| b - my).collect();
            let (nx, ny) = (norm(&xc) + EPS, norm(&yc) + EPS);
            total += xc
                .iter()
                .zip(&yc)
                .map(|(a, b)| (a / nx) * (b / ny))
                .sum::<f64>();
        }
    }
    Ok(total / (segments * NUM_BANDS) as f64)
}
