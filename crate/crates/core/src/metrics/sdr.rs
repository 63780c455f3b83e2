//! Source-to-distortion ratio with an optimal scalar projection.

use crate::audio::AudioBuffer;
use crate::error::{Error, Result};

/// Scores are clipped to `[-SDR_CAP_DB, SDR_CAP_DB]`.
pub const SDR_CAP_DB: f64 = 60.0;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `10 log10(|a s|^2 / |a s - e|^2)` with `a = <s, e> / |s|^2`.
pub fn sdr(reference: &AudioBuffer, estimate: &AudioBuffer) -> Result<f64> {
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
    let s = &reference.samples;
    let e = &estimate.samples;
    let ss = dot(s, s);
    if ss == 0.0 {
        return Err(Error::usage("reference has zero energy"));
    }
    let alpha = dot(s, e) / ss;
    let target = alpha * alpha * ss;
    let distortion: f64 = s.iter().zip(e).map(|(a, b)| (alpha * a - b).powi(2)).sum();
    if target == 0.0 {
        return Ok(-SDR_CAP_DB);
    }
    if distortion == 0.0 {
        return Ok(SDR_CAP_DB);
    }
    Ok((10.0 * (target / distortion).log10()).clamp(-SDR_CAP_DB, SDR_CAP_DB))
}
