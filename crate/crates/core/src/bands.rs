//! Band compression of the 513-bin spectrum to 66 network features and the
//! matching piecewise-constant mask expansion.
//!
//! The lowest 54 bins pass through unchanged. Bins 54..513 are grouped into 12
//! bands whose widths grow roughly like the Mel scale; a band's feature is the
//! arithmetic mean of its bins.

use std::fmt;

use crate::error::{Error, Result};
use crate::NUM_BINS;

/// Bins copied through unchanged.
pub const PASSTHROUGH_BINS: usize = 54;
/// Number of averaged bands above the passthrough region.
pub const NUM_BANDS: usize = 12;
/// Length of a feature or mask frame.
pub const NUM_FEATURES: usize = PASSTHROUGH_BINS + NUM_BANDS;

/// Band edges: band `i` covers bins `[EDGES[i], EDGES[i + 1])`.
pub const BAND_EDGES: [usize; NUM_BANDS + 1] =
    [54, 62, 72, 85, 102, 124, 152, 187, 231, 286, 355, 430, 513];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BandLayout {
    pub passthrough_count: usize,
    pub band_edges: [usize; NUM_BANDS + 1],
}

impl Default for BandLayout {
    fn default() -> Self {
        make_layout()
    }
}

pub const fn make_layout() -> BandLayout {
    BandLayout {
        passthrough_count: PASSTHROUGH_BINS,
        band_edges: BAND_EDGES,
    }
}

impl BandLayout {
    pub fn num_features(&self) -> usize {
        self.passthrough_count + self.band_edges.len() - 1
    }

    pub fn band_widths(&self) -> impl Iterator<Item = usize> + '_ {
        self.band_edges.windows(2).map(|w| w[1] - w[0])
    }

    /// Bin range `[lo, hi)` represented by a feature index.
    pub fn feature_bins(&self, feature: usize) -> (usize, usize) {
        if feature < self.passthrough_count {
            (feature, feature + 1)
        } else {
            let b = feature - self.passthrough_count;
            (self.band_edges[b], self.band_edges[b + 1])
        }
    }

    /// Plain-text table of the bin range behind every feature.
    pub fn table(&self, bin_hz: f64) -> String {
        use std::fmt::Write;
        let mut s = String::from("feature\tfirst_bin\tlast_bin\twidth\tlow_hz\thigh_hz\n");
        for f in 0..self.num_features() {
            let (lo, hi) = self.feature_bins(f);
            let _ = writeln!(
                s,
                "{f}\t{lo}\t{}\t{}\t{:.1}\t{:.1}",
                hi - 1,
                hi - lo,
                lo as f64 * bin_hz,
                (hi - 1) as f64 * bin_hz
            );
        }
        s
    }
}

/// Network input: compressed magnitudes.
#[derive(Clone, PartialEq)]
pub struct FeatureFrame(pub [f32; NUM_FEATURES]);

/// Network output: one gain per feature, in [0, 1].
#[derive(Clone, PartialEq)]
pub struct MaskFrame(pub [f32; NUM_FEATURES]);

impl fmt::Debug for FeatureFrame {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.0.iter()).finish()
    }
}

impl fmt::Debug for MaskFrame {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.0.iter()).finish()
    }
}

impl FeatureFrame {
    pub fn zeros() -> Self {
        Self([0.0; NUM_FEATURES])
    }
}

impl MaskFrame {
    pub fn filled(v: f32) -> Self {
        Self([v; NUM_FEATURES])
    }

    /// Clamps every value into [0, 1]; NaN maps to 0.
    pub fn clamped(mut self) -> Self {
        for v in &mut self.0 {
            *v = if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
        }
        self
    }
}

fn band_means(values: &[f64], layout: &BandLayout, out: &mut [f64]) {
    out[..layout.passthrough_count].copy_from_slice(&values[..layout.passthrough_count]);
    for (b, w) in layout.band_edges.windows(2).enumerate() {
        let sum: f64 = values[w[0]..w[1]].iter().sum();
        out[layout.passthrough_count + b] = sum / (w[1] - w[0]) as f64;
    }
}

/// Averages a 513-bin magnitude spectrum into 66 features.
pub fn compress(mag: &[f64], layout: &BandLayout) -> Result<FeatureFrame> {
    if mag.len() != NUM_BINS {
        return Err(Error::usage(format!(
            "magnitude spectrum has {} bins, expected {NUM_BINS}",
            mag.len()
        )));
    }
    if let Some(i) = mag.iter().position(|m| m.is_nan() || *m < 0.0) {
        return Err(Error::usage(format!(
            "magnitude at bin {i} is {} (must be finite and non-negative)",
            mag[i]
        )));
    }
    let mut means = [0.0f64; NUM_FEATURES];
    band_means(mag, layout, &mut means);
    let mut out = FeatureFrame::zeros();
    for (o, m) in out.0.iter_mut().zip(means) {
        *o = m as f32;
    }
    Ok(out)
}

/// Replicates each feature's gain over the bins it represents.
pub fn expand_mask(mask: &MaskFrame, layout: &BandLayout) -> Result<Vec<f64>> {
    if let Some(i) = mask.0.iter().position(|v| !(0.0..=1.0).contains(v)) {
        return Err(Error::usage(format!(
            "mask value {} at feature {i} outside [0, 1]",
            mask.0[i]
        )));
    }
    let mut gains = vec![0.0; NUM_BINS];
    for (f, &m) in mask.0.iter().enumerate() {
        let (lo, hi) = layout.feature_bins(f);
        gains[lo..hi].fill(m as f64);
    }
    Ok(gains)
}

/// Band-averages a 513-bin gain vector back to 66 mask values.
pub fn compress_mask(gains: &[f64], layout: &BandLayout) -> Result<MaskFrame> {
    if gains.len() != NUM_BINS {
        return Err(Error::usage(format!(
            "gain vector has {} bins, expected {NUM_BINS}",
            gains.len()
        )));
    }
    let mut means = [0.0f64; NUM_FEATURES];
    band_means(gains, layout, &mut means);
    let mut out = MaskFrame::filled(0.0);
    for (o, m) in out.0.iter_mut().zip(means) {
        *o = m as f32;
    }
    Ok(out)
}
