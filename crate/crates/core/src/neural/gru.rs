//! Single-layer GRU mask estimator with a logistic feed-forward output.
//!
//! With `x` the 66 features and `h` the 128-unit state:
//!
//! ```text
//! z  = sigmoid(x W_z + bw_z + h U_z + bu_z)
//! r  = sigmoid(x W_r + bw_r + h U_r + bu_r)
//! h~ = tanh(x W_h + bw_h + (r * h) U_h + bu_h)
//! h  = (1 - z) * h + z * h~
//! m  = sigmoid(h W_out + b_out)
//! ```
//!
//! Matrices are stored input-major (`[in, out]`), so `x W` sums over the
//! first index.

use super::weights::{TensorSpec, WeightFile};
use super::{sigmoid, Layer};
use crate::bands::{FeatureFrame, MaskFrame, NUM_FEATURES};
use crate::error::{Error, Result};

pub const HIDDEN: usize = 128;
const IN: usize = NUM_FEATURES;

pub(super) fn schema() -> Vec<TensorSpec> {
    let mut s = Vec::new();
    for g in ["z", "r", "h"] {
        s.push(TensorSpec::new(format!("gru.w_{g}"), &[IN, HIDDEN]));
    }
    for g in ["z", "r", "h"] {
        s.push(TensorSpec::new(format!("gru.u_{g}"), &[HIDDEN, HIDDEN]));
    }
    for g in ["z", "r", "h"] {
        s.push(TensorSpec::new(format!("gru.bw_{g}"), &[HIDDEN]));
        s.push(TensorSpec::new(format!("gru.bu_{g}"), &[HIDDEN]));
    }
    s.push(TensorSpec::new("out.weight", &[HIDDEN, IN]));
    s.push(TensorSpec::new("out.bias", &[IN]));
    s
}

/// Multiply-accumulates per frame: three input and three recurrent
/// projections plus the output layer.
pub const MACS_PER_FRAME: u64 = (3 * (IN * HIDDEN + HIDDEN * HIDDEN) + HIDDEN * IN) as u64;

#[derive(Debug, Clone)]
struct Gate {
    w: Vec<f32>,
    u: Vec<f32>,
    bw: Vec<f32>,
    bu: Vec<f32>,
}

#[derive(Debug, Clone)]
pub struct GruModel {
    z: Gate,
    r: Gate,
    h: Gate,
    out_w: Vec<f32>,
    out_b: Vec<f32>,
    state: Vec<f32>,
}

/// `acc[j] += sum_i x[i] * m[i * cols + j]`.
fn vec_mat_acc(x: &[f32], m: &[f32], acc: &mut [f32]) {
    let cols = acc.len();
    for (i, &xi) in x.iter().enumerate() {
        if xi == 0.0 {
            continue;
        }
        let row = &m[i * cols..(i + 1) * cols];
        for (a, w) in acc.iter_mut().zip(row) {
            *a += xi * w;
        }
    }
}

impl GruModel {
    pub(super) fn from_weights(file: &WeightFile) -> Result<Self> {
        let take = |name: &str| -> Result<Vec<f32>> {
            file.get(name)
                .map(|t| t.data.clone())
                .ok_or_else(|| Error::schema(name, "missing"))
        };
        let gate = |g: &str| -> Result<Gate> {
            Ok(Gate {
                w: take(&format!("gru.w_{g}"))?,
                u: take(&format!("gru.u_{g}"))?,
                bw: take(&format!("gru.bw_{g}"))?,
                bu: take(&format!("gru.bu_{g}"))?,
            })
        };
        Ok(Self {
            z: gate("z")?,
            r: gate("r")?,
            h: gate("h")?,
            out_w: take("out.weight")?,
            out_b: take("out.bias")?,
            state: vec![0.0; HIDDEN],
        })
    }

    pub fn hidden_state(&self) -> &[f32] {
        &self.state
    }

    /// Recurrent update from precomputed input projections `x W + bw` for
    /// the three gates.
    fn advance(&mut self, xz: &[f32], xr: &[f32], xh: &[f32]) -> MaskFrame {
        let h = &self.state;
        let mut z = self.z.bu.clone();
        vec_mat_acc(h, &self.z.u, &mut z);
        let mut r = self.r.bu.clone();
        vec_mat_acc(h, &self.r.u, &mut r);
        for j in 0..HIDDEN {
            z[j] = sigmoid(z[j] + xz[j]);
            r[j] = sigmoid(r[j] + xr[j]);
        }
        let rh: Vec<f32> = r.iter().zip(h).map(|(a, b)| a * b).collect();
        let mut cand = self.h.bu.clone();
        vec_mat_acc(&rh, &self.h.u, &mut cand);
        for j in 0..HIDDEN {
            let c = (cand[j] + xh[j]).tanh();
            self.state[j] = (1.0 - z[j]) * self.state[j] + z[j] * c;
        }

        let mut out = self.out_b.clone();
        vec_mat_acc(&self.state, &self.out_w, &mut out);
        let mut mask = MaskFrame::filled(0.0);
        for (m, o) in mask.0.iter_mut().zip(out) {
            *m = sigmoid(o);
        }
        mask
    }

    /// Matrix form of the input projections for a whole sequence:
    /// `[T, IN] x [IN, HIDDEN]`, computed row by column.
    fn project_sequence(frames: &[FeatureFrame], w: &[f32], b: &[f32]) -> Vec<f32> {
        let t = frames.len();
        let mut out = vec![0.0f32; t * HIDDEN];
        for (row, f) in frames.iter().enumerate() {
            for j in 0..HIDDEN {
                let mut acc = 0.0f32;
                for i in 0..IN {
                    acc += f.0[i] * w[i * HIDDEN + j];
                }
                out[row * HIDDEN + j] = acc + b[j];
            }
        }
        out
    }

    /// Evaluates a whole sequence from the current state, input projections
    /// first.
    pub fn forward_batch(&mut self, frames: &[FeatureFrame]) -> Result<Vec<MaskFrame>> {
        for f in frames {
            check_finite(f)?;
        }
        let xz = Self::project_sequence(frames, &self.z.w, &self.z.bw);
        let xr = Self::project_sequence(frames, &self.r.w, &self.r.bw);
        let xh = Self::project_sequence(frames, &self.h.w, &self.h.bw);
        Ok((0..frames.len())
            .map(|t| {
                let s = t * HIDDEN..(t + 1) * HIDDEN;
                self.advance(&xz[s.clone()], &xr[s.clone()], &xh[s])
            })
            .collect())
    }
}

pub(super) fn check_finite(f: &FeatureFrame) -> Result<()> {
    match f.0.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(Error::usage(format!(
            "non-finite feature {} at index {i}",
            f.0[i]
        ))),
        None => Ok(()),
    }
}

impl Layer for GruModel {
    fn step(&mut self, features: &FeatureFrame) -> Result<MaskFrame> {
        check_finite(features)?;
        let mut xz = self.z.bw.clone();
        vec_mat_acc(&features.0, &self.z.w, &mut xz);
        let mut xr = self.r.bw.clone();
        vec_mat_acc(&features.0, &self.r.w, &mut xr);
        let mut xh = self.h.bw.clone();
        vec_mat_acc(&features.0, &self.h.w, &mut xh);
        Ok(self.advance(&xz, &xr, &xh))
    }

    fn reset(&mut self) {
        self.state.fill(0.0);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::ModelKind;
    use rand::{RngExt, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_frames(n: usize, seed: u64) -> Vec<FeatureFrame> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let mut f = FeatureFrame::zeros();
                for v in &mut f.0 {
                    *v = rng.random_range(0.0..2.0);
                }
                f
            })
            .collect()
    }

    #[test]
    fn param_count_matches_formula() {
        let n: usize = schema().iter().map(|s| s.numel()).sum();
        assert_eq!(n, 3 * (66 * 128 + 128 * 128 + 2 * 128) + 128 * 66 + 66);
        assert_eq!(n, 83_778);
        assert_eq!(MACS_PER_FRAME, 82_944);
    }

    #[test]
    fn zero_network_outputs_half() {
        let mut m = GruModel::from_weights(&WeightFile::zeros(ModelKind::Gru)).unwrap();
        for f in random_frames(3, 1) {
            let mask = m.step(&f).unwrap();
            assert!(mask.0.iter().all(|&v| v == 0.5));
        }
    }

    #[test]
    fn without_recurrence_only_current_frame_matters() {
        let mut file = WeightFile::random(ModelKind::Gru, 5, 1.0);
        for t in &mut file.tensors {
            if t.name.starts_with("gru.u_") {
                t.data.fill(0.0);
            }
        }
        // U = 0 removes the history from the gates, but the state update still
        // carries (1 - z) * h; saturate z so the new state is h~ alone.
        for t in &mut file.tensors {
            if t.name == "gru.bw_z" {
                t.data.fill(40.0);
            }
        }
        let frames_a = random_frames(6, 2);
        let frames_b = random_frames(6, 3);
        let probe = random_frames(1, 4).remove(0);
        let mut a = GruModel::from_weights(&file).unwrap();
        let mut b = GruModel::from_weights(&file).unwrap();
        for f in &frames_a {
            a.step(f).unwrap();
        }
        for f in &frames_b {
            b.step(f).unwrap();
        }
        assert_eq!(a.step(&probe).unwrap(), b.step(&probe).unwrap());
    }

    #[test]
    fn streaming_matches_batch() {
        let file = WeightFile::random(ModelKind::Gru, 11, 1.0);
        let frames = random_frames(50, 12);
        let mut s = GruModel::from_weights(&file).unwrap();
        let mut b = GruModel::from_weights(&file).unwrap();
        let batch = b.forward_batch(&frames).unwrap();
        let mut worst = 0.0f32;
        for (f, want) in frames.iter().zip(&batch) {
            let got = s.step(f).unwrap();
            for (x, y) in got.0.iter().zip(&want.0) {
                worst = worst.max((x - y).abs());
            }
        }
        assert!(worst < 1e-6, "{worst:e}");
    }

    #[test]
    fn rejects_non_finite_features() {
        let mut m = GruModel::from_weights(&WeightFile::zeros(ModelKind::Gru)).unwrap();
        let mut f = FeatureFrame::zeros();
        f.0[7] = f32::NAN;
        assert!(matches!(m.step(&f), Err(Error::Usage(_))));
    }

    #[test]
    fn reset_restores_initial_behaviour() {
        let file = WeightFile::random(ModelKind::Gru, 21, 1.0);
        let frames = random_frames(5, 22);
        let mut m = GruModel::from_weights(&file).unwrap();
        let first: Vec<_> = frames.iter().map(|f| m.step(f).unwrap()).collect();
        m.reset();
        let second: Vec<_> = frames.iter().map(|f| m.step(f).unwrap()).collect();
        assert_eq!(first, second);
    }
}
