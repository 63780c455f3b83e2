//! Causal U-Net mask estimator over (time, frequency).
//!
//! Every convolution has a 5x5 kernel: causal in time (four frames of left
//! context, zero before the stream starts) and zero-padded by two bins on each
//! side in frequency. Pooling and upsampling act on frequency only, so the
//! network emits exactly one mask frame per input frame.
//!
//! ```text
//! block        freq  channels  layers
//! down1        66    1 -> 16   full 5x5 conv, separable conv      (skip1)
//! pool         33
//! down2        33    16 -> 32  separable conv x2                  (skip2)
//! pool         17    (ceil mode: the last window holds one bin)
//! bottleneck   17    32 -> 64  separable conv x2
//! up1          33    64 -> 32  transposed conv 17 -> 34, crop 33, concat skip2, separable x2
//! up2          66    32 -> 16  transposed conv 33 -> 66, concat skip1, separable x2
//! out          66    16 -> 1   pointwise conv, logistic
//! ```
//!
//! A separable conv is a depthwise 5x5 filter per input channel (no bias)
//! followed by a pointwise channel mix with bias. All convolutions except the
//! output are followed by ReLU; the transposed convolutions are linear.
//!
//! Tensor layouts: full conv `[out, in, time, freq]`, depthwise
//! `[channel, time, freq]`, pointwise `[out, in]`, transposed conv
//! `[in, out, tap]` with output bin `2 * i + tap`, output layer `[1, 16]`.
//! Time tap 0 is the oldest frame (t - 4); frequency tap 0 is bin f - 2.
//! Concatenation puts the upsampled channels first, then the skip channels.

use super::weights::{TensorSpec, WeightFile};
use super::{sigmoid, Layer};
use crate::bands::{FeatureFrame, MaskFrame, NUM_FEATURES};
use crate::error::{Error, Result};

/// Filters in the first down-sampling block.
pub const CHANNELS: usize = 16;
pub const KERNEL: usize = 5;
const CONTEXT: usize = KERNEL - 1;
const HALF: usize = KERNEL / 2;

const F1: usize = NUM_FEATURES; // 66
const F2: usize = F1.div_ceil(2); // 33
const F3: usize = F2.div_ceil(2); // 17

#[derive(Debug, Clone, Copy)]
enum ConvKind {
    Full,
    Separable,
}

#[derive(Debug, Clone, Copy)]
struct ConvDef {
    name: &'static str,
    kind: ConvKind,
    cin: usize,
    cout: usize,
    freq: usize,
}

const C: usize = CHANNELS;

const NUM_CONVS: usize = 10;

const CONVS: [ConvDef; NUM_CONVS] = [
    ConvDef {
        name: "down1.conv1",
        kind: ConvKind::Full,
        cin: 1,
        cout: C,
        freq: F1,
    },
    ConvDef {
        name: "down1.conv2",
        kind: ConvKind::Separable,
        cin: C,
        cout: C,
        freq: F1,
    },
    ConvDef {
        name: "down2.conv1",
        kind: ConvKind::Separable,
        cin: C,
        cout: 2 * C,
        freq: F2,
    },
    ConvDef {
        name: "down2.conv2",
        kind: ConvKind::Separable,
        cin: 2 * C,
        cout: 2 * C,
        freq: F2,
    },
    ConvDef {
        name: "bottleneck.conv1",
        kind: ConvKind::Separable,
        cin: 2 * C,
        cout: 4 * C,
        freq: F3,
    },
    ConvDef {
        name: "bottleneck.conv2",
        kind: ConvKind::Separable,
        cin: 4 * C,
        cout: 4 * C,
        freq: F3,
    },
    ConvDef {
        name: "up1.conv1",
        kind: ConvKind::Separable,
        cin: 4 * C,
        cout: 2 * C,
        freq: F2,
    },
    ConvDef {
        name: "up1.conv2",
        kind: ConvKind::Separable,
        cin: 2 * C,
        cout: 2 * C,
        freq: F2,
    },
    ConvDef {
        name: "up2.conv1",
        kind: ConvKind::Separable,
        cin: 2 * C,
        cout: C,
        freq: F1,
    },
    ConvDef {
        name: "up2.conv2",
        kind: ConvKind::Separable,
        cin: C,
        cout: C,
        freq: F1,
    },
];

#[derive(Debug, Clone, Copy)]
struct UpDef {
    name: &'static str,
    cin: usize,
    cout: usize,
    in_freq: usize,
    out_freq: usize,
}

const UPS: [UpDef; 2] = [
    UpDef {
        name: "up1.upsample",
        cin: 4 * C,
        cout: 2 * C,
        in_freq: F3,
        out_freq: F2,
    },
    UpDef {
        name: "up2.upsample",
        cin: 2 * C,
        cout: C,
        in_freq: F2,
        out_freq: F1,
    },
];

pub(super) fn schema() -> Vec<TensorSpec> {
    let mut s = Vec::new();
    let push_conv = |s: &mut Vec<TensorSpec>, d: &ConvDef| match d.kind {
        ConvKind::Full => {
            s.push(TensorSpec::new(
                format!("{}.weight", d.name),
                &[d.cout, d.cin, KERNEL, KERNEL],
            ));
            s.push(TensorSpec::new(format!("{}.bias", d.name), &[d.cout]));
        }
        ConvKind::Separable => {
            s.push(TensorSpec::new(
                format!("{}.depthwise", d.name),
                &[d.cin, KERNEL, KERNEL],
            ));
            s.push(TensorSpec::new(
                format!("{}.pointwise", d.name),
                &[d.cout, d.cin],
            ));
            s.push(TensorSpec::new(format!("{}.bias", d.name), &[d.cout]));
        }
    };
    let push_up = |s: &mut Vec<TensorSpec>, u: &UpDef| {
        s.push(TensorSpec::new(
            format!("{}.weight", u.name),
            &[u.cin, u.cout, 2],
        ));
        s.push(TensorSpec::new(format!("{}.bias", u.name), &[u.cout]));
    };
    for d in &CONVS[..6] {
        push_conv(&mut s, d);
    }
    push_up(&mut s, &UPS[0]);
    push_conv(&mut s, &CONVS[6]);
    push_conv(&mut s, &CONVS[7]);
    push_up(&mut s, &UPS[1]);
    push_conv(&mut s, &CONVS[8]);
    push_conv(&mut s, &CONVS[9]);
    s.push(TensorSpec::new("out.weight", &[1, C]));
    s.push(TensorSpec::new("out.bias", &[1]));
    s
}

/// Multiply-accumulates for one output frame, counted as evaluated: every
/// kernel tap of every computed output position, including zero-padded taps.
pub fn macs_per_frame() -> u64 {
    let taps = KERNEL * KERNEL;
    let convs: usize = CONVS
        .iter()
        .map(|d| match d.kind {
            ConvKind::Full => d.freq * d.cout * d.cin * taps,
            ConvKind::Separable => d.freq * d.cin * taps + d.freq * d.cin * d.cout,
        })
        .sum();
    let ups: usize = UPS.iter().map(|u| u.out_freq * u.cin * u.cout).sum();
    (convs + ups + F1 * C) as u64
}

#[derive(Debug, Clone)]
struct Conv {
    def: ConvDef,
    /// Full: `[out, in, kt, kf]`; separable: depthwise `[in, kt, kf]`.
    spatial: Vec<f32>,
    /// Separable only: `[out, in]`.
    pointwise: Vec<f32>,
    bias: Vec<f32>,
}

#[derive(Debug, Clone)]
struct Upsample {
    def: UpDef,
    weight: Vec<f32>,
    bias: Vec<f32>,
}

/// Last `CONTEXT` input frames of one convolution, oldest first.
#[derive(Debug, Clone)]
struct History {
    frames: Vec<Vec<f32>>,
    head: usize,
}

impl History {
    fn new(len: usize) -> Self {
        Self {
            frames: vec![vec![0.0; len]; CONTEXT],
            head: 0,
        }
    }

    /// Frame `t - CONTEXT + kt` for `kt < CONTEXT`.
    fn past(&self, kt: usize) -> &[f32] {
        &self.frames[(self.head + kt) % CONTEXT]
    }

    fn push(&mut self, frame: &[f32]) {
        self.frames[self.head].copy_from_slice(frame);
        self.head = (self.head + 1) % CONTEXT;
    }

    fn clear(&mut self) {
        for f in &mut self.frames {
            f.fill(0.0);
        }
        self.head = 0;
    }
}

impl Conv {
    /// One output frame given the current input frame; updates the history.
    fn step(&self, input: &[f32], hist: &mut History) -> Vec<f32> {
        let d = &self.def;
        let f = d.freq;
        let frame = |kt: usize| -> &[f32] {
            if kt == CONTEXT {
                input
            } else {
                hist.past(kt)
            }
        };
        let mut out = vec![0.0f32; d.cout * f];
        match d.kind {
            ConvKind::Full => {
                for o in 0..d.cout {
                    for fo in 0..f {
                        let mut acc = self.bias[o];
                        for i in 0..d.cin {
                            for kt in 0..KERNEL {
                                let x = &frame(kt)[i * f..(i + 1) * f];
                                for kf in 0..KERNEL {
                                    let fi = fo + kf;
                                    if fi < HALF || fi - HALF >= f {
                                        continue;
                                    }
                                    let w =
                                        self.spatial[((o * d.cin + i) * KERNEL + kt) * KERNEL + kf];
                                    acc += w * x[fi - HALF];
                                }
                            }
                        }
                        out[o * f + fo] = acc.max(0.0);
                    }
                }
            }
            ConvKind::Separable => {
                let mut dw = vec![0.0f32; d.cin * f];
                for i in 0..d.cin {
                    for fo in 0..f {
                        let mut acc = 0.0f32;
                        for kt in 0..KERNEL {
                            let x = &frame(kt)[i * f..(i + 1) * f];
                            for kf in 0..KERNEL {
                                let fi = fo + kf;
                                if fi < HALF || fi - HALF >= f {
                                    continue;
                                }
                                acc += self.spatial[(i * KERNEL + kt) * KERNEL + kf] * x[fi - HALF];
                            }
                        }
                        dw[i * f + fo] = acc;
                    }
                }
                for o in 0..d.cout {
                    let w = &self.pointwise[o * d.cin..(o + 1) * d.cin];
                    for fo in 0..f {
                        let mut acc = self.bias[o];
                        for i in 0..d.cin {
                            acc += w[i] * dw[i * f + fo];
                        }
                        out[o * f + fo] = acc.max(0.0);
                    }
                }
            }
        }
        hist.push(input);
        out
    }
}

impl Upsample {
    fn apply(&self, input: &[f32]) -> Vec<f32> {
        let u = &self.def;
        let mut out = vec![0.0f32; u.cout * u.out_freq];
        for o in 0..u.cout {
            for fo in 0..u.out_freq {
                let (fi, tap) = (fo / 2, fo % 2);
                let mut acc = self.bias[o];
                for i in 0..u.cin {
                    acc += input[i * u.in_freq + fi] * self.weight[(i * u.cout + o) * 2 + tap];
                }
                out[o * u.out_freq + fo] = acc;
            }
        }
        out
    }
}

/// Frequency max-pool by two, ceil mode.
fn max_pool(input: &[f32], channels: usize, freq: usize) -> Vec<f32> {
    let half = freq.div_ceil(2);
    let mut out = vec![0.0f32; channels * half];
    for c in 0..channels {
        let x = &input[c * freq..(c + 1) * freq];
        for (j, o) in out[c * half..(c + 1) * half].iter_mut().enumerate() {
            *o = if 2 * j + 1 < freq {
                x[2 * j].max(x[2 * j + 1])
            } else {
                x[2 * j]
            };
        }
    }
    out
}

fn concat(a: &[f32], b: &[f32]) -> Vec<f32> {
    let mut v = Vec::with_capacity(a.len() + b.len());
    v.extend_from_slice(a);
    v.extend_from_slice(b);
    v
}

#[derive(Debug, Clone)]
pub struct UnetModel {
    convs: Vec<Conv>,
    ups: Vec<Upsample>,
    out_w: Vec<f32>,
    out_b: f32,
    history: Vec<History>,
}

impl UnetModel {
    pub(super) fn from_weights(file: &WeightFile) -> Result<Self> {
        let take = |name: String| -> Result<Vec<f32>> {
            file.get(&name)
                .map(|t| t.data.clone())
                .ok_or_else(|| Error::schema(name, "missing"))
        };
        let mut convs = Vec::with_capacity(NUM_CONVS);
        for d in &CONVS {
            let conv = match d.kind {
                ConvKind::Full => Conv {
                    def: *d,
                    spatial: take(format!("{}.weight", d.name))?,
                    pointwise: Vec::new(),
                    bias: take(format!("{}.bias", d.name))?,
                },
                ConvKind::Separable => Conv {
                    def: *d,
                    spatial: take(format!("{}.depthwise", d.name))?,
                    pointwise: take(format!("{}.pointwise", d.name))?,
                    bias: take(format!("{}.bias", d.name))?,
                },
            };
            convs.push(conv);
        }
        let ups = UPS
            .iter()
            .map(|u| {
                Ok(Upsample {
                    def: *u,
                    weight: take(format!("{}.weight", u.name))?,
                    bias: take(format!("{}.bias", u.name))?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let history = CONVS.iter().map(|d| History::new(d.cin * d.freq)).collect();
        Ok(Self {
            convs,
            ups,
            out_w: take("out.weight".into())?,
            out_b: take("out.bias".into())?[0],
            history,
        })
    }

    fn conv(&mut self, idx: usize, input: &[f32]) -> Vec<f32> {
        self.convs[idx].step(input, &mut self.history[idx])
    }

    fn output(&self, x: &[f32]) -> MaskFrame {
        let mut mask = MaskFrame::filled(0.0);
        for (fo, m) in mask.0.iter_mut().enumerate() {
            let mut acc = self.out_b;
            for c in 0..C {
                acc += self.out_w[c] * x[c * F1 + fo];
            }
            *m = sigmoid(acc);
        }
        mask
    }

    /// Evaluates a whole sequence with zero left context, independent of
    /// (and without touching) the streaming state.
    pub fn forward_batch(&self, frames: &[FeatureFrame]) -> Result<Vec<MaskFrame>> {
        for f in frames {
            super::gru::check_finite(f)?;
        }
        let t = frames.len();
        let input = Seq {
            channels: 1,
            time: t,
            freq: F1,
            data: frames.iter().flat_map(|f| f.0.iter().copied()).collect(),
        };
        let a = batch::conv(&self.convs[0], &input);
        let skip1 = batch::conv(&self.convs[1], &a);
        let p1 = batch::pool(&skip1);
        let b = batch::conv(&self.convs[2], &p1);
        let skip2 = batch::conv(&self.convs[3], &b);
        let p2 = batch::pool(&skip2);
        let c = batch::conv(&self.convs[4], &p2);
        let c = batch::conv(&self.convs[5], &c);
        let u = batch::concat(&batch::upsample(&self.ups[0], &c), &skip2);
        let u = batch::conv(&self.convs[6], &u);
        let u = batch::conv(&self.convs[7], &u);
        let u = batch::concat(&batch::upsample(&self.ups[1], &u), &skip1);
        let u = batch::conv(&self.convs[8], &u);
        let u = batch::conv(&self.convs[9], &u);
        Ok((0..t)
            .map(|ti| {
                let mut frame = vec![0.0f32; C * F1];
                for c in 0..C {
                    frame[c * F1..(c + 1) * F1].copy_from_slice(u.row(c, ti));
                }
                self.output(&frame)
            })
            .collect())
    }
}

impl Layer for UnetModel {
    fn step(&mut self, features: &FeatureFrame) -> Result<MaskFrame> {
        super::gru::check_finite(features)?;
        let a = self.conv(0, &features.0);
        let skip1 = self.conv(1, &a);
        let p1 = max_pool(&skip1, C, F1);
        let b = self.conv(2, &p1);
        let skip2 = self.conv(3, &b);
        let p2 = max_pool(&skip2, 2 * C, F2);
        let c = self.conv(4, &p2);
        let c = self.conv(5, &c);
        let u = concat(&self.ups[0].apply(&c), &skip2);
        let u = self.conv(6, &u);
        let u = self.conv(7, &u);
        let u = concat(&self.ups[1].apply(&u), &skip1);
        let u = self.conv(8, &u);
        let u = self.conv(9, &u);
        Ok(self.output(&u))
    }

    fn reset(&mut self) {
        for h in &mut self.history {
            h.clear();
        }
    }
}

/// Activations over a whole sequence, `[channel, time, freq]`.
struct Seq {
    channels: usize,
    time: usize,
    freq: usize,
    data: Vec<f32>,
}

impl Seq {
    fn zeros(channels: usize, time: usize, freq: usize) -> Self {
        Self {
            channels,
            time,
            freq,
            data: vec![0.0; channels * time * freq],
        }
    }

    fn row(&self, c: usize, t: usize) -> &[f32] {
        let s = (c * self.time + t) * self.freq;
        &self.data[s..s + self.freq]
    }

    /// Zero outside the causal time range and the frequency range.
    fn at(&self, c: usize, t: isize, f: isize) -> f32 {
        if t < 0 || f < 0 || f as usize >= self.freq {
            0.0
        } else {
            self.data[(c * self.time + t as usize) * self.freq + f as usize]
        }
    }
}

/// Sequence-level kernels: explicit 2-D convolution over the padded
/// (time, frequency) plane.
mod batch {
    use super::*;

    pub(super) fn conv(layer: &Conv, x: &Seq) -> Seq {
        let d = &layer.def;
        assert_eq!(x.channels, d.cin);
        assert_eq!(x.freq, d.freq);
        let (tn, fnum) = (x.time, x.freq);
        let tap = |t: usize, kt: usize, f: usize, kf: usize| {
            (
                t as isize - CONTEXT as isize + kt as isize,
                f as isize + kf as isize - HALF as isize,
            )
        };
        let mut out = Seq::zeros(d.cout, tn, fnum);
        match d.kind {
            ConvKind::Full => {
                for o in 0..d.cout {
                    for t in 0..tn {
                        for f in 0..fnum {
                            let mut acc = layer.bias[o];
                            for i in 0..d.cin {
                                for kt in 0..KERNEL {
                                    for kf in 0..KERNEL {
                                        let (ti, fi) = tap(t, kt, f, kf);
                                        let w = layer.spatial
                                            [((o * d.cin + i) * KERNEL + kt) * KERNEL + kf];
                                        acc += w * x.at(i, ti, fi);
                                    }
                                }
                            }
                            out.data[(o * tn + t) * fnum + f] = acc.max(0.0);
                        }
                    }
                }
            }
            ConvKind::Separable => {
                let mut dw = Seq::zeros(d.cin, tn, fnum);
                for i in 0..d.cin {
                    for t in 0..tn {
                        for f in 0..fnum {
                            let mut acc = 0.0f32;
                            for kt in 0..KERNEL {
                                for kf in 0..KERNEL {
                                    let (ti, fi) = tap(t, kt, f, kf);
                                    acc += layer.spatial[(i * KERNEL + kt) * KERNEL + kf]
                                        * x.at(i, ti, fi);
                                }
                            }
                            dw.data[(i * tn + t) * fnum + f] = acc;
                        }
                    }
                }
                for o in 0..d.cout {
                    for t in 0..tn {
                        for f in 0..fnum {
                            let mut acc = layer.bias[o];
                            for i in 0..d.cin {
                                acc += layer.pointwise[o * d.cin + i]
                                    * dw.data[(i * tn + t) * fnum + f];
                            }
                            out.data[(o * tn + t) * fnum + f] = acc.max(0.0);
                        }
                    }
                }
            }
        }
        out
    }

    pub(super) fn pool(x: &Seq) -> Seq {
        let half = x.freq.div_ceil(2);
        let mut out = Seq::zeros(x.channels, x.time, half);
        for c in 0..x.channels {
            for t in 0..x.time {
                for j in 0..half {
                    let a = x.at(c, t as isize, 2 * j as isize);
                    let v = if 2 * j + 1 < x.freq {
                        a.max(x.at(c, t as isize, 2 * j as isize + 1))
                    } else {
                        a
                    };
                    out.data[(c * x.time + t) * half + j] = v;
                }
            }
        }
        out
    }

    pub(super) fn upsample(layer: &Upsample, x: &Seq) -> Seq {
        let u = &layer.def;
        let mut out = Seq::zeros(u.cout, x.time, u.out_freq);
        for o in 0..u.cout {
            for t in 0..x.time {
                for fo in 0..u.out_freq {
                    let mut acc = layer.bias[o];
                    for i in 0..u.cin {
                        acc += x.at(i, t as isize, (fo / 2) as isize)
                            * layer.weight[(i * u.cout + o) * 2 + fo % 2];
                    }
                    out.data[(o * x.time + t) * u.out_freq + fo] = acc;
                }
            }
        }
        out
    }

    pub(super) fn concat(a: &Seq, b: &Seq) -> Seq {
        assert_eq!((a.time, a.freq), (b.time, b.freq));
        let mut data = a.data.clone();
        data.extend_from_slice(&b.data);
        Seq {
            channels: a.channels + b.channels,
            time: a.time,
            freq: a.freq,
            data,
        }
    }
}
