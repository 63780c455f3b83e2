//! Simulated noisy mixtures: SNR-controlled mixing, channel impulse
//! responses, the 150 Hz Butterworth high-pass and test-set generation.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use realfft::num_complex::Complex64;

use crate::audio::{mean_power, read_wav, write_wav, AudioBuffer, SampleFormat};
use crate::error::{Error, Result};
use crate::resample::{resample_2x, Direction};
use crate::PROCESSING_RATE;

pub const DEFAULT_HP_CUTOFF_HZ: f64 = 150.0;
pub const MANIFEST_FILE: &str = "manifest.tsv";
pub const MIX_DIR: &str = "mix";
pub const CLEAN_DIR: &str = "clean";
const MANIFEST_HEADER: &str = "# id\tspeech_path\tnoise_path\tsnr_db\tnoise_gain\toffset_samples";

/// Parameters of test-set generation.
#[derive(Debug, Clone, PartialEq)]
pub struct MixSpec {
    pub snr_min_db: f64,
    pub snr_max_db: f64,
    pub hp_cutoff_hz: f64,
    pub seed: u64,
    /// Optional uniform speech-level randomization in dB. Off by default so the
    /// reference track equals the channel-filtered source speech.
    pub level_range_db: Option<(f64, f64)>,
}

impl Default for MixSpec {
    fn default() -> Self {
        Self {
            snr_min_db: -5.0,
            snr_max_db: 5.0,
            hp_cutoff_hz: DEFAULT_HP_CUTOFF_HZ,
            seed: 0,
            level_range_db: None,
        }
    }
}

impl MixSpec {
    pub fn validate(&self) -> Result<()> {
        let finite = [self.snr_min_db, self.snr_max_db, self.hp_cutoff_hz]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::config("mixing parameters must be finite"));
        }
        if self.snr_min_db > self.snr_max_db {
            return Err(Error::config(format!(
                "snr range [{}, {}] is empty",
                self.snr_min_db, self.snr_max_db
            )));
        }
        if let Some((lo, hi)) = self.level_range_db {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(Error::config(format!(
                    "level range [{lo}, {hi}] is invalid"
                )));
            }
        }
        if !(self.hp_cutoff_hz > 0.0 && self.hp_cutoff_hz < PROCESSING_RATE as f64 / 2.0) {
            return Err(Error::config(format!(
                "high-pass cutoff {} Hz outside (0, {})",
                self.hp_cutoff_hz,
                PROCESSING_RATE / 2
            )));
        }
        Ok(())
    }
}

/// Result of [`mix_at_snr`], keeping the scaled noise component around for
/// SNR checks.
#[derive(Debug, Clone)]
pub struct Mixture {
    pub mixture: AudioBuffer,
    pub scaled_noise: AudioBuffer,
    pub noise_gain: f64,
}

/// Noise gain `g = sqrt(P_s / (P_n 10^(snr/10)))`.
pub fn noise_gain(speech_power: f64, noise_power: f64, snr_db: f64) -> f64 {
    (speech_power / (noise_power * 10f64.powf(snr_db / 10.0))).sqrt()
}

/// Power ratio of two components in dB.
pub fn snr_db(speech: &[f64], noise: &[f64]) -> f64 {
    10.0 * (mean_power(speech) / mean_power(noise)).log10()
}

/// `len` samples of `noise` read circularly from `offset`.
pub fn tile(noise: &[f64], len: usize, offset: usize) -> Vec<f64> {
    if noise.is_empty() {
        return vec![0.0; len];
    }
    noise
        .iter()
        .cycle()
        .skip(offset % noise.len())
        .take(len)
        .copied()
        .collect()
}

/// `speech + g * noise`; noise shorter than speech is tiled from its start.
pub fn mix_at_snr(speech: &AudioBuffer, noise: &AudioBuffer, snr_db: f64) -> Result<Mixture> {
    if speech.sample_rate != noise.sample_rate {
        return Err(Error::usage(format!(
            "sample rates differ: speech {} Hz, noise {} Hz",
            speech.sample_rate, noise.sample_rate
        )));
    }
    if !snr_db.is_finite() {
        return Err(Error::usage("snr must be finite"));
    }
    let noise = tile(&noise.samples, speech.len(), 0);
    let (ps, pn) = (speech.power(), mean_power(&noise));
    if ps == 0.0 {
        return Err(Error::usage("speech has zero power"));
    }
    if pn == 0.0 {
        return Err(Error::usage("noise has zero power"));
    }
    let g = noise_gain(ps, pn, snr_db);
    let scaled: Vec<f64> = noise.iter().map(|n| g * n).collect();
    let mix = speech
        .samples
        .iter()
        .zip(&scaled)
        .map(|(s, n)| s + n)
        .collect();
    Ok(Mixture {
        mixture: AudioBuffer::new(mix, speech.sample_rate),
        scaled_noise: AudioBuffer::new(scaled, speech.sample_rate),
        noise_gain: g,
    })
}

/// Direct-form-I biquad, `a[0]` normalized to 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 3],
}

impl Biquad {
    /// Second-order Butterworth high-pass by the bilinear transform with the
    /// cutoff pre-warped.
    pub fn butterworth_highpass(cutoff_hz: f64, sample_rate: f64) -> Result<Self> {
        if !(cutoff_hz > 0.0 && cutoff_hz < sample_rate / 2.0) {
            return Err(Error::config(format!(
                "cutoff {cutoff_hz} Hz outside (0, {})",
                sample_rate / 2.0
            )));
        }
        let k = (std::f64::consts::PI * cutoff_hz / sample_rate).tan();
        let s2 = std::f64::consts::SQRT_2;
        let norm = 1.0 / (1.0 + s2 * k + k * k);
        Ok(Self {
            b: [norm, -2.0 * norm, norm],
            a: [
                1.0,
                2.0 * (k * k - 1.0) * norm,
                (1.0 - s2 * k + k * k) * norm,
            ],
        })
    }

    pub fn response(&self, freq_hz: f64, sample_rate: f64) -> Complex64 {
        let z1 = Complex64::from_polar(1.0, -2.0 * std::f64::consts::PI * freq_hz / sample_rate);
        let z2 = z1 * z1;
        (self.b[0] + z1 * self.b[1] + z2 * self.b[2])
            / (self.a[0] + z1 * self.a[1] + z2 * self.a[2])
    }

    /// Roots of `z^2 + a1 z + a2`.
    pub fn poles(&self) -> [Complex64; 2] {
        let (a1, a2) = (self.a[1], self.a[2]);
        let disc = Complex64::new(a1 * a1 - 4.0 * a2, 0.0).sqrt();
        [(-a1 + disc) / 2.0, (-a1 - disc) / 2.0]
    }

    /// Filters from zero initial conditions.
    pub fn filter(&self, x: &[f64]) -> Vec<f64> {
        let [b0, b1, b2] = self.b;
        let [_, a1, a2] = self.a;
        let (mut x1, mut x2, mut y1, mut y2) = (0.0, 0.0, 0.0, 0.0);
        x.iter()
            .map(|&x0| {
                let y0 = b0 * x0 + b1 * x1 + b2 * x2 - a1 * y1 - a2 * y2;
                x2 = x1;
                x1 = x0;
                y2 = y1;
                y1 = y0;
                y0
            })
            .collect()
    }
}

pub fn highpass(x: &AudioBuffer, cutoff_hz: f64) -> Result<AudioBuffer> {
    let f = Biquad::butterworth_highpass(cutoff_hz, x.sample_rate as f64)?;
    Ok(AudioBuffer::new(f.filter(&x.samples), x.sample_rate))
}

/// Full linear convolution truncated to the speech length.
pub fn convolve_ir(speech: &AudioBuffer, ir: &AudioBuffer) -> Result<AudioBuffer> {
    if ir.is_empty() {
        return Err(Error::usage("impulse response is empty"));
    }
    if speech.sample_rate != ir.sample_rate {
        return Err(Error::usage(format!(
            "sample rates differ: speech {} Hz, impulse response {} Hz",
            speech.sample_rate, ir.sample_rate
        )));
    }
    let x = &speech.samples;
    let h = &ir.samples;
    let y = (0..x.len())
        .map(|n| {
            let kmax = n.min(h.len() - 1);
            (0..=kmax).map(|k| h[k] * x[n - k]).sum()
        })
        .collect();
    Ok(AudioBuffer::new(y, speech.sample_rate))
}

/// One generated item.
#[derive(Debug, Clone, PartialEq)]
pub struct ManifestRow {
    pub id: String,
    pub speech_path: PathBuf,
    pub noise_path: PathBuf,
    pub snr_db: f64,
    pub noise_gain: f64,
    pub offset_samples: u64,
}

/// Tab-separated list of generated items. Mixtures live in `mix/{id}.wav`
/// and references in `clean/{id}.wav` next to the manifest.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Manifest {
    pub base_dir: PathBuf,
    pub rows: Vec<ManifestRow>,
}

impl Manifest {
    pub fn mixture_path(&self, id: &str) -> PathBuf {
        self.base_dir.join(MIX_DIR).join(format!("{id}.wav"))
    }

    pub fn reference_path(&self, id: &str) -> PathBuf {
        self.base_dir.join(CLEAN_DIR).join(format!("{id}.wav"))
    }

    pub fn to_tsv(&self) -> String {
        let mut s = String::new();
        s.push_str(MANIFEST_HEADER);
        s.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{}\t{}\t{}\t{}\t{}\t{}",
                r.id,
                r.speech_path.display(),
                r.noise_path.display(),
                r.snr_db,
                r.noise_gain,
                r.offset_samples
            );
        }
        s
    }

    pub fn parse(text: &str, base_dir: impl Into<PathBuf>) -> Result<Self> {
        let mut rows = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = |what: &str| Error::Format(format!("manifest line {}: {what}", lineno + 1));
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() != 6 {
                return Err(bad(&format!("expected 6 fields, found {}", f.len())));
            }
            let num = |i: usize, name: &str| -> Result<f64> {
                f[i].parse::<f64>()
                    .map_err(|_| bad(&format!("bad {name} `{}`", f[i])))
            };
            rows.push(ManifestRow {
                id: f[0].to_string(),
                speech_path: PathBuf::from(f[1]),
                noise_path: PathBuf::from(f[2]),
                snr_db: num(3, "snr_db")?,
                noise_gain: num(4, "noise_gain")?,
                offset_samples: f[5]
                    .parse()
                    .map_err(|_| bad(&format!("bad offset_samples `{}`", f[5])))?,
            });
        }
        Ok(Self {
            base_dir: base_dir.into(),
            rows,
        })
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&text, base)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_tsv()).map_err(|e| Error::io(path, e))
    }
}

/// Sorted `.wav` files of a directory.
pub fn list_wavs(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut out = Vec::new();
    for e in entries {
        let p = e.map_err(|e| Error::io(dir, e))?.path();
        let is_wav = p
            .extension()
            .and_then(|x| x.to_str())
            .is_some_and(|x| x.eq_ignore_ascii_case("wav"));
        if is_wav && p.is_file() {
            out.push(p);
        }
    }
    out.sort();
    if out.is_empty() {
        return Err(Error::usage(format!("no .wav files in {}", dir.display())));
    }
    Ok(out)
}

/// Reads a WAV and brings it to the processing rate.
pub fn read_at_processing_rate(path: &Path) -> Result<AudioBuffer> {
    let (buf, _) = read_wav(path)?;
    Ok(if buf.sample_rate == PROCESSING_RATE {
        buf
    } else {
        resample_2x(&buf, Direction::Up)
    })
}

/// Random choices for one item, drawn up front so parallel generation stays
/// deterministic.
#[derive(Debug, Clone)]
struct Draw {
    speech: usize,
    noise: usize,
    ir: Option<usize>,
    snr_db: f64,
    level_db: f64,
    offset_seed: u64,
}

/// Input directories for [`make_test_set`].
#[derive(Debug, Clone)]
pub struct Sources {
    pub speech_dir: PathBuf,
    pub noise_dir: PathBuf,
    pub ir_dir: Option<PathBuf>,
}

/// Generates `count` mixture/reference pairs under `out_dir` and writes the
/// manifest. Deterministic for a given seed.
pub fn make_test_set(
    sources: &Sources,
    spec: &MixSpec,
    count: usize,
    out_dir: &Path,
) -> Result<Manifest> {
    spec.validate()?;
    let speech = list_wavs(&sources.speech_dir)?;
    let noise = list_wavs(&sources.noise_dir)?;
    let irs = match &sources.ir_dir {
        Some(d) => list_wavs(d)?,
        None => Vec::new(),
    };

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let draws: Vec<Draw> = (0..count)
        .map(|_| Draw {
            speech: rng.random_range(0..speech.len()),
            noise: rng.random_range(0..noise.len()),
            ir: (!irs.is_empty()).then(|| rng.random_range(0..irs.len())),
            snr_db: if spec.snr_min_db == spec.snr_max_db {
                spec.snr_min_db
            } else {
                rng.random_range(spec.snr_min_db..=spec.snr_max_db)
            },
            level_db: match spec.level_range_db {
                Some((lo, hi)) if lo < hi => rng.random_range(lo..=hi),
                Some((lo, _)) => lo,
                None => 0.0,
            },
            offset_seed: rng.random(),
        })
        .collect();

    for sub in [MIX_DIR, CLEAN_DIR] {
        let d = out_dir.join(sub);
        fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
    }
    let width = count.saturating_sub(1).to_string().len().max(5);
    let manifest = Manifest {
        base_dir: out_dir.to_path_buf(),
        rows: Vec::new(),
    };

    let rows: Vec<ManifestRow> = draws
        .par_iter()
        .enumerate()
        .map(|(i, d)| {
            let id = format!("{i:0width$}");
            generate_item(&id, d, &speech, &noise, &irs, spec, &manifest).map_err(|e| match e {
                Error::Usage(m) => Error::Usage(format!("item {id}: {m}")),
                other => other,
            })
        })
        .collect::<Result<_>>()?;

    let manifest = Manifest { rows, ..manifest };
    manifest.write(out_dir.join(MANIFEST_FILE))?;
    Ok(manifest)
}

fn generate_item(
    id: &str,
    d: &Draw,
    speech: &[PathBuf],
    noise: &[PathBuf],
    irs: &[PathBuf],
    spec: &MixSpec,
    manifest: &Manifest,
) -> Result<ManifestRow> {
    let mut s = read_at_processing_rate(&speech[d.speech])?;
    if let Some(k) = d.ir {
        s = convolve_ir(&s, &read_at_processing_rate(&irs[k])?)?;
    }
    if d.level_db != 0.0 {
        let g = 10f64.powf(d.level_db / 20.0);
        s.samples.iter_mut().for_each(|v| *v *= g);
    }
    let n = read_at_processing_rate(&noise[d.noise])?;
    if n.is_empty() {
        return Err(Error::usage(format!(
            "{} is empty",
            noise[d.noise].display()
        )));
    }
    let offset = (d.offset_seed % n.len() as u64) as usize;
    let fitted = AudioBuffer::new(tile(&n.samples, s.len(), offset), n.sample_rate);
    let mixed = mix_at_snr(&s, &fitted, d.snr_db)?;

    let mixture = highpass(&mixed.mixture, spec.hp_cutoff_hz)?;
    let reference = highpass(&s, spec.hp_cutoff_hz)?;
    write_wav(manifest.mixture_path(id), &mixture, SampleFormat::Float32)?;
    write_wav(
        manifest.reference_path(id),
        &reference,
        SampleFormat::Float32,
    )?;
    Ok(ManifestRow {
        id: id.to_string(),
        speech_path: speech[d.speech].clone(),
        noise_path: noise[d.noise].clone(),
        snr_db: d.snr_db,
        noise_gain: mixed.noise_gain,
        offset_samples: offset as u64,
    })
}
