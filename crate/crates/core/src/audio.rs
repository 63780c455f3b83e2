//! Sampled waveforms and mono WAV I/O.

use std::path::Path;

use crate::error::{Error, Result};

/// Sample rates accepted at pipeline boundaries.
pub const SUPPORTED_RATES: [u32; 2] = [16_000, 32_000];

/// On-disk sample encoding.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleFormat {
    /// 16-bit signed little-endian PCM.
    Pcm16,
    /// 32-bit IEEE-754 float.
    Float32,
}

/// A mono waveform with amplitudes nominally in [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct AudioBuffer {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl AudioBuffer {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Self {
        Self {
            samples,
            sample_rate,
        }
    }

    pub fn zeros(len: usize, sample_rate: u32) -> Self {
        Self::new(vec![0.0; len], sample_rate)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    /// Mean power over the whole buffer.
    pub fn power(&self) -> f64 {
        mean_power(&self.samples)
    }

    /// Checks the boundary invariants: finite samples and a supported rate.
    pub fn validate(&self) -> Result<()> {
        if !SUPPORTED_RATES.contains(&self.sample_rate) {
            return Err(Error::usage(format!(
                "unsupported sample rate {} Hz (expected 16000 or 32000)",
                self.sample_rate
            )));
        }
        if let Some(i) = self.samples.iter().position(|s| !s.is_finite()) {
            return Err(Error::usage(format!("non-finite sample at index {i}")));
        }
        Ok(())
    }
}

pub(crate) fn mean_power(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64
}

/// Reads a mono 16-bit PCM or 32-bit float WAV at 16 or 32 kHz.
pub fn read_wav(path: impl AsRef<Path>) -> Result<(AudioBuffer, SampleFormat)> {
    let path = path.as_ref();
    let wav_err = |source| Error::Wav {
        path: path.to_owned(),
        source,
    };
    let mut reader = hound::WavReader::open(path).map_err(wav_err)?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(Error::Format(format!(
            "{}: expected mono audio, found {} channels",
            path.display(),
            spec.channels
        )));
    }
    if !SUPPORTED_RATES.contains(&spec.sample_rate) {
        return Err(Error::Format(format!(
            "{}: unsupported sample rate {} Hz (expected 16000 or 32000)",
            path.display(),
            spec.sample_rate
        )));
    }
    let (samples, format) = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Int, 16) => {
            let s = reader
                .samples::<i16>()
                .map(|s| s.map(|v| v as f64 / 32768.0))
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(wav_err)?;
            (s, SampleFormat::Pcm16)
        }
        (hound::SampleFormat::Float, 32) => {
            let s = reader
                .samples::<f32>()
                .map(|s| s.map(|v| v as f64))
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(wav_err)?;
            (s, SampleFormat::Float32)
        }
        (fmt, bits) => {
            return Err(Error::Format(format!(
                "{}: unsupported encoding {fmt:?} with {bits} bits (expected 16-bit PCM or 32-bit float)",
                path.display()
            )))
        }
    };
    let buf = AudioBuffer::new(samples, spec.sample_rate);
    buf.validate()?;
    Ok((buf, format))
}

/// Writes a mono WAV. PCM output is clipped to [-1, 1) and rounded.
pub fn write_wav(path: impl AsRef<Path>, audio: &AudioBuffer, format: SampleFormat) -> Result<()> {
    let path = path.as_ref();
    let wav_err = |source| Error::Wav {
        path: path.to_owned(),
        source,
    };
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: audio.sample_rate,
        bits_per_sample: match format {
            SampleFormat::Pcm16 => 16,
            SampleFormat::Float32 => 32,
        },
        sample_format: match format {
            SampleFormat::Pcm16 => hound::SampleFormat::Int,
            SampleFormat::Float32 => hound::SampleFormat::Float,
        },
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(wav_err)?;
    for &s in &audio.samples {
        match format {
            SampleFormat::Pcm16 => {
                let v = (s * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
                writer.write_sample(v).map_err(wav_err)?;
            }
            SampleFormat::Float32 => writer.write_sample(s as f32).map_err(wav_err)?,
        }
    }
    writer.finalize().map_err(wav_err)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_wav_round_trip_is_exact_at_f32() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.wav");
        let x: Vec<f64> = (0..100).map(|i| ((i as f64) * 0.1).sin() * 0.5).collect();
        let buf = AudioBuffer::new(x.clone(), 32_000);
        write_wav(&path, &buf, SampleFormat::Float32).unwrap();
        let (back, fmt) = read_wav(&path).unwrap();
        assert_eq!(fmt, SampleFormat::Float32);
        assert_eq!(back.sample_rate, 32_000);
        for (a, b) in x.iter().zip(&back.samples) {
            assert_eq!(*a as f32 as f64, *b);
        }
    }

    #[test]
    fn pcm_wav_round_trip_within_quantization() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.wav");
        let x: Vec<f64> = (0..100).map(|i| ((i as f64) * 0.3).cos() * 0.9).collect();
        write_wav(
            &path,
            &AudioBuffer::new(x.clone(), 16_000),
            SampleFormat::Pcm16,
        )
        .unwrap();
        let (back, fmt) = read_wav(&path).unwrap();
        assert_eq!(fmt, SampleFormat::Pcm16);
        for (a, b) in x.iter().zip(&back.samples) {
            assert!((a - b).abs() <= 0.5 / 32768.0 + 1e-12);
        }
    }

    #[test]
    fn rejects_stereo_and_odd_rates() {
        let dir = tempfile::tempdir().unwrap();
        let stereo = dir.path().join("s.wav");
        let spec = hound::WavSpec {
            channels: 2,
            sample_rate: 32_000,
            bits_per_sample: 16,
            sample_format: hound::SampleFormat::Int,
        };
        let mut w = hound::WavWriter::create(&stereo, spec).unwrap();
        w.write_sample(0i16).unwrap();
        w.write_sample(0i16).unwrap();
        w.finalize().unwrap();
        let err = read_wav(&stereo).unwrap_err().to_string();
        assert!(err.contains("mono"), "{err}");

        let odd = dir.path().join("o.wav");
        let spec = hound::WavSpec {
            channels: 1,
            sample_rate: 44_100,
            ..spec
        };
        let mut w = hound::WavWriter::create(&odd, spec).unwrap();
        w.write_sample(0i16).unwrap();
        w.finalize().unwrap();
        let err = read_wav(&odd).unwrap_err().to_string();
        assert!(err.contains("44100"), "{err}");
    }

    #[test]
    fn validate_flags_non_finite() {
        let buf = AudioBuffer::new(vec![0.0, f64::NAN], 32_000);
        assert!(matches!(buf.validate(), Err(Error::Usage(_))));
        assert!(AudioBuffer::zeros(4, 48_000).validate().is_err());
    }
}
