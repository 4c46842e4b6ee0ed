//! WAV ingestion and the in-memory clip representation.
//!
//! Files are decoded to mono `f64` samples in `[-1, 1]`. Supported inputs are
//! RIFF/WAVE with 16-bit PCM or 32-bit IEEE float payloads, mono or stereo.
//! Output is always 16-bit PCM mono.

use std::io::Read;
use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use crate::error::{Error, Result};

/// Pipeline sample rate used when a corpus is not resampled explicitly.
pub const DEFAULT_SAMPLE_RATE: u32 = 44_100;

const PCM16_SCALE: f64 = 32_768.0;

#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    samples: Vec<f64>,
    sample_rate: u32,
}

impl AudioClip {
    /// Builds a clip, clamping samples into `[-1, 1]`.
    ///
    /// Panics if `sample_rate` is zero.
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Self {
        assert!(sample_rate > 0, "sample rate must be positive");
        let samples = samples.into_iter().map(clip_sample).collect();
        AudioClip {
            samples,
            sample_rate,
        }
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_ms(&self) -> f64 {
        self.samples.len() as f64 * 1000.0 / self.sample_rate as f64
    }

    /// Largest absolute sample value.
    pub fn peak(&self) -> f64 {
        self.samples.iter().fold(0.0, |m, s| m.max(s.abs()))
    }

    /// Mean squared sample value.
    pub fn power(&self) -> f64 {
        mean_power(&self.samples)
    }
}

pub(crate) fn clip_sample(s: f64) -> f64 {
    if s.is_nan() {
        0.0
    } else {
        s.clamp(-1.0, 1.0)
    }
}

pub(crate) fn mean_power(samples: &[f64]) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    samples.iter().map(|s| s * s).sum::<f64>() / samples.len() as f64
}

pub fn read_wav(path: impl AsRef<Path>) -> Result<AudioClip> {
    let path = path.as_ref();
    let reader = WavReader::open(path).map_err(|e| match e {
        hound::Error::IoError(io) if io.kind() == std::io::ErrorKind::NotFound => {
            Error::FileNotFound(path.to_path_buf())
        }
        other => map_hound_error(other),
    })?;
    decode(reader)
}

/// Decodes WAV data from any seekable reader.
pub fn read_wav_from<R: Read>(reader: R) -> Result<AudioClip> {
    decode(WavReader::new(reader).map_err(map_hound_error)?)
}

fn map_hound_error(e: hound::Error) -> Error {
    match e {
        hound::Error::IoError(io) if io.kind() == std::io::ErrorKind::UnexpectedEof => {
            Error::MalformedHeader("unexpected end of file".into())
        }
        hound::Error::IoError(io) => Error::Io(io),
        hound::Error::Unsupported => Error::UnsupportedFormat("unsupported WAV encoding".into()),
        hound::Error::FormatError(msg) => Error::MalformedHeader(msg.to_string()),
        other => Error::MalformedHeader(other.to_string()),
    }
}

fn decode<R: Read>(mut reader: WavReader<R>) -> Result<AudioClip> {
    let spec = reader.spec();
    if spec.sample_rate == 0 {
        return Err(Error::MalformedHeader("sample rate is zero".into()));
    }
    let channels = spec.channels as usize;
    if channels == 0 || channels > 2 {
        return Err(Error::UnsupportedFormat(format!(
            "{channels} channels (mono or stereo only)"
        )));
    }
    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Int, 16) => reader
            .samples::<i16>()
            .map(|s| s.map(|v| v as f64 / PCM16_SCALE))
            .collect::<std::result::Result<_, _>>()
            .map_err(map_hound_error)?,
        (SampleFormat::Float, 32) => reader
            .samples::<f32>()
            .map(|s| s.map(|v| v as f64))
            .collect::<std::result::Result<_, _>>()
            .map_err(map_hound_error)?,
        (format, bits) => {
            return Err(Error::UnsupportedFormat(format!(
                "{bits}-bit {format:?} samples (16-bit PCM or 32-bit float only)"
            )))
        }
    };
    let samples = if channels == 2 {
        interleaved
            .chunks_exact(2)
            .map(|frame| (frame[0] + frame[1]) / 2.0)
            .collect()
    } else {
        interleaved
    };
    Ok(AudioClip::new(samples, spec.sample_rate))
}

fn pcm16_spec(sample_rate: u32) -> WavSpec {
    WavSpec {
        channels: 1,
        sample_rate,
        bits_per_sample: 16,
        sample_format: SampleFormat::Int,
    }
}

/// Quantizes a sample to 16-bit PCM, saturating at the format limits.
pub fn quantize_pcm16(s: f64) -> i16 {
    (clip_sample(s) * PCM16_SCALE)
        .round()
        .clamp(i16::MIN as f64, i16::MAX as f64) as i16
}

pub fn write_wav(clip: &AudioClip, path: impl AsRef<Path>) -> Result<()> {
    if clip.is_empty() {
        return Err(Error::EmptyClip);
    }
    let mut writer =
        WavWriter::create(path, pcm16_spec(clip.sample_rate)).map_err(map_hound_error)?;
    for &s in &clip.samples {
        writer
            .write_sample(quantize_pcm16(s))
            .map_err(map_hound_error)?;
    }
    writer.finalize().map_err(map_hound_error)?;
    Ok(())
}

/// Linear interpolation of `samples` at fractional position `pos`.
/// Positions past the last sample hold the last value.
pub(crate) fn interpolate_at(samples: &[f64], pos: f64) -> f64 {
    let last = samples.len() - 1;
    let base = pos.floor();
    let i = base as usize;
    if i >= last {
        return samples[last];
    }
    let frac = pos - base;
    if frac == 0.0 {
        samples[i]
    } else {
        samples[i] + (samples[i + 1] - samples[i]) * frac
    }
}

/// Reads `out_len` samples at positions `0, step, 2*step, ...`.
pub(crate) fn stretch_linear(samples: &[f64], out_len: usize, step: f64) -> Vec<f64> {
    (0..out_len)
        .map(|i| interpolate_at(samples, i as f64 * step))
        .collect()
}

/// Linear-interpolation resampler. Output length is
/// `round(len * target_rate / source_rate)`.
pub fn resample(clip: &AudioClip, target_rate: u32) -> Result<AudioClip> {
    if clip.is_empty() {
        return Err(Error::EmptyClip);
    }
    if target_rate == 0 {
        return Err(Error::InvalidConfig("target rate must be positive".into()));
    }
    if target_rate == clip.sample_rate {
        return Ok(clip.clone());
    }
    let ratio = target_rate as f64 / clip.sample_rate as f64;
    let out_len = ((clip.len() as f64 * ratio).round() as usize).max(1);
    let step = clip.sample_rate as f64 / target_rate as f64;
    Ok(AudioClip {
        samples: stretch_linear(&clip.samples, out_len, step),
        sample_rate: target_rate,
    })
}
