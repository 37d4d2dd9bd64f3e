use std::path::Path;

use crate::error::{Error, Result};

pub const CANONICAL_SAMPLE_RATE: u32 = 16_000;

/// Mono PCM waveform with amplitudes in [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    pub samples: Vec<f32>,
    pub sample_rate: u32,
    /// Time-scale factor this clip was produced with; 1.0 for originals.
    pub source_alpha: f64,
}

impl AudioClip {
    pub fn new(samples: Vec<f32>, sample_rate: u32) -> Result<Self> {
        let clip = AudioClip {
            samples,
            sample_rate,
            source_alpha: 1.0,
        };
        clip.validate()?;
        Ok(clip)
    }

    pub fn validate(&self) -> Result<()> {
        if self.sample_rate == 0 {
            return Err(Error::Argument("sample rate must be positive".into()));
        }
        if self.samples.is_empty() {
            return Err(Error::TooShort { have: 0, need: 1 });
        }
        if let Some(i) = self.samples.iter().position(|s| !s.is_finite()) {
            return Err(Error::Argument(format!("non-finite sample at index {i}")));
        }
        if !(self.source_alpha > 0.0 && self.source_alpha.is_finite()) {
            return Err(Error::Argument("source_alpha must be positive".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    pub fn rms(&self) -> f64 {
        let sum: f64 = self.samples.iter().map(|&s| (s as f64) * (s as f64)).sum();
        (sum / self.samples.len().max(1) as f64).sqrt()
    }
}

/// Reads a RIFF/WAVE file holding 16-bit mono PCM.
pub fn load_wav(path: impl AsRef<Path>) -> Result<AudioClip> {
    let path = path.as_ref();
    let reader = hound::WavReader::open(path).map_err(|e| match e {
        hound::Error::IoError(io) => Error::io(path, io),
        other => Error::format(path, other.to_string()),
    })?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(Error::UnsupportedFormat {
            path: path.into(),
            reason: format!("{} channels, only mono is accepted", spec.channels),
        });
    }
    if spec.sample_format != hound::SampleFormat::Int || spec.bits_per_sample != 16 {
        return Err(Error::UnsupportedFormat {
            path: path.into(),
            reason: format!(
                "{:?} {}-bit samples, only 16-bit PCM is accepted",
                spec.sample_format, spec.bits_per_sample
            ),
        });
    }
    let samples = reader
        .into_samples::<i16>()
        .map(|s| s.map(|v| v as f32 / 32768.0))
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| Error::format(path, e.to_string()))?;
    if samples.is_empty() {
        return Err(Error::format(path, "no samples"));
    }
    Ok(AudioClip {
        samples,
        sample_rate: spec.sample_rate,
        source_alpha: 1.0,
    })
}

/// Writes a clip as 16-bit mono PCM, clipping to the representable range.
pub fn save_wav(path: impl AsRef<Path>, clip: &AudioClip) -> Result<()> {
    let path = path.as_ref();
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: clip.sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let map = |e: hound::Error| match e {
        hound::Error::IoError(io) => Error::io(path, io),
        other => Error::format(path, other.to_string()),
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(map)?;
    for &s in &clip.samples {
        let q = (s * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
        writer.write_sample(q).map_err(map)?;
    }
    writer.finalize().map_err(map)
}
