//! Audio input and the canonical mono 16 kHz representation.

use std::path::Path;

use crate::error::{Error, Result};
use crate::resample::Resampler;

/// Rate every pipeline runs at after [`canonicalize`].
pub const CANONICAL_RATE: u32 = 16_000;

/// Lowest input rate accepted by [`canonicalize`].
pub const MIN_INPUT_RATE: u32 = 8_000;

/// Interleaved floating-point samples in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioBuffer {
    samples: Vec<f32>,
    sample_rate: u32,
    channels: u16,
}

impl AudioBuffer {
    /// Mono buffer.
    pub fn mono(samples: Vec<f32>, sample_rate: u32) -> Result<Self> {
        Self::interleaved(samples, sample_rate, 1)
    }

    pub fn interleaved(samples: Vec<f32>, sample_rate: u32, channels: u16) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::EmptyAudio);
        }
        if sample_rate == 0 {
            return Err(Error::UnsupportedAudio("sample rate must be positive".into()));
        }
        if channels == 0 || channels > 2 {
            return Err(Error::UnsupportedAudio(format!(
                "{channels} channels (only mono and stereo are supported)"
            )));
        }
        if !samples.len().is_multiple_of(channels as usize) {
            return Err(Error::UnsupportedAudio(
                "sample count is not a multiple of the channel count".into(),
            ));
        }
        Ok(Self {
            samples,
            sample_rate,
            channels,
        })
    }

    pub fn samples(&self) -> &[f32] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f32> {
        self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn channels(&self) -> u16 {
        self.channels
    }

    /// Number of sample frames (samples per channel).
    pub fn frames(&self) -> usize {
        self.samples.len() / self.channels as usize
    }

    pub fn duration_secs(&self) -> f64 {
        self.frames() as f64 / self.sample_rate as f64
    }

    pub fn is_canonical(&self) -> bool {
        self.channels == 1 && self.sample_rate == CANONICAL_RATE
    }

    /// Copy of `self` with every sample multiplied by `gain` (no clipping).
    pub fn scaled(&self, gain: f32) -> Self {
        Self {
            samples: self.samples.iter().map(|s| s * gain).collect(),
            ..self.clone()
        }
    }

    /// Mono excerpt `[start, start + len)` in frames, clamped to the buffer.
    pub fn slice(&self, start: usize, len: usize) -> Result<Self> {
        let ch = self.channels as usize;
        let start = start.min(self.frames());
        let end = (start + len).min(self.frames());
        Self::interleaved(
            self.samples[start * ch..end * ch].to_vec(),
            self.sample_rate,
            self.channels,
        )
    }
}

/// Decodes a PCM WAV file (8/16/24/32-bit integer or 32-bit float, 1 or 2
/// channels). Channel count and rate are kept as-is.
pub fn load_wav(path: impl AsRef<Path>) -> Result<AudioBuffer> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = hound::WavReader::new(std::io::BufReader::new(file)).map_err(|e| match e {
        hound::Error::IoError(io) => Error::io(path, io),
        other => Error::Wav {
            path: path.to_path_buf(),
            reason: other.to_string(),
        },
    })?;
    let spec = reader.spec();
    if spec.channels == 0 || spec.channels > 2 {
        return Err(Error::UnsupportedAudio(format!(
            "{} channels in {}",
            spec.channels,
            path.display()
        )));
    }
    let wav_err = |e: hound::Error| Error::Wav {
        path: path.to_path_buf(),
        reason: e.to_string(),
    };
    let samples: Vec<f32> = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Float, 32) => reader
            .samples::<f32>()
            .collect::<Result<_, _>>()
            .map_err(wav_err)?,
        (hound::SampleFormat::Int, bits @ (8 | 16 | 24 | 32)) => {
            let scale = 1.0 / (1u64 << (bits - 1)) as f64;
            reader
                .samples::<i32>()
                .map(|s| s.map(|v| (v as f64 * scale) as f32))
                .collect::<Result<_, _>>()
                .map_err(wav_err)?
        }
        (fmt, bits) => {
            return Err(Error::UnsupportedAudio(format!(
                "{bits}-bit {fmt:?} samples in {}",
                path.display()
            )))
        }
    };
    if samples.is_empty() {
        return Err(Error::EmptyAudio);
    }
    AudioBuffer::interleaved(samples, spec.sample_rate, spec.channels)
}

/// Writes a 32-bit float WAV.
pub fn save_wav(path: impl AsRef<Path>, audio: &AudioBuffer) -> Result<()> {
    let spec = hound::WavSpec {
        channels: audio.channels,
        sample_rate: audio.sample_rate,
        bits_per_sample: 32,
        sample_format: hound::SampleFormat::Float,
    };
    write_with(path.as_ref(), spec, |w| {
        audio.samples.iter().try_for_each(|&s| w.write_sample(s))
    })
}

/// Writes a 16-bit PCM WAV, clamping to `[-1, 1]`.
pub fn save_wav_pcm16(path: impl AsRef<Path>, audio: &AudioBuffer) -> Result<()> {
    let spec = hound::WavSpec {
        channels: audio.channels,
        sample_rate: audio.sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    write_with(path.as_ref(), spec, |w| {
        audio.samples.iter().try_for_each(|&s| {
            let v = (s.clamp(-1.0, 1.0) * 32767.0).round() as i16;
            w.write_sample(v)
        })
    })
}

fn write_with(
    path: &Path,
    spec: hound::WavSpec,
    body: impl FnOnce(
        &mut hound::WavWriter<std::io::BufWriter<std::fs::File>>,
    ) -> std::result::Result<(), hound::Error>,
) -> Result<()> {
    let wav_err = |e: hound::Error| match e {
        hound::Error::IoError(io) => Error::io(path, io),
        other => Error::Wav {
            path: path.to_path_buf(),
            reason: other.to_string(),
        },
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(wav_err)?;
    body(&mut writer).map_err(wav_err)?;
    writer.finalize().map_err(wav_err)
}

/// Downmixes to mono (channel mean) and resamples to [`CANONICAL_RATE`].
///
/// Canonical input is returned unchanged, so the operation is idempotent.
pub fn canonicalize(audio: &AudioBuffer) -> Result<AudioBuffer> {
    if audio.sample_rate < MIN_INPUT_RATE {
        return Err(Error::SampleRateTooLow(audio.sample_rate));
    }
    if audio.is_canonical() {
        return Ok(audio.clone());
    }
    let mono = downmix(audio);
    if audio.sample_rate == CANONICAL_RATE {
        return AudioBuffer::mono(mono, CANONICAL_RATE);
    }
    let out = Resampler::new(audio.sample_rate, CANONICAL_RATE).process(&mono);
    AudioBuffer::mono(out, CANONICAL_RATE)
}

fn downmix(audio: &AudioBuffer) -> Vec<f32> {
    match audio.channels {
        1 => audio.samples.clone(),
        _ => audio
            .samples
            .chunks_exact(2)
            .map(|f| (f[0] + f[1]) * 0.5)
            .collect(),
    }
}
