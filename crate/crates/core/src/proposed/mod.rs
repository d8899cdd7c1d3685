//! The compact L2 fingerprint: mel band-spectrogram windows are time-averaged,
//! standardized, augmented with standardized inter-band deltas, cast to half
//! precision and projected to 32 dimensions with PCA.

pub mod pca;

use half::f16;

use crate::audio::{canonicalize, AudioBuffer};
use crate::error::{Error, Result};
use crate::fingerprint::{Embedding, Timed, EMBEDDING_DIMS};
use crate::pipeline::{PipelineConfig, WindowConfig};
use crate::spectral::{mel_project, stft, BandSpectrogram};

use self::pca::PcaModel;

/// Standard deviations below this are treated as zero variance.
pub const ZERO_VARIANCE: f64 = 1e-8;

/// One sliding window over a band spectrogram: `window_len` consecutive
/// frames, time-major.
#[derive(Debug, Clone, Copy)]
pub struct Window<'a> {
    pub start: usize,
    pub timestamp: f64,
    pub n_bands: usize,
    pub data: &'a [f32],
}

impl Window<'_> {
    pub fn len(&self) -> usize {
        self.data.len() / self.n_bands
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, t: usize) -> &[f32] {
        &self.data[t * self.n_bands..(t + 1) * self.n_bands]
    }
}

/// Windows start at frames `0, s, 2s, …`; a trailing partial window is dropped.
pub fn sliding_windows(b: &BandSpectrogram, cfg: WindowConfig) -> Result<Vec<Window<'_>>> {
    cfg.validate()?;
    let (w, s, n) = (cfg.window_len, cfg.stride, b.n_bands());
    if b.n_frames() < w {
        return Err(Error::AudioTooShort {
            len: b.n_frames(),
            need: w,
        });
    }
    let count = (b.n_frames() - w) / s + 1;
    Ok((0..count)
        .map(|i| {
            let start = i * s;
            Window {
                start,
                timestamp: start as f64 * b.hop_seconds(),
                n_bands: n,
                data: &b.data()[start * n..(start + w) * n],
            }
        })
        .collect())
}

/// Per-band mean over the window's timesteps.
pub fn time_average(window: &[f32], n_bands: usize) -> Vec<f32> {
    assert!(n_bands > 0 && !window.is_empty() && window.len().is_multiple_of(n_bands));
    let steps = window.len() / n_bands;
    let mut sums = vec![0f64; n_bands];
    for row in window.chunks_exact(n_bands) {
        for (s, &v) in sums.iter_mut().zip(row) {
            *s += v as f64;
        }
    }
    sums.iter().map(|s| (s / steps as f64) as f32).collect()
}

/// Band means maintained incrementally as a window slides: push the entering
/// frames, pop the leaving ones.
#[derive(Debug, Clone)]
pub struct RunningMean {
    sums: Vec<f64>,
    count: usize,
}

impl RunningMean {
    pub fn new(n_bands: usize) -> Self {
        Self {
            sums: vec![0.0; n_bands],
            count: 0,
        }
    }

    pub fn push(&mut self, frame: &[f32]) {
        for (s, &v) in self.sums.iter_mut().zip(frame) {
            *s += v as f64;
        }
        self.count += 1;
    }

    pub fn pop(&mut self, frame: &[f32]) {
        for (s, &v) in self.sums.iter_mut().zip(frame) {
            *s -= v as f64;
        }
        self.count -= 1;
    }

    pub fn mean(&self) -> Vec<f32> {
        self.sums
            .iter()
            .map(|s| (s / self.count as f64) as f32)
            .collect()
    }
}

/// `(v − mean) / std` with the population standard deviation; all zeros when
/// the standard deviation is below [`ZERO_VARIANCE`].
pub fn standardize(v: &[f32]) -> Vec<f32> {
    let n = v.len() as f64;
    let mean = v.iter().map(|&x| x as f64).sum::<f64>() / n;
    let var = v.iter().map(|&x| (x as f64 - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    if !(std >= ZERO_VARIANCE) {
        return vec![0.0; v.len()];
    }
    v.iter().map(|&x| ((x as f64 - mean) / std) as f32).collect()
}

/// `standardize(means) ++ standardize(deltas)` where `deltas[i] = means[i+1] − means[i]`.
pub fn delta_augment(mean_bands: &[f32]) -> Result<Vec<f32>> {
    if mean_bands.len() < 2 {
        return Err(Error::InvalidParameter("delta_augment needs at least 2 bands".into()));
    }
    let deltas: Vec<f32> = mean_bands.windows(2).map(|w| w[1] - w[0]).collect();
    let mut out = standardize(mean_bands);
    out.extend(standardize(&deltas));
    Ok(out)
}

/// Rounds to IEEE binary16 (nearest, ties to even). Values that would become
/// infinite are an error.
pub fn cast_half(v: &[f32]) -> Result<Vec<f16>> {
    v.iter()
        .map(|&x| {
            let h = f16::from_f32(x);
            if h.is_infinite() || h.is_nan() {
                Err(Error::HalfOverflow(x))
            } else {
                Ok(h)
            }
        })
        .collect()
}

/// Half-precision vector ahead of the PCA projection (`2N − 1` elements).
#[derive(Debug, Clone, PartialEq)]
pub struct PreFingerprint(pub Vec<f16>);

impl PreFingerprint {
    pub fn from_f32(v: &[f32]) -> Result<Self> {
        Ok(Self(cast_half(v)?))
    }

    pub fn widen(&self) -> Vec<f32> {
        self.0.iter().map(|h| h.to_f32()).collect()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Mel band spectrogram for canonical audio.
pub fn mel_spectrogram(audio: &AudioBuffer, cfg: &PipelineConfig) -> Result<BandSpectrogram> {
    let spec = stft(audio, cfg.frame_size, cfg.hop)?;
    mel_project(&spec, cfg.mel_bands, cfg.mel_f_lo, cfg.mel_f_hi)
}

/// Everything up to (not including) PCA, one vector per window.
pub fn pre_fingerprints(audio: &AudioBuffer, cfg: &PipelineConfig) -> Result<Vec<Timed<PreFingerprint>>> {
    let audio = canonicalize(audio)?;
    let bands = mel_spectrogram(&audio, cfg)?;
    sliding_windows(&bands, cfg.window)?
        .into_iter()
        .map(|w| {
            let means = time_average(w.data, w.n_bands);
            Ok(Timed {
                timestamp: w.timestamp,
                value: PreFingerprint::from_f32(&delta_augment(&means)?)?,
            })
        })
        .collect()
}

/// Front-end configuration paired with its trained projection.
#[derive(Debug, Clone, PartialEq)]
pub struct ProposedPipeline {
    config: PipelineConfig,
    model: PcaModel,
}

impl ProposedPipeline {
    pub fn new(config: PipelineConfig, model: PcaModel) -> Result<Self> {
        config.validate()?;
        let want = 2 * config.mel_bands - 1;
        if model.in_dims() != want {
            return Err(Error::DimensionMismatch {
                expected: want,
                actual: model.in_dims(),
            });
        }
        if model.out_dims() != EMBEDDING_DIMS {
            return Err(Error::DimensionMismatch {
                expected: EMBEDDING_DIMS,
                actual: model.out_dims(),
            });
        }
        Ok(Self { config, model })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn model(&self) -> &PcaModel {
        &self.model
    }

    pub fn fingerprint(&self, audio: &AudioBuffer) -> Result<Vec<Timed<Embedding>>> {
        self.fingerprint_canonical(&canonicalize(audio)?)
    }

    pub(crate) fn fingerprint_canonical(&self, audio: &AudioBuffer) -> Result<Vec<Timed<Embedding>>> {
        pre_fingerprints(audio, &self.config)?
            .into_iter()
            .map(|p| {
                Ok(Timed {
                    timestamp: p.timestamp,
                    value: self.model.project(&p.value)?,
                })
            })
            .collect()
    }
}

/// Canonicalize → STFT → mel → windows → time average → deltas → half → PCA.
pub fn fingerprint_proposed(
    audio: &AudioBuffer,
    model: &PcaModel,
    config: &PipelineConfig,
) -> Result<Vec<Timed<Embedding>>> {
    ProposedPipeline::new(*config, model.clone())?.fingerprint(audio)
}
