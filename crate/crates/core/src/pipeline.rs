//! Front-end parameters shared by both fingerprint pipelines, and the
//! [`Extractor`] that turns audio into a fingerprint sequence of either kind.

use serde::{Deserialize, Serialize};

use crate::audio::{canonicalize, AudioBuffer, CANONICAL_RATE};
use crate::binio::{Reader, Writer};
use crate::error::{Error, Result};
use crate::fingerprint::{Fingerprint, FingerprintKind, Timed};
use crate::minhash::{MinHashParams, MinHashPipeline};
use crate::proposed::pca::PcaModel;
use crate::proposed::ProposedPipeline;

/// Sliding-window geometry over the band spectrogram, in STFT timesteps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindowConfig {
    pub window_len: usize,
    pub stride: usize,
}

impl Default for WindowConfig {
    fn default() -> Self {
        Self {
            window_len: 64,
            stride: 8,
        }
    }
}

impl WindowConfig {
    pub fn new(window_len: usize, stride: usize) -> Result<Self> {
        let cfg = Self { window_len, stride };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.stride == 0 || self.stride >= self.window_len {
            return Err(Error::InvalidParameter(format!(
                "window stride {} must satisfy 1 <= stride < window_len ({})",
                self.stride, self.window_len
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub frame_size: usize,
    pub hop: usize,
    pub window: WindowConfig,
    pub mel_bands: usize,
    pub mel_f_lo: f64,
    pub mel_f_hi: f64,
    pub bark_bands: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            frame_size: 512,
            hop: 256,
            window: WindowConfig::default(),
            mel_bands: 64,
            mel_f_lo: 62.5,
            mel_f_hi: 8000.0,
            bark_bands: 32,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.window.validate()?;
        if !self.frame_size.is_power_of_two() {
            return Err(Error::InvalidParameter("frame_size must be a power of two".into()));
        }
        if self.hop == 0 || self.hop > self.frame_size {
            return Err(Error::InvalidParameter("hop must be in 1..=frame_size".into()));
        }
        if self.mel_bands < 2 {
            return Err(Error::InvalidParameter("mel_bands must be at least 2".into()));
        }
        Ok(())
    }

    /// Seconds between consecutive STFT frames.
    pub fn hop_seconds(&self) -> f64 {
        self.hop as f64 / CANONICAL_RATE as f64
    }

    /// Seconds between consecutive fingerprints of a dense sequence.
    pub fn fingerprint_spacing(&self) -> f64 {
        (self.window.stride * self.hop) as f64 / CANONICAL_RATE as f64
    }

    /// Samples of audio one window covers.
    pub fn window_samples(&self) -> usize {
        (self.window.window_len - 1) * self.hop + self.frame_size
    }

    /// Timestamp of the window starting at STFT frame `start`.
    pub fn timestamp(&self, start_frame: usize) -> f64 {
        (start_frame * self.hop) as f64 / CANONICAL_RATE as f64
    }

    pub(crate) fn write(&self, w: &mut Writer) {
        w.u32(CANONICAL_RATE);
        w.u32(self.frame_size as u32);
        w.u32(self.hop as u32);
        w.u32(self.window.window_len as u32);
        w.u32(self.window.stride as u32);
        w.u32(self.mel_bands as u32);
        w.f64(self.mel_f_lo);
        w.f64(self.mel_f_hi);
        w.u32(self.bark_bands as u32);
    }

    pub(crate) fn read(r: &mut Reader) -> Result<Self> {
        let rate = r.u32()?;
        if rate != CANONICAL_RATE {
            return Err(Error::Malformed(format!("unsupported pipeline rate {rate}")));
        }
        let cfg = Self {
            frame_size: r.u32()? as usize,
            hop: r.u32()? as usize,
            window: WindowConfig {
                window_len: r.u32()? as usize,
                stride: r.u32()? as usize,
            },
            mel_bands: r.u32()? as usize,
            mel_f_lo: r.f64()?,
            mel_f_hi: r.f64()?,
            bark_bands: r.u32()? as usize,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// A complete, self-describing fingerprint extractor: front-end parameters
/// plus the trained PCA model or the min-hash permutations.
#[derive(Debug, Clone, PartialEq)]
pub enum Extractor {
    Proposed(ProposedPipeline),
    MinHash(MinHashPipeline),
}

impl Extractor {
    pub fn proposed(config: PipelineConfig, model: PcaModel) -> Result<Self> {
        Ok(Extractor::Proposed(ProposedPipeline::new(config, model)?))
    }

    pub fn minhash(config: PipelineConfig, params: MinHashParams) -> Result<Self> {
        Ok(Extractor::MinHash(MinHashPipeline::new(config, params)?))
    }

    pub fn kind(&self) -> FingerprintKind {
        match self {
            Extractor::Proposed(_) => FingerprintKind::Proposed,
            Extractor::MinHash(_) => FingerprintKind::MinHash,
        }
    }

    pub fn config(&self) -> &PipelineConfig {
        match self {
            Extractor::Proposed(p) => p.config(),
            Extractor::MinHash(p) => p.config(),
        }
    }

    /// Canonicalizes `audio` and fingerprints every window, in time order.
    pub fn fingerprint(&self, audio: &AudioBuffer) -> Result<Vec<Timed<Fingerprint>>> {
        let audio = canonicalize(audio)?;
        Ok(match self {
            Extractor::Proposed(p) => p
                .fingerprint_canonical(&audio)?
                .into_iter()
                .map(|t| Timed {
                    timestamp: t.timestamp,
                    value: Fingerprint::Proposed(t.value),
                })
                .collect(),
            Extractor::MinHash(p) => p
                .fingerprint_canonical(&audio)?
                .into_iter()
                .map(|t| Timed {
                    timestamp: t.timestamp,
                    value: Fingerprint::MinHash(t.value),
                })
                .collect(),
        })
    }

    pub(crate) fn write(&self, w: &mut Writer) {
        self.config().write(w);
        match self {
            Extractor::Proposed(p) => w.block(&p.model().to_bytes()),
            Extractor::MinHash(p) => p.params().write(w),
        }
    }

    pub(crate) fn read(kind: FingerprintKind, r: &mut Reader) -> Result<Self> {
        let config = PipelineConfig::read(r)?;
        match kind {
            FingerprintKind::Proposed => {
                let model = PcaModel::from_bytes(r.block()?)?;
                Self::proposed(config, model)
            }
            FingerprintKind::MinHash => Self::minhash(config, MinHashParams::read(r)?),
        }
    }
}
