//! One JSON file holding every tunable, with validated defaults.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::audio::CANONICAL_RATE;
use crate::error::{Error, Result};
use crate::fingerprint::EMBEDDING_DIMS;
use crate::index::{DEFAULT_K, DEFAULT_SEED};
use crate::matcher::MatchConfig;
use crate::minhash::{MinHashParams, DEFAULT_SEED as MINHASH_SEED, DEFAULT_TOP_T};
use crate::pipeline::PipelineConfig;
use crate::proposed::pca::MAX_TRAIN_SAMPLES;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PcaSettings {
    pub dims: usize,
    pub max_samples: usize,
    pub seed: u64,
}

impl Default for PcaSettings {
    fn default() -> Self {
        Self {
            dims: EMBEDDING_DIMS,
            max_samples: MAX_TRAIN_SAMPLES,
            seed: 0x9ca,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MinHashSettings {
    pub top_t: usize,
    pub seed: u64,
}

impl Default for MinHashSettings {
    fn default() -> Self {
        Self {
            top_t: DEFAULT_TOP_T,
            seed: MINHASH_SEED,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IndexSettings {
    /// Neighbours fetched per query fingerprint.
    pub k: usize,
    /// IVF list count; `null` means `round(sqrt(N))` clamped to [16, 65536].
    pub nlist: Option<usize>,
    /// Lists probed per query; `null` means `max(1, nlist/16)`.
    pub nprobe: Option<usize>,
    pub seed: u64,
}

impl Default for IndexSettings {
    fn default() -> Self {
        Self {
            k: DEFAULT_K,
            nlist: None,
            nprobe: None,
            seed: DEFAULT_SEED,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub sample_rate: u32,
    pub pipeline: PipelineConfig,
    pub pca: PcaSettings,
    pub minhash: MinHashSettings,
    pub index: IndexSettings,
    pub matching: MatchConfig,
    /// Executable used for the transcode degradation.
    pub transcoder: String,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            sample_rate: CANONICAL_RATE,
            pipeline: PipelineConfig::default(),
            pca: PcaSettings::default(),
            minhash: MinHashSettings::default(),
            index: IndexSettings::default(),
            matching: MatchConfig::default(),
            transcoder: "ffmpeg".into(),
        }
    }
}

impl Config {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.sample_rate != CANONICAL_RATE {
            return bad(format!("sample_rate must be {CANONICAL_RATE}"));
        }
        self.pipeline.validate().map_err(|e| Error::Config(e.to_string()))?;
        if self.pca.dims != EMBEDDING_DIMS {
            return bad(format!("pca.dims must be {EMBEDDING_DIMS}"));
        }
        if self.pca.max_samples < crate::proposed::pca::MIN_TRAIN_SAMPLES {
            return bad("pca.max_samples is below the training minimum".into());
        }
        self.minhash_params().map_err(|e| Error::Config(e.to_string()))?;
        if self.index.k == 0 {
            return bad("index.k must be at least 1".into());
        }
        if self.index.nlist == Some(0) || self.index.nprobe == Some(0) {
            return bad("index.nlist and index.nprobe must be positive".into());
        }
        self.matching.validate().map_err(|e| Error::Config(e.to_string()))?;
        if self.matching.top_k > self.index.k {
            return bad("matching.top_k cannot exceed index.k".into());
        }
        Ok(())
    }

    pub fn minhash_params(&self) -> Result<MinHashParams> {
        MinHashParams::for_config(&self.pipeline, self.minhash.top_t, self.minhash.seed)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Config = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json() + "\n").map_err(|e| Error::io(path, e))
    }

    /// CRC32 of the canonical JSON form, for tagging results.
    pub fn hash(&self) -> u32 {
        crc32fast::hash(serde_json::to_string(self).expect("config serializes").as_bytes())
    }
}
