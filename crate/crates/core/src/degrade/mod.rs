//! Seeded audio degradations used to probe robustness.

mod loudness;
pub(crate) mod resynth;
mod wsola;

use std::path::Path;
use std::process::Command;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::audio::{canonicalize, load_wav, save_wav, AudioBuffer, CANONICAL_RATE};
use crate::error::{Error, Result};

pub use self::loudness::{loudness_lufs, normalization_gain};
pub use self::wsola::{wsola, WsolaConfig};

use self::resynth::ComplexStft;

const FRAME: usize = 512;
const HOP: usize = 256;
/// Width of one masked frequency range.
pub const MASK_WIDTH_HZ: f64 = 40.0;
/// Number and width of equalised bands.
pub const EQ_BANDS: usize = 5;
pub const EQ_WIDTH_HZ: f64 = 400.0;
const MASK_ITERATIONS: usize = 24;
const MASK_RESIDUAL: f64 = 0.002;

/// Shift amount for the shifted stage of a composite noise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Shift {
    Samples(usize),
    Random(RandomShift),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RandomShift {
    Random,
}

impl std::fmt::Display for Shift {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Shift::Samples(n) => write!(f, "{n}"),
            Shift::Random(_) => f.write_str("random"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Noise {
    /// No degradation.
    Clean,
    /// Zero `bands` disjoint 40 Hz ranges in the STFT and resynthesize.
    FreqMask { bands: usize },
    /// Clamp to the `percent/2` and `100 − percent/2` percentiles.
    Clipping { percent: f64 },
    /// Five 400 Hz bands alternately boosted and cut by `db`.
    Equalisation { db: f64 },
    /// Additive N(0, sigma²).
    Gaussian { sigma: f64 },
    /// Zero exactly `round(percent% · len)` samples.
    Lossy { percent: f64 },
    /// Drop the first `samples` samples.
    Shifted { samples: usize },
    /// Lossy, then Gaussian, then shifted.
    Composite { percent: f64, sigma: f64, shift: Shift },
    /// Constant gain to `target_lufs`.
    LoudnessNorm { target_lufs: f64 },
    /// `y[t] = x[t] − alpha·x[t−1]`.
    Preemphasis { alpha: f64 },
    /// Play `factor` times faster without changing pitch.
    TimeStretch { factor: f64 },
    /// Gain of `db`, clamped to ±1.
    Volume { db: f64 },
    /// Round trip through an MP3 encoder at `kbps`.
    Transcode { kbps: u32 },
}

impl Noise {
    /// Short stable label, e.g. `composite(10%,0.02,random)`.
    pub fn label(&self) -> String {
        match *self {
            Noise::Clean => "clean".into(),
            Noise::FreqMask { bands } => format!("freq_mask_{bands}"),
            Noise::Clipping { percent } => format!("clipping_{percent}"),
            Noise::Equalisation { db } => format!("equalisation_{db}db"),
            Noise::Gaussian { sigma } => format!("gaussian_{sigma}"),
            Noise::Lossy { percent } => format!("lossy_{percent}"),
            Noise::Shifted { samples } => format!("shifted_{samples}"),
            Noise::Composite { percent, sigma, shift } => {
                format!("composite({percent}%,{sigma},{shift})")
            }
            Noise::LoudnessNorm { target_lufs } => format!("loudness_{target_lufs}lufs"),
            Noise::Preemphasis { alpha } => format!("preemphasis_{alpha}"),
            Noise::TimeStretch { factor } => format!("time_stretch_{factor}"),
            Noise::Volume { db } => format!("volume_{db:+}db"),
            Noise::Transcode { kbps } => format!("transcode_{kbps}k"),
        }
    }

    /// Builds a noise from a kind name and a parameter string as given on
    /// the command line. Composite takes `percent,sigma,shift` where shift
    /// may be `random`.
    pub fn parse(kind: &str, param: Option<&str>) -> Result<Self> {
        let need = || {
            param.ok_or_else(|| Error::InvalidParameter(format!("noise {kind} needs --param")))
        };
        let num = |s: &str| -> Result<f64> {
            s.trim()
                .trim_end_matches('%')
                .trim_end_matches("db")
                .parse::<f64>()
                .map_err(|_| Error::InvalidParameter(format!("bad numeric parameter {s:?}")))
        };
        let count = |s: &str| -> Result<usize> {
            s.trim()
                .parse::<usize>()
                .map_err(|_| Error::InvalidParameter(format!("bad count parameter {s:?}")))
        };
        let noise = match kind {
            "clean" => Noise::Clean,
            "freq_mask" => Noise::FreqMask { bands: count(need()?)? },
            "clipping" => Noise::Clipping { percent: num(need()?)? },
            "equalisation" | "equalization" => Noise::Equalisation { db: num(need()?)? },
            "gaussian" => Noise::Gaussian { sigma: num(need()?)? },
            "lossy" => Noise::Lossy { percent: num(need()?)? },
            "shifted" => Noise::Shifted { samples: count(need()?)? },
            "composite" => {
                let parts: Vec<&str> = need()?.split(',').collect();
                if parts.len() != 3 {
                    return Err(Error::InvalidParameter(
                        "composite takes percent,sigma,shift".into(),
                    ));
                }
                let shift = if parts[2].trim() == "random" {
                    Shift::Random(RandomShift::Random)
                } else {
                    Shift::Samples(count(parts[2])?)
                };
                Noise::Composite {
                    percent: num(parts[0])?,
                    sigma: num(parts[1])?,
                    shift,
                }
            }
            "loudness_norm" | "loudness" => Noise::LoudnessNorm { target_lufs: num(need()?)? },
            "preemphasis" => Noise::Preemphasis { alpha: num(need()?)? },
            "time_stretch" => Noise::TimeStretch { factor: num(need()?)? },
            "volume" => Noise::Volume { db: num(need()?)? },
            "transcode" => Noise::Transcode { kbps: count(need()?)? as u32 },
            other => {
                return Err(Error::InvalidParameter(format!("unknown noise kind {other:?}")))
            }
        };
        noise.validate()?;
        Ok(noise)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(format!("{}: {m}", self.label())));
        match *self {
            Noise::FreqMask { bands } if bands == 0 || bands > 200 => bad("bands must be 1..=200"),
            Noise::Clipping { percent } if !(percent > 0.0 && percent < 100.0) => {
                bad("percent must be in (0, 100)")
            }
            Noise::Gaussian { sigma } | Noise::Composite { sigma, .. } if !(sigma >= 0.0) => {
                bad("sigma must be non-negative")
            }
            Noise::Lossy { percent } | Noise::Composite { percent, .. }
                if !(0.0..=100.0).contains(&percent) =>
            {
                bad("percent must be in [0, 100]")
            }
            Noise::TimeStretch { factor } if !(factor > 0.25 && factor < 4.0) => {
                bad("factor must be in (0.25, 4)")
            }
            Noise::Transcode { kbps: 0 } => bad("bitrate must be positive"),
            _ => Ok(()),
        }
    }

    /// Every noise setting of the robustness suite, in table order.
    pub fn suite() -> Vec<Noise> {
        let random = Shift::Random(RandomShift::Random);
        let mut v = vec![];
        v.extend([5, 10, 20].map(|bands| Noise::FreqMask { bands }));
        v.extend([2.0, 10.0, 20.0, 40.0].map(|percent| Noise::Clipping { percent }));
        v.extend([3.0, 6.0].map(|db| Noise::Equalisation { db }));
        v.extend([0.01, 0.02].map(|sigma| Noise::Gaussian { sigma }));
        v.extend([5.0, 10.0].map(|percent| Noise::Lossy { percent }));
        v.extend([45, 90].map(|samples| Noise::Shifted { samples }));
        v.push(Noise::Composite { percent: 5.0, sigma: 0.01, shift: Shift::Samples(45) });
        v.push(Noise::Composite { percent: 10.0, sigma: 0.02, shift: Shift::Samples(90) });
        v.push(Noise::Composite { percent: 10.0, sigma: 0.02, shift: random });
        v.extend([-14.0, -24.0].map(|target_lufs| Noise::LoudnessNorm { target_lufs }));
        v.push(Noise::Preemphasis { alpha: 0.9 });
        v.extend([0.9, 0.96, 1.04, 1.1].map(|factor| Noise::TimeStretch { factor }));
        v.extend([-6.0, 6.0].map(|db| Noise::Volume { db }));
        v.extend([32, 128].map(|kbps| Noise::Transcode { kbps }));
        v
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    pub noise: Noise,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn new(noise: Noise, seed: u64) -> Self {
        Self { noise, seed }
    }
}

/// Applies `spec` to canonical audio. Transcoding uses `ffmpeg` from `PATH`.
pub fn apply_noise(audio: &AudioBuffer, spec: &NoiseSpec) -> Result<AudioBuffer> {
    apply_noise_with_tool(audio, spec, Path::new("ffmpeg"))
}

/// As [`apply_noise`] with an explicit encoder executable.
pub fn apply_noise_with_tool(audio: &AudioBuffer, spec: &NoiseSpec, encoder: &Path) -> Result<AudioBuffer> {
    spec.noise.validate()?;
    let audio = canonicalize(audio)?;
    let x = audio.samples();
    let seed = spec.seed;
    let out = match spec.noise {
        Noise::Clean => x.to_vec(),
        Noise::FreqMask { bands } => freq_mask(x, bands, seed),
        Noise::Clipping { percent } => clipping(x, percent),
        Noise::Equalisation { db } => equalisation(x, db, seed),
        Noise::Gaussian { sigma } => gaussian(x, sigma, seed),
        Noise::Lossy { percent } => lossy(x, percent, seed),
        Noise::Shifted { samples } => shifted(x, samples)?,
        Noise::Composite { percent, sigma, shift } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (s1, s2) = (rng.random::<u64>(), rng.random::<u64>());
            let n = match shift {
                Shift::Samples(n) => n,
                Shift::Random(_) => rng.random_range(1..=255),
            };
            shifted(&gaussian(&lossy(x, percent, s1), sigma, s2), n)?
        }
        Noise::LoudnessNorm { target_lufs } => {
            let g = normalization_gain(x, CANONICAL_RATE, target_lufs);
            x.iter().map(|&v| (v as f64 * g) as f32).collect()
        }
        Noise::Preemphasis { alpha } => preemphasis(x, alpha),
        Noise::TimeStretch { factor } => wsola(x, factor, WsolaConfig::for_rate(CANONICAL_RATE)),
        Noise::Volume { db } => {
            let g = 10f64.powf(db / 20.0);
            x.iter().map(|&v| ((v as f64 * g) as f32).clamp(-1.0, 1.0)).collect()
        }
        Noise::Transcode { kbps } => return transcode(&audio, kbps, encoder),
    };
    if out.is_empty() {
        return Err(Error::EmptyAudio);
    }
    AudioBuffer::mono(out, CANONICAL_RATE)
}

/// Disjoint 40 Hz ranges chosen by seed; returns `(lo_hz, hi_hz)` pairs.
pub fn mask_ranges(bands: usize, seed: u64) -> Vec<(f64, f64)> {
    let slots = (CANONICAL_RATE as f64 / 2.0 / MASK_WIDTH_HZ) as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = rand::seq::index::sample(&mut rng, slots, bands.min(slots)).into_vec();
    picked.sort_unstable();
    picked
        .into_iter()
        .map(|s| (s as f64 * MASK_WIDTH_HZ, (s + 1) as f64 * MASK_WIDTH_HZ))
        .collect()
}

/// One-sided bin gains: 0 inside the ranges, 1 elsewhere.
fn mask_gains(ranges: &[(f64, f64)]) -> Vec<f32> {
    (0..=FRAME / 2)
        .map(|k| {
            let f = k as f64 * CANONICAL_RATE as f64 / FRAME as f64;
            if ranges.iter().any(|&(lo, hi)| f >= lo && f < hi) {
                0.0
            } else {
                1.0
            }
        })
        .collect()
}

fn masked_energy(s: &ComplexStft, gains: &[f32]) -> f64 {
    s.frames
        .iter()
        .flat_map(|f| {
            gains
                .iter()
                .enumerate()
                .filter(|(_, &g)| g == 0.0)
                .map(move |(k, _)| f[k].norm_sqr() as f64)
        })
        .sum()
}

/// Alternates spectral masking with least-squares resynthesis until the
/// masked bins of the resynthesized signal hold under 0.2% of their
/// original energy.
fn freq_mask(x: &[f32], bands: usize, seed: u64) -> Vec<f32> {
    let gains = mask_gains(&mask_ranges(bands, seed));
    let mut s = ComplexStft::analyze(x, FRAME, HOP);
    let original = masked_energy(&s, &gains);
    let mut y = x.to_vec();
    for _ in 0..MASK_ITERATIONS {
        s.scale_bins(&gains);
        y = s.synthesize();
        s.reanalyze(&y);
        if masked_energy(&s, &gains) <= MASK_RESIDUAL * original {
            break;
        }
    }
    y
}

/// Linear-interpolated percentile of sorted data, `p` in [0, 100].
pub fn percentile(sorted: &[f32], p: f64) -> f32 {
    let pos = p / 100.0 * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    (sorted[lo] as f64 + (sorted[hi] as f64 - sorted[lo] as f64) * frac) as f32
}

fn clipping(x: &[f32], percent: f64) -> Vec<f32> {
    let mut sorted = x.to_vec();
    sorted.sort_by(f32::total_cmp);
    let lo = percentile(&sorted, percent / 2.0);
    let hi = percentile(&sorted, 100.0 - percent / 2.0);
    x.iter().map(|v| v.clamp(lo, hi)).collect()
}

/// Disjoint 400 Hz bands chosen by seed with alternating ±`db` gains.
pub fn eq_bands(db: f64, seed: u64) -> Vec<(f64, f64, f64)> {
    let slots = (CANONICAL_RATE as f64 / 2.0 / EQ_WIDTH_HZ) as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = rand::seq::index::sample(&mut rng, slots, EQ_BANDS).into_vec();
    picked.sort_unstable();
    picked
        .into_iter()
        .enumerate()
        .map(|(i, s)| {
            let g = if i % 2 == 0 { db } else { -db };
            (s as f64 * EQ_WIDTH_HZ, (s + 1) as f64 * EQ_WIDTH_HZ, g)
        })
        .collect()
}

fn equalisation(x: &[f32], db: f64, seed: u64) -> Vec<f32> {
    let bands = eq_bands(db, seed);
    let mut s = ComplexStft::analyze(x, FRAME, HOP);
    let gains: Vec<f32> = (0..=FRAME / 2)
        .map(|k| {
            let f = s.bin_hz(k, CANONICAL_RATE);
            bands
                .iter()
                .find(|&&(lo, hi, _)| f >= lo && f < hi)
                .map_or(1.0, |&(_, _, g)| 10f64.powf(g / 20.0) as f32)
        })
        .collect();
    s.scale_bins(&gains);
    s.synthesize()
}

fn gaussian(x: &[f32], sigma: f64, seed: u64) -> Vec<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, sigma).expect("sigma validated");
    x.iter().map(|&v| (v as f64 + normal.sample(&mut rng)) as f32).collect()
}

fn lossy(x: &[f32], percent: f64, seed: u64) -> Vec<f32> {
    let n = (percent / 100.0 * x.len() as f64).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = x.to_vec();
    for i in rand::seq::index::sample(&mut rng, x.len(), n.min(x.len())) {
        out[i] = 0.0;
    }
    out
}

fn shifted(x: &[f32], samples: usize) -> Result<Vec<f32>> {
    if samples >= x.len() {
        return Err(Error::AudioTooShort {
            len: x.len(),
            need: samples + 1,
        });
    }
    Ok(x[samples..].to_vec())
}

fn preemphasis(x: &[f32], alpha: f64) -> Vec<f32> {
    let mut out = Vec::with_capacity(x.len());
    let mut prev = 0.0f64;
    for (i, &v) in x.iter().enumerate() {
        let v = v as f64;
        out.push(if i == 0 { v } else { v - alpha * prev } as f32);
        prev = v;
    }
    out
}

fn run_tool(encoder: &Path, args: &[&std::ffi::OsStr]) -> Result<()> {
    let tool = encoder.display().to_string();
    let out = Command::new(encoder).args(args).output().map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            Error::ToolUnavailable {
                tool: tool.clone(),
                reason: "not found on PATH".into(),
            }
        } else {
            Error::ToolUnavailable {
                tool: tool.clone(),
                reason: e.to_string(),
            }
        }
    })?;
    if !out.status.success() {
        return Err(Error::ToolFailed {
            tool,
            reason: String::from_utf8_lossy(&out.stderr).trim().to_string(),
        });
    }
    Ok(())
}

fn transcode(audio: &AudioBuffer, kbps: u32, encoder: &Path) -> Result<AudioBuffer> {
    let dir = tempfile::tempdir().map_err(|e| Error::io(std::env::temp_dir(), e))?;
    let wav_in = dir.path().join("in.wav");
    let mp3 = dir.path().join("coded.mp3");
    let wav_out = dir.path().join("out.wav");
    save_wav(&wav_in, audio)?;
    let bitrate = format!("{kbps}k");
    run_tool(
        encoder,
        &[
            "-y".as_ref(),
            "-loglevel".as_ref(),
            "error".as_ref(),
            "-i".as_ref(),
            wav_in.as_os_str(),
            "-b:a".as_ref(),
            bitrate.as_ref(),
            mp3.as_os_str(),
        ],
    )?;
    run_tool(
        encoder,
        &[
            "-y".as_ref(),
            "-loglevel".as_ref(),
            "error".as_ref(),
            "-i".as_ref(),
            mp3.as_os_str(),
            "-ac".as_ref(),
            "1".as_ref(),
            "-ar".as_ref(),
            "16000".as_ref(),
            wav_out.as_os_str(),
        ],
    )?;
    canonicalize(&load_wav(&wav_out)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::stft;

    fn noise_clip(n: usize, seed: u64) -> AudioBuffer {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = (0..n).map(|_| rng.random_range(-0.3f32..0.3)).collect();
        AudioBuffer::mono(x, CANONICAL_RATE).unwrap()
    }

    fn run(a: &AudioBuffer, noise: Noise) -> Vec<f32> {
        apply_noise(a, &NoiseSpec::new(noise, 42)).unwrap().into_samples()
    }

    #[test]
    fn volume_scales_half_scale_sine() {
        let x: Vec<f32> = (0..1600)
            .map(|i| 0.5 * (std::f32::consts::TAU * 440.0 * i as f32 / 16000.0).sin())
            .collect();
        let a = AudioBuffer::mono(x.clone(), 16000).unwrap();
        let y = run(&a, Noise::Volume { db: 6.0 });
        let peak_in = x.iter().fold(0.0f32, |m, v| m.max(v.abs()));
        let peak_out = y.iter().fold(0.0f32, |m, v| m.max(v.abs()));
        assert!((peak_out / peak_in - 1.9953).abs() < 1e-3);
        let loud = run(&AudioBuffer::mono(vec![0.9; 100], 16000).unwrap(), Noise::Volume { db: 6.0 });
        assert!(loud.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn preemphasis_on_constant() {
        let y = run(&AudioBuffer::mono(vec![0.5; 50], 16000).unwrap(), Noise::Preemphasis { alpha: 0.9 });
        assert_eq!(y[0], 0.5);
        assert!(y[1..].iter().all(|&v| (v - 0.05).abs() < 1e-7));
    }

    #[test]
    fn lossy_zeroes_exact_count() {
        let a = AudioBuffer::mono(vec![0.25; 16000], 16000).unwrap();
        let y = run(&a, Noise::Lossy { percent: 10.0 });
        assert_eq!(y.iter().filter(|&&v| v == 0.0).count(), 1600);
    }

    #[test]
    fn clipping_bounds_are_percentiles() {
        let a = noise_clip(10_001, 3);
        let y = run(&a, Noise::Clipping { percent: 40.0 });
        // Independent nearest-rank oracle on the 20th/80th percentiles.
        let mut s = a.samples().to_vec();
        s.sort_by(f32::total_cmp);
        let p20 = s[2000];
        let p80 = s[8000];
        let lo = y.iter().cloned().fold(f32::MAX, f32::min);
        let hi = y.iter().cloned().fold(f32::MIN, f32::max);
        assert!((lo - p20).abs() < 1e-6 && (hi - p80).abs() < 1e-6);
    }

    #[test]
    fn deterministic_and_length_contracts() {
        let a = noise_clip(20_000, 5);
        for noise in Noise::suite() {
            let spec = NoiseSpec::new(noise, 9);
            let y = match apply_noise(&a, &spec) {
                Err(Error::ToolUnavailable { .. }) => continue,
                r => r.unwrap(),
            };
            assert_eq!(y.samples(), apply_noise(&a, &spec).unwrap().samples(), "{}", noise.label());
            let want = match noise {
                Noise::Shifted { samples } => 20_000 - samples,
                Noise::Composite { shift: Shift::Samples(n), .. } => 20_000 - n,
                Noise::TimeStretch { factor } => (20_000.0 / factor).round() as usize,
                Noise::Composite { .. } => {
                    assert!(y.frames() < 20_000 && y.frames() >= 20_000 - 255);
                    continue;
                }
                _ => 20_000,
            };
            assert_eq!(y.frames(), want, "{}", noise.label());
        }
    }

    #[test]
    fn freq_mask_removes_masked_energy() {
        let a = noise_clip(32_000, 6);
        let spec = NoiseSpec::new(Noise::FreqMask { bands: 20 }, 1);
        let y = apply_noise(&a, &spec).unwrap();
        let gains = mask_gains(&mask_ranges(20, 1));
        let energy = |b: &AudioBuffer| -> f64 {
            let s = stft(b, FRAME, HOP).unwrap();
            (0..s.n_frames())
                .flat_map(|t| {
                    let f = s.frame(t).to_vec();
                    gains
                        .iter()
                        .enumerate()
                        .filter(|(_, &g)| g == 0.0)
                        .map(move |(k, _)| (f[k] as f64).powi(2))
                        .collect::<Vec<_>>()
                })
                .sum()
        };
        let ratio = energy(&y) / energy(&a);
        assert!(ratio < 0.01, "{ratio}");
        assert_eq!(mask_ranges(20, 1).len(), 20);
    }

    #[test]
    fn equalisation_band_layout() {
        let bands = eq_bands(6.0, 3);
        assert_eq!(bands.len(), 5);
        for w in bands.windows(2) {
            assert!(w[0].1 <= w[1].0);
            assert_eq!(w[0].2, -w[1].2);
        }
    }

    #[test]
    fn loudness_norm_hits_target_and_is_idempotent() {
        let a = noise_clip(32_000, 8);
        let once = apply_noise(&a, &NoiseSpec::new(Noise::LoudnessNorm { target_lufs: -24.0 }, 0)).unwrap();
        assert!((loudness_lufs(once.samples(), 16000) + 24.0).abs() < 1e-6);
        let g = normalization_gain(once.samples(), 16000, -24.0);
        assert!((20.0 * g.log10()).abs() < 0.1);
    }

    #[test]
    fn missing_encoder_is_reported() {
        let a = noise_clip(16_000, 1);
        let r = apply_noise_with_tool(
            &a,
            &NoiseSpec::new(Noise::Transcode { kbps: 32 }, 0),
            Path::new("/nonexistent/ffmpeg-missing"),
        );
        assert!(matches!(r, Err(Error::ToolUnavailable { .. })));
    }

    #[test]
    fn parse_and_serde() {
        let n = Noise::parse("composite", Some("10,0.02,random")).unwrap();
        assert_eq!(n.label(), "composite(10%,0.02,random)");
        let json = serde_json::to_string(&n).unwrap();
        assert_eq!(serde_json::from_str::<Noise>(&json).unwrap(), n);
        let n = Noise::parse("shifted", Some("45")).unwrap();
        assert_eq!(serde_json::to_string(&n).unwrap(), r#"{"kind":"shifted","samples":45}"#);
        assert!(Noise::parse("bogus", None).is_err());
        assert!(Noise::parse("gaussian", None).is_err());
        assert_eq!(Noise::suite().len(), 29);
    }
}
