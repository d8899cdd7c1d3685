//! Baseline fingerprint: bark windows → 2-D Haar → top wavelet sign bits →
//! 72-byte min-hash signature compared by Hamming distance.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::audio::{canonicalize, AudioBuffer};
use crate::binio::{Reader, Writer};
use crate::error::{Error, Result};
use crate::fingerprint::{Signature, Timed, SIGNATURE_LEN};
use crate::pipeline::PipelineConfig;
use crate::proposed::sliding_windows;
use crate::spectral::{bark_project, stft};

pub use crate::fingerprint::hamming_bytes as hamming;

pub const DEFAULT_TOP_T: usize = 200;
pub const DEFAULT_SEED: u64 = 0x6d68_6173_6800;

fn haar1d(v: &mut [f32], tmp: &mut [f32]) {
    let mut n = v.len();
    while n > 1 {
        let h = n / 2;
        for i in 0..h {
            let (a, b) = (v[2 * i] as f64, v[2 * i + 1] as f64);
            tmp[i] = ((a + b) * std::f64::consts::FRAC_1_SQRT_2) as f32;
            tmp[h + i] = ((a - b) * std::f64::consts::FRAC_1_SQRT_2) as f32;
        }
        v[..n].copy_from_slice(&tmp[..n]);
        n = h;
    }
}

fn ihaar1d(v: &mut [f32], tmp: &mut [f32]) {
    let mut n = 2;
    while n <= v.len() {
        let h = n / 2;
        for i in 0..h {
            let (a, d) = (v[i] as f64, v[h + i] as f64);
            tmp[2 * i] = ((a + d) * std::f64::consts::FRAC_1_SQRT_2) as f32;
            tmp[2 * i + 1] = ((a - d) * std::f64::consts::FRAC_1_SQRT_2) as f32;
        }
        v[..n].copy_from_slice(&tmp[..n]);
        n *= 2;
    }
}

fn check_pow2(rows: usize, cols: usize, len: usize) -> Result<()> {
    if !rows.is_power_of_two() || !cols.is_power_of_two() {
        return Err(Error::InvalidParameter(format!(
            "Haar transform needs power-of-two dimensions, got {rows}x{cols}"
        )));
    }
    if len != rows * cols {
        return Err(Error::DimensionMismatch {
            expected: rows * cols,
            actual: len,
        });
    }
    Ok(())
}

fn separable(data: &mut [f32], rows: usize, cols: usize, f: fn(&mut [f32], &mut [f32])) {
    let mut tmp = vec![0.0; rows.max(cols)];
    for r in data.chunks_exact_mut(cols) {
        f(r, &mut tmp);
    }
    let mut col = vec![0.0; rows];
    for c in 0..cols {
        for r in 0..rows {
            col[r] = data[r * cols + c];
        }
        f(&mut col, &mut tmp);
        for r in 0..rows {
            data[r * cols + c] = col[r];
        }
    }
}

/// Standard (full) 2-D Haar decomposition of a row-major `rows × cols`
/// matrix with orthonormal scaling: every row, then every column.
pub fn haar2d(window: &[f32], rows: usize, cols: usize) -> Result<Vec<f32>> {
    check_pow2(rows, cols, window.len())?;
    let mut out = window.to_vec();
    separable(&mut out, rows, cols, haar1d);
    Ok(out)
}

/// Inverse of [`haar2d`].
pub fn haar2d_inverse(coeffs: &[f32], rows: usize, cols: usize) -> Result<Vec<f32>> {
    check_pow2(rows, cols, coeffs.len())?;
    let mut out = coeffs.to_vec();
    separable(&mut out, rows, cols, ihaar1d);
    Ok(out)
}

/// Fixed-length bit vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BitVector {
    words: Vec<u64>,
    len: usize,
}

impl BitVector {
    pub fn zeros(len: usize) -> Self {
        Self {
            words: vec![0; len.div_ceil(64)],
            len,
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn set(&mut self, i: usize) {
        assert!(i < self.len);
        self.words[i / 64] |= 1 << (i % 64);
    }

    pub fn get(&self, i: usize) -> bool {
        self.words[i / 64] >> (i % 64) & 1 == 1
    }

    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    /// Indices of set bits in ascending order.
    pub fn ones(&self) -> impl Iterator<Item = usize> + '_ {
        self.words.iter().enumerate().flat_map(|(wi, &w)| {
            let mut w = w;
            std::iter::from_fn(move || {
                if w == 0 {
                    return None;
                }
                let b = w.trailing_zeros() as usize;
                w &= w - 1;
                Some(wi * 64 + b)
            })
        })
    }
}

/// Keeps the `top_t` largest-magnitude coefficients (ties to the lowest
/// index, exact zeros never kept). Coefficient `i` maps to bits `2i, 2i+1`:
/// positive sets `2i+1` (pattern 01), negative sets `2i` (pattern 10).
pub fn top_wavelet_bits(coeffs: &[f32], top_t: usize) -> Result<BitVector> {
    if top_t > coeffs.len() {
        return Err(Error::InvalidParameter(format!(
            "top_t {top_t} exceeds {} coefficients",
            coeffs.len()
        )));
    }
    let mut order: Vec<usize> = (0..coeffs.len()).filter(|&i| coeffs[i] != 0.0).collect();
    let key = |i: usize| coeffs[i].abs();
    if order.len() > top_t && top_t > 0 {
        order.select_nth_unstable_by(top_t - 1, |&a, &b| key(b).total_cmp(&key(a)).then(a.cmp(&b)));
    }
    order.truncate(top_t);
    let mut bits = BitVector::zeros(2 * coeffs.len());
    for i in order {
        bits.set(if coeffs[i] > 0.0 { 2 * i + 1 } else { 2 * i });
    }
    Ok(bits)
}

/// Wavelet budget and the 72 seeded permutations of bit positions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MinHashParams {
    top_t: usize,
    seed: u64,
    n_bits: usize,
    perms: Vec<Vec<u16>>,
}

impl MinHashParams {
    /// Draws `SIGNATURE_LEN` Fisher–Yates permutations of `0..n_bits` from
    /// one ChaCha8 stream seeded with `seed`.
    pub fn new(top_t: usize, seed: u64, n_bits: usize) -> Result<Self> {
        if n_bits == 0 || n_bits > u16::MAX as usize + 1 {
            return Err(Error::InvalidParameter(format!("bit-vector length {n_bits} out of range")));
        }
        if top_t == 0 || 2 * top_t > n_bits {
            return Err(Error::InvalidParameter(format!(
                "top_t {top_t} must be in 1..={}",
                n_bits / 2
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let perms = (0..SIGNATURE_LEN)
            .map(|_| {
                let mut p: Vec<u16> = (0..n_bits).map(|i| i as u16).collect();
                p.shuffle(&mut rng);
                p
            })
            .collect();
        Ok(Self {
            top_t,
            seed,
            n_bits,
            perms,
        })
    }

    /// Parameters sized for the configured bark window.
    pub fn for_config(config: &PipelineConfig, top_t: usize, seed: u64) -> Result<Self> {
        Self::new(top_t, seed, 2 * config.window.window_len * config.bark_bands)
    }

    pub fn top_t(&self) -> usize {
        self.top_t
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn n_bits(&self) -> usize {
        self.n_bits
    }

    pub fn permutation(&self, k: usize) -> &[u16] {
        &self.perms[k]
    }

    pub(crate) fn write(&self, w: &mut Writer) {
        w.u32(self.top_t as u32);
        w.u64(self.seed);
        w.u32(self.n_bits as u32);
        w.u16(self.perms.len() as u16);
        for p in &self.perms {
            for &x in p {
                w.u16(x);
            }
        }
    }

    pub(crate) fn read(r: &mut Reader) -> Result<Self> {
        let top_t = r.u32()? as usize;
        let seed = r.u64()?;
        let n_bits = r.u32()? as usize;
        let n_perms = r.u16()? as usize;
        if n_perms != SIGNATURE_LEN || n_bits == 0 || n_bits > u16::MAX as usize + 1 {
            return Err(Error::Malformed("bad min-hash parameter header".into()));
        }
        let mut perms = Vec::with_capacity(n_perms);
        let mut seen = vec![false; n_bits];
        for _ in 0..n_perms {
            seen.iter_mut().for_each(|s| *s = false);
            let mut p = Vec::with_capacity(n_bits);
            for _ in 0..n_bits {
                let x = r.u16()?;
                if x as usize >= n_bits || std::mem::replace(&mut seen[x as usize], true) {
                    return Err(Error::Malformed("stored min-hash permutation is invalid".into()));
                }
                p.push(x);
            }
            perms.push(p);
        }
        Ok(Self {
            top_t,
            seed,
            n_bits,
            perms,
        })
    }
}

/// Signature byte `k` is the smallest permuted position of any set bit under
/// permutation `k`, capped at 255.
pub fn minhash(bits: &BitVector, p: &MinHashParams) -> Result<Signature> {
    if bits.len() != p.n_bits {
        return Err(Error::DimensionMismatch {
            expected: p.n_bits,
            actual: bits.len(),
        });
    }
    let ones: Vec<usize> = bits.ones().collect();
    let mut sig = [u8::MAX; SIGNATURE_LEN];
    for (s, perm) in sig.iter_mut().zip(&p.perms) {
        let m = ones.iter().map(|&i| perm[i]).min().unwrap_or(u16::MAX);
        *s = m.min(255) as u8;
    }
    Ok(Signature(sig))
}

#[derive(Debug, Clone, PartialEq)]
pub struct MinHashPipeline {
    config: PipelineConfig,
    params: MinHashParams,
}

impl MinHashPipeline {
    pub fn new(config: PipelineConfig, params: MinHashParams) -> Result<Self> {
        config.validate()?;
        let (w, b) = (config.window.window_len, config.bark_bands);
        check_pow2(w, b, w * b)?;
        if params.n_bits != 2 * w * b {
            return Err(Error::DimensionMismatch {
                expected: 2 * w * b,
                actual: params.n_bits,
            });
        }
        if params.top_t > w * b {
            return Err(Error::InvalidParameter("top_t exceeds window size".into()));
        }
        Ok(Self { config, params })
    }

    /// Default window geometry with [`DEFAULT_TOP_T`] and [`DEFAULT_SEED`].
    pub fn with_defaults() -> Result<Self> {
        let config = PipelineConfig::default();
        let params = MinHashParams::for_config(&config, DEFAULT_TOP_T, DEFAULT_SEED)?;
        Self::new(config, params)
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn params(&self) -> &MinHashParams {
        &self.params
    }

    pub fn fingerprint(&self, audio: &AudioBuffer) -> Result<Vec<Timed<Signature>>> {
        self.fingerprint_canonical(&canonicalize(audio)?)
    }

    pub(crate) fn fingerprint_canonical(&self, audio: &AudioBuffer) -> Result<Vec<Timed<Signature>>> {
        let spec = stft(audio, self.config.frame_size, self.config.hop)?;
        let bark = bark_project(&spec, self.config.bark_bands)?;
        let (w, b) = (self.config.window.window_len, self.config.bark_bands);
        sliding_windows(&bark, self.config.window)?
            .into_iter()
            .map(|win| {
                let coeffs = haar2d(win.data, w, b)?;
                let bits = top_wavelet_bits(&coeffs, self.params.top_t)?;
                Ok(Timed {
                    timestamp: win.timestamp,
                    value: minhash(&bits, &self.params)?,
                })
            })
            .collect()
    }
}

/// Canonicalize → STFT → bark → windows → Haar → top bits → min-hash.
pub fn fingerprint_minhash(
    audio: &AudioBuffer,
    params: &MinHashParams,
    config: &PipelineConfig,
) -> Result<Vec<Timed<Signature>>> {
    MinHashPipeline::new(*config, params.clone())?.fingerprint(audio)
}
