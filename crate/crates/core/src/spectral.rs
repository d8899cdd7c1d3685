//! STFT magnitude spectrograms and mel / bark band projections.

use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::audio::AudioBuffer;
use crate::error::{Error, Result};

/// Floor added before the log so silent bands stay finite.
pub const LOG_FLOOR: f32 = 1e-10;

/// Magnitude spectrogram, time-major: `frames()[t * n_bins + k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    data: Vec<f32>,
    n_frames: usize,
    n_bins: usize,
    frame_size: usize,
    hop: usize,
    sample_rate: u32,
}

impl Spectrogram {
    pub fn n_frames(&self) -> usize {
        self.n_frames
    }
    pub fn n_bins(&self) -> usize {
        self.n_bins
    }
    pub fn frame_size(&self) -> usize {
        self.frame_size
    }
    pub fn hop(&self) -> usize {
        self.hop
    }
    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }
    pub fn data(&self) -> &[f32] {
        &self.data
    }
    pub fn frame(&self, t: usize) -> &[f32] {
        &self.data[t * self.n_bins..(t + 1) * self.n_bins]
    }
    /// Centre frequency of bin `k` in Hz.
    pub fn bin_hz(&self, k: usize) -> f64 {
        k as f64 * self.sample_rate as f64 / self.frame_size as f64
    }
    pub fn hop_seconds(&self) -> f64 {
        self.hop as f64 / self.sample_rate as f64
    }

    /// Builds a spectrogram from raw magnitudes (time-major).
    pub fn from_magnitudes(
        data: Vec<f32>,
        frame_size: usize,
        hop: usize,
        sample_rate: u32,
    ) -> Result<Self> {
        let n_bins = frame_size / 2 + 1;
        if data.is_empty() || !data.len().is_multiple_of(n_bins) {
            return Err(Error::InvalidParameter(format!(
                "{} magnitudes is not a multiple of {n_bins} bins",
                data.len()
            )));
        }
        if data.iter().any(|&m| !(m >= 0.0)) {
            return Err(Error::InvalidParameter("magnitudes must be non-negative".into()));
        }
        Ok(Self {
            n_frames: data.len() / n_bins,
            data,
            n_bins,
            frame_size,
            hop,
            sample_rate,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BandKind {
    Mel,
    Bark,
}

/// Log-amplitude band energies, time-major: `data()[t * n_bands + b]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BandSpectrogram {
    data: Vec<f32>,
    n_frames: usize,
    n_bands: usize,
    kind: BandKind,
    hop_seconds: f64,
}

impl BandSpectrogram {
    pub fn new(data: Vec<f32>, n_bands: usize, kind: BandKind, hop_seconds: f64) -> Result<Self> {
        if n_bands == 0 || !data.len().is_multiple_of(n_bands) {
            return Err(Error::InvalidParameter(
                "band data is not a whole number of frames".into(),
            ));
        }
        Ok(Self {
            n_frames: data.len() / n_bands,
            data,
            n_bands,
            kind,
            hop_seconds,
        })
    }
    pub fn n_frames(&self) -> usize {
        self.n_frames
    }
    pub fn n_bands(&self) -> usize {
        self.n_bands
    }
    pub fn kind(&self) -> BandKind {
        self.kind
    }
    pub fn hop_seconds(&self) -> f64 {
        self.hop_seconds
    }
    pub fn data(&self) -> &[f32] {
        &self.data
    }
    pub fn frame(&self, t: usize) -> &[f32] {
        &self.data[t * self.n_bands..(t + 1) * self.n_bands]
    }
}

/// Periodic Hann window.
pub fn hann(n: usize) -> Vec<f32> {
    (0..n)
        .map(|i| {
            let x = std::f64::consts::PI * i as f64 / n as f64;
            (x.sin() * x.sin()) as f32
        })
        .collect()
}

/// Reusable forward FFT of one size with its window and scratch space.
pub(crate) struct FrameAnalyzer {
    fft: Arc<dyn Fft<f32>>,
    window: Vec<f32>,
    buf: Vec<Complex<f32>>,
    scratch: Vec<Complex<f32>>,
}

impl FrameAnalyzer {
    pub fn new(frame_size: usize) -> Self {
        let fft = FftPlanner::new().plan_fft_forward(frame_size);
        let scratch = vec![Complex::default(); fft.get_inplace_scratch_len()];
        Self {
            fft,
            window: hann(frame_size),
            buf: vec![Complex::default(); frame_size],
            scratch,
        }
    }

    /// Windowed FFT of `frame`; returns the full complex spectrum.
    pub fn spectrum(&mut self, frame: &[f32]) -> &[Complex<f32>] {
        for ((b, &x), &w) in self.buf.iter_mut().zip(frame).zip(&self.window) {
            *b = Complex::new(x * w, 0.0);
        }
        self.fft.process_with_scratch(&mut self.buf, &mut self.scratch);
        &self.buf
    }
}

/// Hann-windowed magnitude STFT; frame `t` covers `[t·hop, t·hop + frame_size)`
/// and a trailing partial frame is dropped.
pub fn stft(audio: &AudioBuffer, frame_size: usize, hop: usize) -> Result<Spectrogram> {
    if audio.channels() != 1 {
        return Err(Error::InvalidParameter("stft expects mono audio".into()));
    }
    if !frame_size.is_power_of_two() || frame_size < 2 {
        return Err(Error::InvalidParameter(format!(
            "frame size {frame_size} is not a power of two"
        )));
    }
    if hop == 0 || hop > frame_size {
        return Err(Error::InvalidParameter(format!(
            "hop {hop} must be in 1..={frame_size}"
        )));
    }
    let x = audio.samples();
    if x.len() < frame_size {
        return Err(Error::AudioTooShort {
            len: x.len(),
            need: frame_size,
        });
    }
    let n_frames = (x.len() - frame_size) / hop + 1;
    let n_bins = frame_size / 2 + 1;
    let mut analyzer = FrameAnalyzer::new(frame_size);
    let mut data = Vec::with_capacity(n_frames * n_bins);
    for t in 0..n_frames {
        let spec = analyzer.spectrum(&x[t * hop..t * hop + frame_size]);
        data.extend(spec[..n_bins].iter().map(|c| c.norm()));
    }
    Ok(Spectrogram {
        data,
        n_frames,
        n_bins,
        frame_size,
        hop,
        sample_rate: audio.sample_rate(),
    })
}

pub fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

pub fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

pub fn hz_to_bark(f: f64) -> f64 {
    13.0 * (0.00076 * f).atan() + 3.5 * ((f / 7500.0).powi(2)).atan()
}

/// Sparse filter bank: per band, the first bin and its weights.
#[derive(Debug, Clone)]
pub struct FilterBank {
    kind: BandKind,
    n_bins: usize,
    bands: Vec<(usize, Vec<f32>)>,
}

impl FilterBank {
    /// Triangular filters with peaks equally spaced in mel between `f_lo` and `f_hi`.
    pub fn mel(
        n_bands: usize,
        f_lo: f64,
        f_hi: f64,
        frame_size: usize,
        sample_rate: u32,
    ) -> Result<Self> {
        check_range(n_bands, f_lo, f_hi, sample_rate)?;
        let n_bins = frame_size / 2 + 1;
        let (m_lo, m_hi) = (hz_to_mel(f_lo), hz_to_mel(f_hi));
        let edges: Vec<f64> = (0..n_bands + 2)
            .map(|i| mel_to_hz(m_lo + (m_hi - m_lo) * i as f64 / (n_bands + 1) as f64))
            .collect();
        let bin_hz = |k: usize| k as f64 * sample_rate as f64 / frame_size as f64;
        let bands = (0..n_bands)
            .map(|b| {
                let (lo, mid, hi) = (edges[b], edges[b + 1], edges[b + 2]);
                let weights: Vec<(usize, f32)> = (0..n_bins)
                    .filter_map(|k| {
                        let f = bin_hz(k);
                        let w = if f > lo && f < mid {
                            (f - lo) / (mid - lo)
                        } else if f >= mid && f < hi {
                            (hi - f) / (hi - mid)
                        } else {
                            0.0
                        };
                        (w > 0.0).then_some((k, w as f32))
                    })
                    .collect();
                dense_run(&weights)
            })
            .collect();
        Ok(Self {
            kind: BandKind::Mel,
            n_bins,
            bands,
        })
    }

    /// Rectangular, non-overlapping bands equally spaced in Bark over `[f_lo, f_hi]`.
    pub fn bark(
        n_bands: usize,
        f_lo: f64,
        f_hi: f64,
        frame_size: usize,
        sample_rate: u32,
    ) -> Result<Self> {
        check_range(n_bands, f_lo, f_hi, sample_rate)?;
        let n_bins = frame_size / 2 + 1;
        let (b_lo, b_hi) = (hz_to_bark(f_lo), hz_to_bark(f_hi));
        let mut members: Vec<Vec<(usize, f32)>> = vec![Vec::new(); n_bands];
        for k in 0..n_bins {
            let f = k as f64 * sample_rate as f64 / frame_size as f64;
            if f < f_lo || f > f_hi {
                continue;
            }
            let pos = (hz_to_bark(f) - b_lo) / (b_hi - b_lo) * n_bands as f64;
            let band = (pos.floor() as usize).min(n_bands - 1);
            members[band].push((k, 1.0));
        }
        Ok(Self {
            kind: BandKind::Bark,
            n_bins,
            bands: members.iter().map(|m| dense_run(m)).collect(),
        })
    }

    pub fn n_bands(&self) -> usize {
        self.bands.len()
    }

    /// Weight of `bin` in `band`.
    pub fn weight(&self, band: usize, bin: usize) -> f32 {
        let (start, w) = &self.bands[band];
        if bin < *start {
            return 0.0;
        }
        w.get(bin - start).copied().unwrap_or(0.0)
    }

    pub fn apply(&self, s: &Spectrogram) -> Result<BandSpectrogram> {
        if s.n_bins() != self.n_bins {
            return Err(Error::DimensionMismatch {
                expected: self.n_bins,
                actual: s.n_bins(),
            });
        }
        let mut data = Vec::with_capacity(s.n_frames() * self.bands.len());
        for t in 0..s.n_frames() {
            let frame = s.frame(t);
            data.extend(self.bands.iter().map(|(start, w)| {
                let sum: f32 = frame[*start..*start + w.len()]
                    .iter()
                    .zip(w)
                    .map(|(m, w)| m * w)
                    .sum();
                (sum + LOG_FLOOR).ln()
            }));
        }
        BandSpectrogram::new(data, self.bands.len(), self.kind, s.hop_seconds())
    }
}

fn check_range(n_bands: usize, f_lo: f64, f_hi: f64, sample_rate: u32) -> Result<()> {
    if n_bands < 2 {
        return Err(Error::InvalidParameter(format!("need at least 2 bands, got {n_bands}")));
    }
    let nyquist = sample_rate as f64 / 2.0;
    if !(f_lo >= 0.0 && f_hi <= nyquist && f_lo < f_hi) {
        return Err(Error::InvalidParameter(format!(
            "frequency range [{f_lo}, {f_hi}] Hz must lie within [0, {nyquist}]"
        )));
    }
    Ok(())
}

/// Turns sparse (bin, weight) pairs into a contiguous run starting at the first bin.
fn dense_run(weights: &[(usize, f32)]) -> (usize, Vec<f32>) {
    match (weights.first(), weights.last()) {
        (Some(&(first, _)), Some(&(last, _))) => {
            let mut run = vec![0.0; last - first + 1];
            for &(k, w) in weights {
                run[k - first] = w;
            }
            (first, run)
        }
        _ => (0, Vec::new()),
    }
}

/// Projects onto `n_bands` triangular mel filters over `[f_lo, f_hi]`; each
/// value is `ln(Σ weighted magnitudes + 1e-10)`.
pub fn mel_project(s: &Spectrogram, n_bands: usize, f_lo: f64, f_hi: f64) -> Result<BandSpectrogram> {
    FilterBank::mel(n_bands, f_lo, f_hi, s.frame_size(), s.sample_rate())?.apply(s)
}

/// Projects onto `n_bands` rectangular Bark bands covering `[0, Nyquist]`.
pub fn bark_project(s: &Spectrogram, n_bands: usize) -> Result<BandSpectrogram> {
    let nyquist = s.sample_rate() as f64 / 2.0;
    FilterBank::bark(n_bands, 0.0, nyquist, s.frame_size(), s.sample_rate())?.apply(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use std::f64::consts::PI;

    fn noise(n: usize, seed: u64) -> Vec<f32> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.random_range(-0.5f32..0.5)).collect()
    }

    fn mono(x: Vec<f32>) -> AudioBuffer {
        AudioBuffer::mono(x, 16000).unwrap()
    }

    #[test]
    fn sine_peaks_at_expected_bin() {
        let x: Vec<f32> = (0..16000)
            .map(|i| (2.0 * PI * 1000.0 * i as f64 / 16000.0).sin() as f32)
            .collect();
        let s = stft(&mono(x), 512, 256).unwrap();
        for t in 0..s.n_frames() {
            let frame = s.frame(t);
            let argmax = (0..frame.len())
                .max_by(|&a, &b| frame[a].total_cmp(&frame[b]))
                .unwrap();
            assert_eq!(argmax, 32);
        }
    }

    #[test]
    fn zero_audio_gives_zero_magnitudes() {
        let s = stft(&mono(vec![0.0; 4096]), 512, 256).unwrap();
        assert!(s.data().iter().all(|&m| m == 0.0));
    }

    #[test]
    fn parseval_against_time_domain_energy() {
        let x = noise(8192, 3);
        let s = stft(&mono(x.clone()), 512, 256).unwrap();
        let w = hann(512);
        for t in 0..s.n_frames() {
            let energy: f64 = x[t * 256..t * 256 + 512]
                .iter()
                .zip(&w)
                .map(|(&a, &b)| (a as f64 * b as f64).powi(2))
                .sum();
            // One-sided spectrum: interior bins count twice.
            let f = s.frame(t);
            let spectral: f64 = f
                .iter()
                .enumerate()
                .map(|(k, &m)| {
                    let m2 = m as f64 * m as f64;
                    if k == 0 || k == 256 {
                        m2
                    } else {
                        2.0 * m2
                    }
                })
                .sum();
            let rel = (spectral - energy * 512.0).abs() / (energy * 512.0);
            assert!(rel < 1e-3, "frame {t}: rel {rel}");
        }
    }

    #[test]
    fn frame_count_formula() {
        for len in [512, 513, 767, 768, 10_000] {
            let s = stft(&mono(noise(len, 1)), 512, 256).unwrap();
            assert_eq!(s.n_frames(), (len - 512) / 256 + 1);
        }
        assert!(matches!(
            stft(&mono(noise(511, 1)), 512, 256),
            Err(Error::AudioTooShort { .. })
        ));
        assert!(stft(&mono(noise(1000, 1)), 500, 256).is_err());
        assert!(stft(&mono(noise(1000, 1)), 512, 0).is_err());
    }

    #[test]
    fn mel_zero_spectrogram_is_floor() {
        let s = Spectrogram::from_magnitudes(vec![0.0; 257 * 3], 512, 256, 16000).unwrap();
        let b = mel_project(&s, 64, 62.5, 8000.0).unwrap();
        assert!(b.data().iter().all(|&v| v == LOG_FLOOR.ln()));
        let b = bark_project(&s, 32).unwrap();
        assert!(b.data().iter().all(|&v| v == LOG_FLOOR.ln()));
    }

    #[test]
    fn mel_impulse_touches_only_band_and_neighbours() {
        let bank = FilterBank::mel(64, 62.5, 8000.0, 512, 16000).unwrap();
        // Band 40's peak frequency, snapped to the nearest bin.
        let m_lo = hz_to_mel(62.5);
        let m_hi = hz_to_mel(8000.0);
        let centre = mel_to_hz(m_lo + (m_hi - m_lo) * 41.0 / 65.0);
        let bin = (centre / 31.25).round() as usize;
        let mut mags = vec![0.0; 257];
        mags[bin] = 1.0;
        let s = Spectrogram::from_magnitudes(mags, 512, 256, 16000).unwrap();
        let b = bank.apply(&s).unwrap();
        let floor = LOG_FLOOR.ln();
        for band in 0..64 {
            let above = b.frame(0)[band] > floor + 1.0;
            if above {
                assert!((39..=41).contains(&band), "band {band} lit");
            }
        }
        assert!(b.frame(0)[40] > floor + 1.0);
    }

    #[test]
    fn uniform_spectrum_matches_direct_summation() {
        let s = Spectrogram::from_magnitudes(vec![0.75; 257 * 2], 512, 256, 16000).unwrap();
        let b = mel_project(&s, 64, 62.5, 8000.0).unwrap();
        // Independent triangle evaluation straight from the mel formula.
        let m_lo = 2595.0 * (1.0 + 62.5f64 / 700.0).log10();
        let m_hi = 2595.0 * (1.0 + 8000.0f64 / 700.0).log10();
        let inv = |m: f64| 700.0 * (10f64.powf(m / 2595.0) - 1.0);
        for band in 0..64 {
            let lo = inv(m_lo + (m_hi - m_lo) * band as f64 / 65.0);
            let mid = inv(m_lo + (m_hi - m_lo) * (band + 1) as f64 / 65.0);
            let hi = inv(m_lo + (m_hi - m_lo) * (band + 2) as f64 / 65.0);
            let mut sum = 0.0f64;
            for k in 0..257 {
                let f = k as f64 * 31.25;
                let w = if f > lo && f < mid {
                    (f - lo) / (mid - lo)
                } else if f >= mid && f < hi {
                    (hi - f) / (hi - mid)
                } else {
                    0.0
                };
                sum += 0.75 * w;
            }
            let want = (sum + 1e-10).ln();
            assert!((b.frame(1)[band] as f64 - want).abs() < 1e-6, "band {band}");
        }
    }

    #[test]
    fn bark_bands_partition_bins() {
        let bank = FilterBank::bark(32, 0.0, 8000.0, 512, 16000).unwrap();
        for k in 0..257 {
            let total: f32 = (0..32).map(|b| bank.weight(b, k)).sum();
            assert_eq!(total, 1.0, "bin {k}");
        }
        for b in 0..32 {
            assert!((0..257).any(|k| bank.weight(b, k) > 0.0), "band {b} empty");
        }
    }

    #[test]
    fn bark_uniform_spectrum_matches_direct_count() {
        let s = Spectrogram::from_magnitudes(vec![2.0; 257], 512, 256, 16000).unwrap();
        let b = bark_project(&s, 32).unwrap();
        let top = 13.0 * (0.00076f64 * 8000.0).atan() + 3.5 * (8000.0f64 / 7500.0).powi(2).atan();
        let mut counts = [0usize; 32];
        for k in 0..257 {
            let f = k as f64 * 31.25;
            let z = 13.0 * (0.00076 * f).atan() + 3.5 * (f / 7500.0).powi(2).atan();
            counts[((z / top * 32.0) as usize).min(31)] += 1;
        }
        for band in 0..32 {
            let want = (2.0 * counts[band] as f64 + 1e-10).ln();
            assert!((b.frame(0)[band] as f64 - want).abs() < 1e-6);
        }
    }

    #[test]
    fn bark_impulse_lights_one_band() {
        let mut mags = vec![0.0; 257];
        mags[100] = 1.0;
        let s = Spectrogram::from_magnitudes(mags, 512, 256, 16000).unwrap();
        let b = bark_project(&s, 32).unwrap();
        let lit = b.frame(0).iter().filter(|&&v| v > LOG_FLOOR.ln() + 1.0).count();
        assert_eq!(lit, 1);
    }

    #[test]
    fn gain_becomes_additive_log_offset() {
        let x = noise(16000, 9);
        let base = mel_project(&stft(&mono(x.clone()), 512, 256).unwrap(), 64, 62.5, 8000.0).unwrap();
        for g in [0.5f32, 2.0] {
            let scaled: Vec<f32> = x.iter().map(|v| v * g).collect();
            let b = mel_project(&stft(&mono(scaled), 512, 256).unwrap(), 64, 62.5, 8000.0).unwrap();
            for (a, b) in base.data().iter().zip(b.data()) {
                assert!((b - a - g.ln()).abs() < 1e-4);
            }
        }
    }

    #[test]
    fn invalid_ranges_rejected() {
        let s = Spectrogram::from_magnitudes(vec![1.0; 257], 512, 256, 16000).unwrap();
        assert!(mel_project(&s, 64, -1.0, 8000.0).is_err());
        assert!(mel_project(&s, 64, 0.0, 9000.0).is_err());
        assert!(mel_project(&s, 1, 0.0, 8000.0).is_err());
        assert!(mel_project(&s, 8, 4000.0, 3000.0).is_err());
    }
}
