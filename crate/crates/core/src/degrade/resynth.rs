//! Complex STFT and weighted overlap-add resynthesis for spectral edits.

use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::spectral::hann;

/// Padded complex STFT of a signal; frames are `frame_size` bins wide
/// (full spectrum) and start every `hop` samples of the padded signal.
pub(crate) struct ComplexStft {
    pub frame_size: usize,
    pub hop: usize,
    pub pad: usize,
    pub len: usize,
    pub frames: Vec<Vec<Complex<f32>>>,
    window: Vec<f32>,
    forward: Arc<dyn Fft<f32>>,
    inverse: Arc<dyn Fft<f32>>,
}

impl ComplexStft {
    /// Pads `frame_size` zeros on both ends so every input sample is covered
    /// by full frames; with `hop` dividing `frame_size`, padded frame
    /// `t + frame_size/hop` lines up with unpadded frame `t`.
    pub fn analyze(x: &[f32], frame_size: usize, hop: usize) -> Self {
        let mut planner = FftPlanner::new();
        let mut s = Self {
            frame_size,
            hop,
            pad: frame_size,
            len: x.len(),
            frames: Vec::new(),
            window: hann(frame_size),
            forward: planner.plan_fft_forward(frame_size),
            inverse: planner.plan_fft_inverse(frame_size),
        };
        s.reanalyze(x);
        s
    }

    pub fn reanalyze(&mut self, x: &[f32]) {
        let n = self.frame_size;
        let mut padded = vec![0.0f32; x.len() + 2 * self.pad];
        padded[self.pad..self.pad + x.len()].copy_from_slice(x);
        let count = (padded.len() - n) / self.hop + 1;
        self.frames.clear();
        for t in 0..count {
            let seg = &padded[t * self.hop..t * self.hop + n];
            let mut buf: Vec<Complex<f32>> = seg
                .iter()
                .zip(&self.window)
                .map(|(&v, &w)| Complex::new(v * w, 0.0))
                .collect();
            self.forward.process(&mut buf);
            self.frames.push(buf);
        }
    }

    /// Frequency of bin `k` at `rate`.
    pub fn bin_hz(&self, k: usize, rate: u32) -> f64 {
        k as f64 * rate as f64 / self.frame_size as f64
    }

    /// Multiplies bin `k` (and its mirror) of every frame by `gain[k]`;
    /// `gain` has `frame_size/2 + 1` entries.
    pub fn scale_bins(&mut self, gain: &[f32]) {
        let n = self.frame_size;
        for f in &mut self.frames {
            for (k, &g) in gain.iter().enumerate() {
                f[k] *= g;
                if k != 0 && k != n / 2 {
                    f[n - k] *= g;
                }
            }
        }
    }

    /// Least-squares inverse: `Σ w·frame / Σ w²`, cropped to the original length.
    pub fn synthesize(&self) -> Vec<f32> {
        let n = self.frame_size;
        let total = self.len + 2 * self.pad;
        let mut acc = vec![0.0f64; total];
        let mut norm = vec![0.0f64; total];
        let scale = 1.0 / n as f32;
        for (t, f) in self.frames.iter().enumerate() {
            let mut buf = f.clone();
            self.inverse.process(&mut buf);
            let start = t * self.hop;
            for i in 0..n {
                let w = self.window[i] as f64;
                acc[start + i] += w * (buf[i].re * scale) as f64;
                norm[start + i] += w * w;
            }
        }
        (self.pad..self.pad + self.len)
            .map(|i| if norm[i] > 1e-12 { (acc[i] / norm[i]) as f32 } else { 0.0 })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_round_trip() {
        let x: Vec<f32> = (0..5000).map(|i| ((i * 7919) % 997) as f32 / 997.0 - 0.5).collect();
        let s = ComplexStft::analyze(&x, 512, 256);
        let y = s.synthesize();
        assert_eq!(y.len(), x.len());
        for (a, b) in x.iter().zip(&y) {
            assert!((a - b).abs() < 1e-5);
        }
    }
}
