//! Pitch-preserving time stretch by waveform-similarity overlap-add.

use crate::spectral::hann;

#[derive(Debug, Clone, Copy)]
pub struct WsolaConfig {
    pub window: usize,
    pub synthesis_hop: usize,
    pub tolerance: usize,
}

impl WsolaConfig {
    /// 30 ms windows, half-window hop, ±10 ms search at `rate`.
    pub fn for_rate(rate: u32) -> Self {
        let window = (rate as usize * 30 / 1000) & !1;
        Self {
            window,
            synthesis_hop: window / 2,
            tolerance: rate as usize / 100,
        }
    }
}

fn correlation(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| x as f64 * y as f64).sum()
}

/// Plays `x` `factor` times faster (`factor > 1` shortens). Output length is
/// `round(len / factor)`.
pub fn wsola(x: &[f32], factor: f64, cfg: WsolaConfig) -> Vec<f32> {
    let out_len = (x.len() as f64 / factor).round() as usize;
    let (n, hs, tol) = (cfg.window, cfg.synthesis_hop, cfg.tolerance);
    let window = hann(n);
    let ha = factor * hs as f64;

    // Padding lets the search and the final frames read past either end.
    let pad = n + tol;
    let mut padded = vec![0.0f32; x.len() + 2 * pad + (ha.ceil() as usize + n) * 2];
    padded[pad..pad + x.len()].copy_from_slice(x);
    let at = |pos: isize| -> &[f32] {
        let s = (pos + pad as isize) as usize;
        &padded[s..s + n]
    };

    let frames = out_len / hs + 2;
    let mut out = vec![0.0f64; frames * hs + n];
    let mut norm = vec![0.0f64; frames * hs + n];
    let mut prev: isize = 0;
    for k in 0..frames {
        let ideal = (k as f64 * ha).round() as isize;
        let pos = if k == 0 {
            0
        } else {
            let natural = at(prev + hs as isize);
            let mut best = (f64::NEG_INFINITY, ideal);
            for d in -(tol as isize)..=tol as isize {
                let c = correlation(natural, at(ideal + d));
                if c > best.0 {
                    best = (c, ideal + d);
                }
            }
            best.1
        };
        let seg = at(pos);
        for i in 0..n {
            let w = window[i] as f64;
            out[k * hs + i] += w * seg[i] as f64;
            norm[k * hs + i] += w;
        }
        prev = pos;
    }
    (0..out_len)
        .map(|i| if norm[i] > 1e-9 { (out[i] / norm[i]) as f32 } else { 0.0 })
        .collect()
}
