//! Seeded synthetic music for desk-scale experiments, and corpus loading.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::audio::{load_wav, save_wav_pcm16, AudioBuffer, CANONICAL_RATE};
use crate::degrade::resynth::ComplexStft;
use crate::error::Result;
use crate::refdb::{save_manifest, CorpusEntry};

const TABLE: usize = 2048;
const PEAK: f32 = 0.45;

/// In-memory corpus: ids with canonical audio, sorted by id.
#[derive(Debug, Clone, Default)]
pub struct Corpus {
    pub items: Vec<(String, AudioBuffer)>,
}

impl Corpus {
    /// `clips` synthetic pieces of `seconds` each; clip `i` uses `seed + i`.
    pub fn synthetic(clips: usize, seconds: f64, seed: u64) -> Self {
        let items = (0..clips)
            .into_par_iter()
            .map(|i| (format!("clip{i:04}"), synth_clip(seed.wrapping_add(i as u64), seconds)))
            .collect();
        Self { items }
    }

    pub fn from_entries(entries: &[CorpusEntry]) -> Result<Self> {
        let mut items = entries
            .par_iter()
            .map(|e| Ok((e.id.clone(), crate::audio::canonicalize(&load_wav(&e.path)?)?)))
            .collect::<Result<Vec<_>>>()?;
        items.sort_by(|a, b| a.0.cmp(&b.0));
        Ok(Self { items })
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Writes every clip as 16-bit WAV under `dir` plus `manifest.json`.
    pub fn write(&self, dir: &Path) -> Result<Vec<CorpusEntry>> {
        std::fs::create_dir_all(dir).map_err(|e| crate::error::Error::io(dir, e))?;
        let entries: Vec<CorpusEntry> = self
            .items
            .par_iter()
            .map(|(id, audio)| {
                let path = dir.join(format!("{id}.wav"));
                save_wav_pcm16(&path, audio)?;
                Ok(CorpusEntry {
                    id: id.clone(),
                    path: format!("{id}.wav").into(),
                })
            })
            .collect::<Result<_>>()?;
        save_manifest(dir.join("manifest.json"), &entries)?;
        Ok(entries)
    }
}

fn wavetable(harmonics: &[f32]) -> Vec<f32> {
    let mut t = vec![0.0f32; TABLE];
    for (h, &a) in harmonics.iter().enumerate() {
        if a == 0.0 {
            continue;
        }
        let k = (h + 1) as f64;
        for (i, v) in t.iter_mut().enumerate() {
            *v += a * (std::f64::consts::TAU * k * i as f64 / TABLE as f64).sin() as f32;
        }
    }
    let peak = t.iter().fold(0.0f32, |m, v| m.max(v.abs())).max(1e-6);
    t.iter_mut().for_each(|v| *v /= peak);
    t
}

/// Band-limited versions of one timbre, by harmonic count.
struct Instrument {
    tables: Vec<(usize, Vec<f32>)>,
}

impl Instrument {
    fn new(harmonics: &[f32]) -> Self {
        let mut tables = Vec::new();
        let mut n = harmonics.len();
        while n >= 1 {
            tables.push((n, wavetable(&harmonics[..n])));
            n /= 2;
        }
        Self { tables }
    }

    /// Richest table whose top harmonic stays below 7.5 kHz.
    fn for_hz(&self, hz: f64) -> &[f32] {
        let limit = (7500.0 / hz).floor().max(1.0) as usize;
        &self.tables.iter().find(|(n, _)| *n <= limit).unwrap_or(self.tables.last().unwrap()).1
    }
}

fn timbre(rng: &mut ChaCha8Rng, n: usize) -> Vec<f32> {
    let tilt = rng.random_range(0.6..1.4f32);
    (1..=n)
        .map(|h| {
            let odd = if h % 2 == 0 { rng.random_range(0.2..1.0) } else { 1.0 };
            odd / (h as f32).powf(tilt)
        })
        .collect()
}

fn midi_hz(m: f64) -> f64 {
    440.0 * 2f64.powf((m - 69.0) / 12.0)
}

/// Adds a note with an attack/decay/release envelope using `table`.
#[allow(clippy::too_many_arguments)]
fn note(out: &mut [f32], table: &[f32], start: usize, len: usize, hz: f64, amp: f32, attack: usize, decay: f32) {
    let rate = CANONICAL_RATE as f64;
    let step = hz * TABLE as f64 / rate;
    let release = (len / 6).clamp(16, 800);
    let mut phase = 0.0f64;
    for i in 0..len {
        let t = start + i;
        if t >= out.len() {
            break;
        }
        let env = if i < attack {
            i as f32 / attack as f32
        } else {
            (-(decay * (i - attack) as f32 / rate as f32)).exp()
        };
        let tail = if i + release > len {
            (len - i) as f32 / release as f32
        } else {
            1.0
        };
        let idx = phase as usize;
        let frac = (phase - idx as f64) as f32;
        let s = table[idx % TABLE] * (1.0 - frac) + table[(idx + 1) % TABLE] * frac;
        out[t] += amp * env * tail * s;
        phase += step;
        if phase >= TABLE as f64 {
            phase -= TABLE as f64;
        }
    }
}

fn percussion(out: &mut [f32], rng: &mut ChaCha8Rng, start: usize, kind: u8, amp: f32) {
    let rate = CANONICAL_RATE as f32;
    match kind {
        // Kick: downward sine sweep.
        0 => {
            let mut phase = 0.0f32;
            for i in 0..2400 {
                let t = start + i;
                if t >= out.len() {
                    break;
                }
                let f = 45.0 + 90.0 * (-(i as f32) / 300.0).exp();
                phase += std::f32::consts::TAU * f / rate;
                out[t] += amp * (-(i as f32) / 1500.0).exp() * phase.sin();
            }
        }
        // Hat, snare or cymbal: decaying noise, high-passed by differencing.
        _ => {
            let len = match kind {
                1 => 1600,
                2 => 3000,
                _ => 9000,
            };
            let mut prev = 0.0f32;
            for i in 0..len {
                let t = start + i;
                if t >= out.len() {
                    break;
                }
                let w: f32 = rng.random_range(-1.0..1.0);
                let s = if kind == 2 { w } else { w - prev };
                prev = w;
                out[t] += amp * 0.5 * (-(i as f32) / (len as f32 / 5.0)).exp() * s;
            }
        }
    }
}

/// One seeded piece: chord pads changing every 2–4 s, bass, melody,
/// drums and a quiet noise bed, organised in sections, then saturated like
/// a mastered mix so energy reaches the top of the band. Peak 0.45.
pub fn synth_clip(seed: u64, seconds: f64) -> AudioBuffer {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rate = CANONICAL_RATE as f64;
    let n = (seconds * rate).round() as usize;
    let mut out = vec![0.0f32; n];

    let root = rng.random_range(40..56) as f64;
    let scale: &[i32] = if rng.random_bool(0.5) {
        &[0, 2, 4, 5, 7, 9, 11]
    } else {
        &[0, 2, 3, 5, 7, 8, 10]
    };
    let beat = 60.0 / rng.random_range(72.0..150.0) * rate;
    let cymbals = rng.random_bool(0.6);
    let pad = Instrument::new(&timbre(&mut rng, 64));
    let lead = Instrument::new(&timbre(&mut rng, 64));
    let bass = Instrument::new(&timbre(&mut rng, 32));
    let degree = |d: i32| -> f64 {
        let oct = d.div_euclid(7);
        (scale[d.rem_euclid(7) as usize] + 12 * oct) as f64
    };

    // Sections with their own density and loudness.
    let mut section_edges = vec![0usize];
    while *section_edges.last().unwrap() < n {
        let len = rng.random_range(6.0..12.0) * rate;
        section_edges.push(section_edges.last().unwrap() + len as usize);
    }
    let sections: Vec<(usize, usize, f32, bool, bool)> = section_edges
        .windows(2)
        .map(|w| {
            (
                w[0],
                w[1].min(n),
                rng.random_range(0.6..1.0),
                rng.random_bool(0.75),
                rng.random_bool(0.8),
            )
        })
        .collect();
    let section_at = |t: usize| sections.iter().find(|s| t >= s.0 && t < s.1).copied().unwrap_or(sections[0]);

    // Chords.
    let mut t = 0usize;
    while t < n {
        let len = (rng.random_range(2.0..4.0) * rate) as usize;
        let (_, _, level, _, _) = section_at(t);
        let d = rng.random_range(0..7);
        for (k, off) in [0, 2, 4].iter().enumerate() {
            let hz = midi_hz(root + 12.0 + degree(d + off));
            note(&mut out, pad.for_hz(hz), t, len, hz, 0.07 * level / (1.0 + k as f32 * 0.2), 1200, 0.4);
        }
        // Bass on every beat of the chord.
        let mut b = t as f64;
        while (b as usize) < (t + len).min(n) {
            let blen = (beat * rng.random_range(0.5..1.0)) as usize;
            let hz = midi_hz(root + degree(d));
            note(&mut out, bass.for_hz(hz), b as usize, blen, hz, 0.12 * level, 80, 3.0);
            b += beat;
        }
        t += len;
    }

    // Melody.
    let mut t = 0usize;
    let mut d = rng.random_range(0..7);
    while t < n {
        let (_, _, level, melody_on, _) = section_at(t);
        let len = (beat * [0.5, 0.5, 1.0, 1.0, 1.5, 2.0][rng.random_range(0..6)]) as usize;
        if melody_on && rng.random_bool(0.85) {
            d = (d + rng.random_range(-3..=3)).clamp(-3, 12);
            let hz = midi_hz(root + 24.0 + degree(d));
            note(&mut out, lead.for_hz(hz), t, len, hz, 0.09 * level, 160, 2.0);
        }
        t += len;
    }

    // Drums.
    let mut k = 0usize;
    loop {
        let t = (k as f64 * beat / 2.0) as usize;
        if t >= n {
            break;
        }
        let (_, _, level, _, drums_on) = section_at(t);
        if drums_on {
            let jitter = rng.random_range(0..64);
            match k % 4 {
                0 => percussion(&mut out, &mut rng, t + jitter, 0, 0.25 * level),
                2 => percussion(&mut out, &mut rng, t + jitter, 2, 0.12 * level),
                _ => percussion(&mut out, &mut rng, t + jitter, 1, 0.1 * level),
            }
            if k.is_multiple_of(8) && cymbals {
                percussion(&mut out, &mut rng, t + jitter, 3, 0.08 * level);
            }
        }
        k += 1;
    }

    reverb(&mut out, &mut rng);
    colour(&mut out, &mut rng);

    // Bus saturation, like a mastered mix.
    let peak = out.iter().fold(0.0f32, |m, v| m.max(v.abs())).max(1e-6);
    let drive = rng.random_range(1.0..3.0f32);
    out.iter_mut().for_each(|v| *v = (drive * *v / peak).tanh() / drive.tanh());

    // Noise bed so no window is ever silent.
    let bed = Normal::new(0.0, 0.002).unwrap();
    for v in &mut out {
        *v += bed.sample(&mut rng) as f32;
    }
    let peak = out.iter().fold(0.0f32, |m, v| m.max(v.abs())).max(1e-6);
    out.iter_mut().for_each(|v| *v *= PEAK / peak);
    AudioBuffer::mono(out, CANONICAL_RATE).expect("non-empty clip")
}

/// Schroeder reverb: four damped feedback combs in parallel, then two
/// allpasses, mixed back in.
fn reverb(x: &mut [f32], rng: &mut ChaCha8Rng) {
    let room = rng.random_range(0.7..1.3f32);
    let feedback = rng.random_range(0.75..0.88f32);
    let damp = rng.random_range(0.2..0.5f32);
    let wet = rng.random_range(0.25..0.5f32);
    let mut acc = vec![0.0f32; x.len()];
    for base in [1116usize, 1188, 1277, 1356] {
        let d = (base as f32 * room) as usize;
        let mut buf = vec![0.0f32; d];
        let mut lp = 0.0f32;
        for (i, &v) in x.iter().enumerate() {
            let y = buf[i % d];
            lp = y * (1.0 - damp) + lp * damp;
            buf[i % d] = v + lp * feedback;
            acc[i] += y * 0.25;
        }
    }
    for base in [556usize, 441] {
        let d = (base as f32 * room) as usize;
        let mut buf = vec![0.0f32; d];
        for (i, v) in acc.iter_mut().enumerate() {
            let b = buf[i % d];
            buf[i % d] = *v + b * 0.5;
            *v = b - *v;
        }
    }
    for (v, r) in x.iter_mut().zip(&acc) {
        *v += wet * r;
    }
}

/// Random smooth spectral envelope (tilt plus a few broad bumps), standing
/// in for the differences between recordings, rooms and mixes.
fn colour(x: &mut Vec<f32>, rng: &mut ChaCha8Rng) {
    let tilt = rng.random_range(-4.0..2.0f64);
    let bumps: Vec<(f64, f64, f64)> = (0..4)
        .map(|_| {
            let centre = rng.random_range(6.0..13.0f64);
            let width = rng.random_range(0.5..1.5f64);
            let db = rng.random_range(3.0..12.0f64) * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            (centre, width, db)
        })
        .collect();
    let mut s = ComplexStft::analyze(x, 512, 128);
    let gains: Vec<f32> = (0..=256)
        .map(|k| {
            let oct = s.bin_hz(k, CANONICAL_RATE).max(20.0).log2();
            let db = tilt * (oct - 1000f64.log2())
                + bumps
                    .iter()
                    .map(|&(c, w, g)| g * (-0.5 * ((oct - c) / w).powi(2)).exp())
                    .sum::<f64>();
            10f64.powf(db / 20.0) as f32
        })
        .collect();
    s.scale_bins(&gains);
    *x = s.synthesize();
}

/// Uniform white noise in [-amp, amp].
pub fn white_noise(seconds: f64, amp: f32, seed: u64) -> AudioBuffer {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = (seconds * CANONICAL_RATE as f64).round() as usize;
    AudioBuffer::mono((0..n).map(|_| rng.random_range(-amp..amp)).collect(), CANONICAL_RATE)
        .expect("non-empty noise")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clips_are_deterministic_bounded_and_distinct() {
        let a = synth_clip(1, 3.0);
        assert_eq!(a.samples(), synth_clip(1, 3.0).samples());
        assert_ne!(a.samples(), synth_clip(2, 3.0).samples());
        assert_eq!(a.frames(), 48_000);
        let peak = a.samples().iter().fold(0.0f32, |m, v| m.max(v.abs()));
        assert!((peak - PEAK).abs() < 1e-6);
        // No silent 100 ms stretch.
        for chunk in a.samples().chunks(1600) {
            let rms = (chunk.iter().map(|v| v * v).sum::<f32>() / chunk.len() as f32).sqrt();
            assert!(rms > 1e-4);
        }
    }
}
