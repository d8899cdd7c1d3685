//! Rational-ratio polyphase resampler with a Kaiser-windowed sinc kernel.
//!
//! The kernel spans 32 zero crossings either side measured at the lower of the
//! two rates (64 taps per phase there; proportionally more input taps when
//! decimating). Cutoff sits at 90% of the lower Nyquist, which with β = 8.6
//! puts the ≥ 60 dB stopband below the output Nyquist.

const KAISER_BETA: f64 = 8.6;
const HALF_TAPS: f64 = 32.0;
const ROLLOFF: f64 = 0.9;

pub struct Resampler {
    up: usize,
    down: usize,
    /// Taps per phase.
    taps: usize,
    /// First input offset relative to the base index of each output sample.
    first: isize,
    /// `up` phase filters, `taps` coefficients each.
    table: Vec<f64>,
}

impl Resampler {
    pub fn new(from_rate: u32, to_rate: u32) -> Self {
        let g = gcd(from_rate as u64, to_rate as u64);
        let up = (to_rate as u64 / g) as usize;
        let down = (from_rate as u64 / g) as usize;
        let ratio = to_rate as f64 / from_rate as f64;
        let scale = ratio.min(1.0);
        // Cutoff and half-width, both in input samples.
        let cutoff = 0.5 * ROLLOFF * scale;
        let half_width = HALF_TAPS / scale;
        let reach = half_width.ceil() as isize + 1;
        let first = -reach + 1;
        let taps = (2 * reach) as usize;
        let i0_beta = bessel_i0(KAISER_BETA);

        let mut table = vec![0.0; up * taps];
        for phase in 0..up {
            let frac = phase as f64 / up as f64;
            let row = &mut table[phase * taps..(phase + 1) * taps];
            for (j, c) in row.iter_mut().enumerate() {
                // Distance from output instant to input sample base + first + j.
                let t = frac - (first + j as isize) as f64;
                let x = t / half_width;
                if x.abs() >= 1.0 {
                    continue;
                }
                let window = bessel_i0(KAISER_BETA * (1.0 - x * x).sqrt()) / i0_beta;
                *c = 2.0 * cutoff * sinc(2.0 * cutoff * t) * window;
            }
            let sum: f64 = row.iter().sum();
            row.iter_mut().for_each(|c| *c /= sum);
        }
        Self {
            up,
            down,
            taps,
            first,
            table,
        }
    }

    pub fn output_len(&self, input_len: usize) -> usize {
        (input_len * self.up).div_ceil(self.down)
    }

    pub fn process(&self, input: &[f32]) -> Vec<f32> {
        let n_out = self.output_len(input.len());
        let len = input.len() as isize;
        (0..n_out)
            .map(|n| {
                let pos = n * self.down;
                let base = (pos / self.up) as isize;
                let phase = pos % self.up;
                let coeffs = &self.table[phase * self.taps..(phase + 1) * self.taps];
                let start = base + self.first;
                let mut acc = 0.0f64;
                for (j, &c) in coeffs.iter().enumerate() {
                    let i = start + j as isize;
                    if i >= 0 && i < len {
                        acc += c * input[i as usize] as f64;
                    }
                }
                acc as f32
            })
            .collect()
    }
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        let px = std::f64::consts::PI * x;
        px.sin() / px
    }
}

/// Zeroth-order modified Bessel function of the first kind (power series).
pub(crate) fn bessel_i0(x: f64) -> f64 {
    let half = x / 2.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..64 {
        term *= (half / k as f64) * (half / k as f64);
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}
