//! Ungated K-weighted loudness.

#[derive(Debug, Clone, Copy)]
struct Biquad {
    b0: f64,
    b1: f64,
    b2: f64,
    a1: f64,
    a2: f64,
}

impl Biquad {
    fn high_shelf(rate: f64) -> Self {
        let gain_db = 3.99984385397;
        let q = 0.7071752369554193;
        let fc = 1_681.974_450_955_532;
        let k = (std::f64::consts::PI * fc / rate).tan();
        let vh = 10f64.powf(gain_db / 20.0);
        let vb = vh.powf(0.499666774155);
        let a0 = 1.0 + k / q + k * k;
        Self {
            b0: (vh + vb * k / q + k * k) / a0,
            b1: 2.0 * (k * k - vh) / a0,
            b2: (vh - vb * k / q + k * k) / a0,
            a1: 2.0 * (k * k - 1.0) / a0,
            a2: (1.0 - k / q + k * k) / a0,
        }
    }

    fn high_pass(rate: f64) -> Self {
        let q = 0.5003270373253953;
        let fc = 38.13547087613982;
        let k = (std::f64::consts::PI * fc / rate).tan();
        let a0 = 1.0 + k / q + k * k;
        Self {
            b0: 1.0,
            b1: -2.0,
            b2: 1.0,
            a1: 2.0 * (k * k - 1.0) / a0,
            a2: (1.0 - k / q + k * k) / a0,
        }
    }

    fn run(&self, x: &[f64]) -> Vec<f64> {
        let (mut x1, mut x2, mut y1, mut y2) = (0.0, 0.0, 0.0, 0.0);
        x.iter()
            .map(|&x0| {
                let y0 = self.b0 * x0 + self.b1 * x1 + self.b2 * x2 - self.a1 * y1 - self.a2 * y2;
                x2 = x1;
                x1 = x0;
                y2 = y1;
                y1 = y0;
                y0
            })
            .collect()
    }
}

/// Loudness in LUFS of the whole signal: K-weighting (shelf then high-pass),
/// mean square, `−0.691 + 10·log10(ms)`. No gating.
pub fn loudness_lufs(x: &[f32], rate: u32) -> f64 {
    let x: Vec<f64> = x.iter().map(|&v| v as f64).collect();
    let y = Biquad::high_pass(rate as f64).run(&Biquad::high_shelf(rate as f64).run(&x));
    let ms = y.iter().map(|v| v * v).sum::<f64>() / y.len().max(1) as f64;
    -0.691 + 10.0 * ms.max(1e-20).log10()
}

/// Gain (linear) that brings `x` to `target` LUFS.
pub fn normalization_gain(x: &[f32], rate: u32, target: f64) -> f64 {
    10f64.powf((target - loudness_lufs(x, rate)) / 20.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_scale_kilohertz_sine() {
        // A 0 dBFS 1 kHz sine reads about -3.01 LUFS (K-weighting is ~+0.69 dB there).
        let x: Vec<f32> = (0..48000)
            .map(|i| (std::f64::consts::TAU * 1000.0 * i as f64 / 48000.0).sin() as f32)
            .collect();
        let l = loudness_lufs(&x, 48000);
        assert!((l + 3.01).abs() < 0.05, "{l}");
    }

    #[test]
    fn gain_shifts_loudness() {
        let x: Vec<f32> = (0..16000).map(|i| ((i * 31) % 101) as f32 / 101.0 - 0.5).collect();
        let y: Vec<f32> = x.iter().map(|v| v * 0.5).collect();
        let d = loudness_lufs(&x, 16000) - loudness_lufs(&y, 16000);
        assert!((d - 20.0 * 2f64.log10()).abs() < 1e-6);
    }
}
