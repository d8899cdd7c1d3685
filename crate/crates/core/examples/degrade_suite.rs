//! Applies every noise of the evaluation suite to one clip and reports the
//! output length and signal-to-noise ratio.
//!
//! cargo run --release --example degrade_suite -- [out_dir]

use acfp::audio::save_wav;
use acfp::corpus::synth_clip;
use acfp::degrade::{apply_noise, Noise, NoiseSpec};

fn snr_db(clean: &[f32], noisy: &[f32]) -> f64 {
    let (mut s, mut n) = (0.0f64, 0.0f64);
    for (a, b) in clean.iter().zip(noisy) {
        s += (*a as f64).powi(2);
        n += (*a as f64 - *b as f64).powi(2);
    }
    10.0 * (s / n.max(1e-20)).log10()
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::args().nth(1).map(std::path::PathBuf::from);
    let clip = synth_clip(5, 6.0);
    println!("{:<34} {:>8} {:>9}", "noise", "samples", "snr dB");
    for noise in Noise::suite() {
        let label = noise.label();
        match apply_noise(&clip, &NoiseSpec::new(noise, 42)) {
            Ok(y) => {
                // Length-changing noises have no sample-aligned SNR.
                let snr = if y.frames() == clip.frames() {
                    format!("{:>9.1}", snr_db(clip.samples(), y.samples()))
                } else {
                    format!("{:>9}", "-")
                };
                println!("{label:<34} {:>8} {snr}", y.frames());
                if let Some(dir) = &out {
                    std::fs::create_dir_all(dir)?;
                    save_wav(dir.join(format!("{label}.wav")), &y)?;
                }
            }
            Err(e) => println!("{label:<34} skipped: {e}"),
        }
    }
    Ok(())
}
