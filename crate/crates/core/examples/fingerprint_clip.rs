//! Fingerprints one clip with both extractors and shows how neighbouring
//! fingerprints relate.
//!
//! cargo run --release --example fingerprint_clip -- [clip.wav]

use acfp::audio::load_wav;
use acfp::config::Config;
use acfp::corpus::{synth_clip, Corpus};
use acfp::eval::train_pca;
use acfp::fingerprint::Fingerprint;
use acfp::pipeline::Extractor;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let audio = match std::env::args().nth(1) {
        Some(p) => load_wav(p)?,
        None => synth_clip(11, 10.0),
    };
    let config = Config::default();
    // The projection needs training data; a small synthetic corpus will do.
    let model = train_pca(&Corpus::synthetic(8, 30.0, 3), &config)?;
    let extractors = [
        Extractor::proposed(config.pipeline, model)?,
        Extractor::minhash(config.pipeline, config.minhash_params()?)?,
    ];
    println!("{:.2} s of audio", audio.duration_secs());
    for ex in &extractors {
        let fps = ex.fingerprint(&audio)?;
        println!("\n{}: {} fingerprints, one every {:.3} s", ex.kind(), fps.len(), ex.config().fingerprint_spacing());
        match &fps[0].value {
            Fingerprint::Proposed(e) => println!("  first embedding (8 of 32): {:?}", &e.widen()[..8]),
            Fingerprint::MinHash(s) => println!("  first signature (8 of 72 bytes): {:?}", &s.0[..8]),
        }
        for lag in [1, 8, 32] {
            let d: Vec<f32> = fps.windows(lag + 1).map(|w| w[0].value.distance(&w[lag].value).unwrap()).collect();
            println!("  mean distance at lag {lag:>2}: {:.3}", d.iter().sum::<f32>() / d.len() as f32);
        }
    }
    Ok(())
}
