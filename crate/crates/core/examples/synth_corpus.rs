//! Writes a synthetic music corpus as 16 kHz WAV files plus `manifest.json`.
//!
//! cargo run --release --example synth_corpus -- <dir> [clips] [seconds] [seed]

use std::path::PathBuf;

use acfp::corpus::Corpus;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let dir = PathBuf::from(args.next().unwrap_or_else(|| "corpus".into()));
    let clips: usize = args.next().map_or(Ok(20), |s| s.parse())?;
    let seconds: f64 = args.next().map_or(Ok(30.0), |s| s.parse())?;
    let seed: u64 = args.next().map_or(Ok(1), |s| s.parse())?;

    let corpus = Corpus::synthetic(clips, seconds, seed);
    let entries = corpus.write(&dir)?;
    println!("{} clips of {seconds} s -> {}", entries.len(), dir.join("manifest.json").display());
    Ok(())
}
