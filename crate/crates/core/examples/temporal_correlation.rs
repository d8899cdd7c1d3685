//! Normalized distance against time lag for both fingerprint kinds, and one
//! full distance matrix per kind written as CSV.
//!
//! cargo run --release --example temporal_correlation -- [out_dir]

use acfp::config::Config;
use acfp::corpus::Corpus;
use acfp::eval::{train_pca, DistanceMatrix};
use acfp::pipeline::Extractor;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::args().nth(1).map(std::path::PathBuf::from);
    let corpus = Corpus::synthetic(10, 60.0, 21);
    let config = Config::default();
    let extractors = [
        Extractor::proposed(config.pipeline, train_pca(&corpus, &config)?)?,
        Extractor::minhash(config.pipeline, config.minhash_params()?)?,
    ];
    let lags = [1, 2, 4, 8, 16, 32, 64];
    println!("{:<9} {}", "kind", lags.map(|l| format!("{:>7}", format!("lag{l}"))).join(""));
    for ex in &extractors {
        let mut sums = [0.0; 7];
        for (i, (id, a)) in corpus.items.iter().enumerate() {
            let m = DistanceMatrix::compute(&ex.fingerprint(a)?)?;
            for (s, &l) in sums.iter_mut().zip(&lags) {
                *s += m.lag_mean(l) / corpus.len() as f64;
            }
            if let (0, Some(dir)) = (i, &out) {
                std::fs::create_dir_all(dir)?;
                m.write_csv(&dir.join(format!("matrix_{}_{id}.csv", ex.kind())))?;
            }
        }
        println!("{:<9} {}", ex.kind().name(), sums.map(|s| format!("{s:>7.3}")).join(""));
    }
    Ok(())
}
