//! Compares IVF search with the exhaustive oracle across probe counts.
//!
//! cargo run --release --example ivf_search

use std::time::Instant;

use acfp::config::Config;
use acfp::corpus::Corpus;
use acfp::degrade::{apply_noise, Noise, NoiseSpec};
use acfp::eval::{train_pca, DenseSet};
use acfp::fingerprint::Fingerprint;
use acfp::index::Index;
use acfp::pipeline::Extractor;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let corpus = Corpus::synthetic(60, 30.0, 9);
    let config = Config::default();
    let ex = Extractor::proposed(config.pipeline, train_pca(&corpus, &config)?)?;
    let db = DenseSet::compute(&corpus, &ex)?.db(0)?;
    let flat = Index::flat(db.clone());
    let t = Instant::now();
    let Index::Ivf(mut ivf) = Index::ivf(db.clone(), None, 1)? else { unreachable!() };
    println!("{} fingerprints, nlist {}, trained in {:.2?}", db.len(), ivf.nlist(), t.elapsed());

    // Queries: fingerprints of lightly noisy audio.
    let mut queries: Vec<Fingerprint> = Vec::new();
    for (i, (_, a)) in corpus.items.iter().enumerate().take(20) {
        let y = apply_noise(a, &NoiseSpec::new(Noise::Gaussian { sigma: 0.01 }, i as u64))?;
        queries.extend(ex.fingerprint(&y)?.into_iter().map(|t| t.value));
    }
    let top = |hits: Vec<acfp::index::SearchHit>| (hits[0].content, hits[0].position);
    let oracle: Vec<(usize, usize)> = queries.iter().map(|q| flat.search(q, 1).map(top)).collect::<Result<_, _>>()?;

    let nlist = ivf.nlist();
    for nprobe in [1, nlist / 32, nlist / 16, nlist / 8, nlist / 2, nlist] {
        let nprobe = nprobe.max(1);
        ivf.set_nprobe(nprobe)?;
        let t = Instant::now();
        let agree = queries
            .iter()
            .zip(&oracle)
            .filter(|(q, &o)| top(ivf.search(q, 1).unwrap()) == o)
            .count();
        let fps = queries.len() as f64 / t.elapsed().as_secs_f64();
        println!("nprobe {nprobe:>3}: recall@1 {:.3}, {fps:>9.0} queries/s", agree as f64 / queries.len() as f64);
    }
    Ok(())
}
