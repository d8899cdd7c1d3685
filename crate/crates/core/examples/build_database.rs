//! Builds reference DBs at several skip rates, saves one and reloads it.
//!
//! cargo run --release --example build_database

use acfp::config::Config;
use acfp::corpus::Corpus;
use acfp::eval::{train_pca, DenseSet};
use acfp::pipeline::Extractor;
use acfp::refdb::{sparse_len, ReferenceDB};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let corpus = Corpus::synthetic(20, 30.0, 7);
    let config = Config::default();
    let ex = Extractor::proposed(config.pipeline, train_pca(&corpus, &config)?)?;
    let dense = DenseSet::compute(&corpus, &ex)?;
    println!("dense fingerprints: {}", dense.total());
    for skip in [0, 1, 3, 5, 7] {
        let db = dense.db(skip)?;
        let expect: usize = dense.sequences.iter().map(|(_, s)| sparse_len(s.len(), skip)).sum();
        println!("skip {skip}: {:>6} fingerprints ({expect} expected), {:>8} bytes", db.len(), db.to_bytes().len());
    }

    let dir = tempfile::tempdir()?;
    let path = dir.path().join("proposed_skip5.acdb");
    let db = dense.db(5)?;
    db.save(&path)?;
    let back = ReferenceDB::load(&path)?;
    println!("\nreloaded {}: {} contents, checksum {:08x} (saved {:08x})", path.display(), back.contents().len(), back.checksum(), db.checksum());
    let c = &back.contents()[0];
    println!("{} holds {} fingerprints, first at {:.3} s, then every {:.3} s", c.id, c.count, back.timestamp(0, 0), back.spacing());
    Ok(())
}
