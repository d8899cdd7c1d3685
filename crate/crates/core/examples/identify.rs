//! Identifies degraded excerpts against a sparse proposed DB behind an IVF
//! index, printing the decision and vote table per segment.
//!
//! cargo run --release --example identify

use acfp::config::Config;
use acfp::corpus::{white_noise, Corpus};
use acfp::degrade::{apply_noise, Noise, NoiseSpec};
use acfp::eval::{train_pca, DenseSet};
use acfp::index::Index;
use acfp::matcher::{match_segment, segment_stream, Decision, MatchConfig};
use acfp::pipeline::Extractor;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let corpus = Corpus::synthetic(40, 30.0, 13);
    let config = Config::default();
    let ex = Extractor::proposed(config.pipeline, train_pca(&corpus, &config)?)?;
    let index = Index::ivf(DenseSet::compute(&corpus, &ex)?.db(5)?, None, 1)?;
    let cfg = MatchConfig::default();
    println!("{}", index.describe());

    let (id, clip) = &corpus.items[17];
    let excerpt = clip.slice(16000 * 11, 16000 * 10)?;
    let noisy = apply_noise(&excerpt, &NoiseSpec::new(Noise::Gaussian { sigma: 0.01 }, 3))?;
    println!("\nexcerpt of {id} from 11.0 s, Gaussian noise 0.01:");
    for seg in segment_stream(&ex.fingerprint(&noisy)?, 2.5, 2.5, Some(id))? {
        let r = match_segment(&seg, &index, &cfg)?;
        let best = r.candidates.first().map(|c| format!("best {} votes {}", c.content_id, c.votes)).unwrap_or_default();
        match r.decision {
            // Offsets are relative to the excerpt: near 11 s, within half the
            // skip-5 spacing.
            Decision::Matched { content_id, offset, votes } => {
                println!("  {:>5.2} s: {content_id} at offset {offset:.3} s ({votes} votes)", seg.start())
            }
            Decision::NoMatch => println!("  {:>5.2} s: no match ({best})", seg.start()),
        }
    }

    println!("\nwhite noise (not in the DB):");
    for seg in segment_stream(&ex.fingerprint(&white_noise(10.0, 0.3, 8))?, 2.5, 2.5, None)? {
        println!("  {:>5.2} s: {:?}", seg.start(), match_segment(&seg, &index, &cfg)?.decision);
    }
    Ok(())
}
