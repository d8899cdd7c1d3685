//! Runs a reduced experiment suite (noise, skip and distance tables) and
//! writes the CSVs and a summary.
//!
//! cargo run --release --example run_experiments -- [out_dir] [clips]

use acfp::degrade::Noise;
use acfp::eval::{CorpusSource, Experiment, ExperimentSpec, Workspace};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let out = std::path::PathBuf::from(args.next().unwrap_or_else(|| "results".into()));
    let clips: usize = args.next().map_or(Ok(40), |s| s.parse())?;
    let spec = ExperimentSpec {
        corpus: CorpusSource::Synthetic { clips, seconds: 30.0, seed: 1 },
        experiments: vec![Experiment::Noise, Experiment::Skip, Experiment::Distance],
        noises: vec![
            Noise::Clean,
            Noise::Shifted { samples: 90 },
            Noise::Volume { db: -6.0 },
            Noise::Gaussian { sigma: 0.01 },
            Noise::TimeStretch { factor: 1.05 },
        ],
        ..ExperimentSpec::default()
    };
    let ws = Workspace::prepare(spec)?;
    for p in ws.run_all(&out)? {
        println!("wrote {}", p.display());
    }
    print!("\n{}", std::fs::read_to_string(out.join("summary.txt"))?);
    Ok(())
}
