//! The `acfp` command line: argument definitions, dispatch and exit codes.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::audio::{load_wav, save_wav};
use crate::config::Config;
use crate::corpus::Corpus;
use crate::degrade::{apply_noise_with_tool, Noise, NoiseSpec};
use crate::error::Error;
use crate::eval::{build_index, train_pca, ExperimentSpec, Workspace};
use crate::fingerprint::{Fingerprint, FingerprintKind};
use crate::index::{bench_fps, Index, IndexType};
use crate::matcher::{match_segment, segment_stream, DEFAULT_SEGMENT_SECONDS};
use crate::pipeline::Extractor;
use crate::proposed::pca::PcaModel;
use crate::refdb::{load_manifest, ReferenceDB};

/// Process exit codes, one per failure class.
pub mod exit {
    pub const OK: u8 = 0;
    /// Bad flags or a missing required input (clap also uses 2).
    pub const USAGE: u8 = 2;
    pub const CONFIG: u8 = 3;
    pub const IO: u8 = 4;
    /// Corrupt, truncated or mismatched ACDB/ACIX/ACPC file.
    pub const FORMAT: u8 = 5;
    /// Audio or parameters the pipeline cannot accept.
    pub const INPUT: u8 = 6;
    /// External encoder missing or failing.
    pub const TOOL: u8 = 7;
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Lib(#[from] Error),
    #[error("{0}")]
    Usage(String),
    /// Stdout was closed by the reader (e.g. `| head`); not a failure.
    #[error("output closed")]
    Closed,
    #[error(
        "proposed fingerprints need a PCA model: pass --pca <model.acpc> \
         (create one with `acfp train-pca --corpus <manifest.json> --out <model.acpc>`)"
    )]
    MissingModel,
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Closed => exit::OK,
            CliError::Usage(_) | CliError::MissingModel => exit::USAGE,
            CliError::Lib(e) => match e {
                Error::Config(_) => exit::CONFIG,
                Error::Io { .. } => exit::IO,
                Error::BadMagic { .. }
                | Error::UnsupportedVersion { .. }
                | Error::Truncated
                | Error::Checksum { .. }
                | Error::Malformed(_)
                | Error::IndexDbMismatch
                | Error::Json(_) => exit::FORMAT,
                Error::ToolUnavailable { .. } | Error::ToolFailed { .. } => exit::TOOL,
                Error::Wav { .. }
                | Error::UnsupportedAudio(_)
                | Error::EmptyAudio
                | Error::SampleRateTooLow(_)
                | Error::AudioTooShort { .. }
                | Error::InvalidParameter(_)
                | Error::DimensionMismatch { .. }
                | Error::HalfOverflow(_)
                | Error::TooFewSamples { .. }
                | Error::KindMismatch { .. }
                | Error::EmptyDatabase
                | Error::DuplicateId(_) => exit::INPUT,
            },
        }
    }
}

type CliResult<T = ()> = std::result::Result<T, CliError>;

/// Audio fingerprinting for content recognition: compact L2 fingerprints,
/// a min-hash baseline, sparse reference DBs and IVF search.
#[derive(Debug, Parser)]
#[command(name = "acfp", version)]
pub struct Cli {
    /// JSON config file; missing keys take defaults (see `config init`).
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Worker threads [default: all cores]. Outputs do not depend on it.
    #[arg(long, global = true, value_name = "N")]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fingerprint a WAV file; prints one JSON object per fingerprint.
    Fingerprint(FingerprintArgs),
    /// Fit the 32-dimensional projection on a corpus.
    TrainPca(TrainPcaArgs),
    /// Fingerprint a corpus into a reference DB (ACDB).
    BuildDb(BuildDbArgs),
    /// Build a search index (ACIX) over a reference DB.
    BuildIndex(BuildIndexArgs),
    /// Apply one artificial noise to a WAV file.
    Degrade(DegradeArgs),
    /// Identify the content of each segment of a recording; prints JSON lines.
    Query(QueryArgs),
    /// Experiment suite.
    #[command(subcommand)]
    Eval(EvalCommand),
    /// Measure search throughput in query fingerprints per second.
    Bench(BenchArgs),
    /// Print the header of an ACDB, ACIX or ACPC file.
    Inspect(InspectArgs),
    /// Config file helpers.
    #[command(subcommand)]
    Config(ConfigCommand),
}

#[derive(Debug, Args)]
pub struct FingerprintArgs {
    /// proposed or minhash.
    #[arg(long)]
    pub kind: FingerprintKind,
    /// PCA model (required for proposed).
    #[arg(long, value_name = "FILE")]
    pub pca: Option<PathBuf>,
    /// Write JSON lines here instead of stdout.
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
    pub input: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainPcaArgs {
    /// Manifest: JSON list of {id, path}.
    #[arg(long, value_name = "FILE")]
    pub corpus: PathBuf,
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct BuildDbArgs {
    #[arg(long)]
    pub kind: FingerprintKind,
    /// Keep one fingerprint in every skip+1.
    #[arg(long, default_value_t = 0)]
    pub skip: usize,
    /// Manifest: JSON list of {id, path}.
    #[arg(long, value_name = "FILE")]
    pub corpus: PathBuf,
    /// PCA model (required for proposed).
    #[arg(long, value_name = "FILE")]
    pub pca: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct BuildIndexArgs {
    #[arg(long, value_name = "FILE")]
    pub db: PathBuf,
    /// flat or ivf [default: ivf for proposed, flat for minhash].
    #[arg(long = "type", value_name = "TYPE")]
    pub index_type: Option<IndexType>,
    /// IVF list count [default: config, else round(sqrt(N))].
    #[arg(long)]
    pub nlist: Option<usize>,
    /// Lists probed per query [default: config, else nlist/16].
    #[arg(long)]
    pub nprobe: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct DegradeArgs {
    /// Noise kind, e.g. gaussian, composite, time_stretch.
    #[arg(long)]
    pub noise: String,
    /// Noise parameter, e.g. 0.02 or 10,0.02,random for composite
    /// (negative values as --param=-6).
    #[arg(long)]
    pub param: Option<String>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    pub input: PathBuf,
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct QueryArgs {
    #[arg(long, value_name = "FILE")]
    pub db: PathBuf,
    /// Index built from the same DB [default: exhaustive search].
    #[arg(long, value_name = "FILE")]
    pub index: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    pub audio: PathBuf,
    /// Segment length in seconds.
    #[arg(long, default_value_t = DEFAULT_SEGMENT_SECONDS)]
    pub seg_len: f64,
    /// Segment hop in seconds [default: seg-len].
    #[arg(long)]
    pub hop: Option<f64>,
    /// Override the IVF probe count.
    #[arg(long)]
    pub nprobe: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum EvalCommand {
    /// Run the experiments described by a spec file; writes CSVs and summary.txt.
    Run {
        #[arg(long, value_name = "FILE")]
        spec: PathBuf,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
    },
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long, value_name = "FILE")]
    pub db: PathBuf,
    /// Index built from the DB [default: exhaustive search].
    #[arg(long, value_name = "FILE")]
    pub index: Option<PathBuf>,
    /// DB whose fingerprints serve as queries (at least 1000).
    #[arg(long, value_name = "FILE")]
    pub queries: PathBuf,
    #[arg(long)]
    pub nprobe: Option<usize>,
    /// Neighbours per query [default: config index.k].
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long, default_value_t = 3)]
    pub runs: usize,
}

#[derive(Debug, Args)]
pub struct InspectArgs {
    pub file: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum ConfigCommand {
    /// Write the full default config.
    Init {
        /// Destination [default: stdout].
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
        /// Overwrite an existing file.
        #[arg(long)]
        force: bool,
    },
}

/// Parses `std::env::args`, runs, and maps errors to exit codes.
pub fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) | Err(CliError::Closed) => ExitCode::from(exit::OK),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

pub fn run(cli: Cli) -> CliResult {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Usage("--threads must be at least 1".into()));
        }
        // Fails only if a pool already exists (e.g. a second call in-process).
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let config = match &cli.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    match cli.command {
        Command::Fingerprint(a) => fingerprint(&config, a),
        Command::TrainPca(a) => {
            let corpus = Corpus::from_entries(&load_manifest(&a.corpus)?)?;
            let model = train_pca(&corpus, &config)?;
            model.save(&a.out)?;
            say(format!(
                "trained on {} vectors from {} clips -> {}",
                model.trained_on(),
                corpus.len(),
                a.out.display()
            ))?;
            Ok(())
        }
        Command::BuildDb(a) => build_db(&config, a),
        Command::BuildIndex(a) => build_index_cmd(&config, a),
        Command::Degrade(a) => {
            let noise = Noise::parse(&a.noise, a.param.as_deref())?;
            let audio = load_wav(&a.input)?;
            let spec = NoiseSpec::new(noise, a.seed);
            let out = apply_noise_with_tool(&audio, &spec, Path::new(&config.transcoder))?;
            save_wav(&a.output, &out)?;
            Ok(())
        }
        Command::Query(a) => query(&config, a),
        Command::Eval(EvalCommand::Run { spec, out }) => {
            let spec = ExperimentSpec::load(&spec)?;
            let ws = if cli.config.is_some() {
                spec.validate()?;
                let corpus = spec.corpus.load()?;
                Workspace::with_corpus(spec, config, corpus)?
            } else {
                Workspace::prepare(spec)?
            };
            for p in ws.run_all(&out)? {
                say(p.display())?;
            }
            Ok(())
        }
        Command::Bench(a) => bench(&config, a),
        Command::Inspect(a) => inspect(&a.file),
        Command::Config(ConfigCommand::Init { out, force }) => match out {
            None => {
                say(config.to_json())?;
                Ok(())
            }
            Some(p) if p.exists() && !force => Err(CliError::Usage(format!(
                "{} exists; pass --force to overwrite",
                p.display()
            ))),
            Some(p) => Ok(config.save(&p)?),
        },
    }
}

fn extractor(config: &Config, kind: FingerprintKind, pca: Option<&Path>) -> CliResult<Extractor> {
    config.validate()?;
    Ok(match kind {
        FingerprintKind::Proposed => {
            let model = PcaModel::load(pca.ok_or(CliError::MissingModel)?)?;
            Extractor::proposed(config.pipeline, model)?
        }
        FingerprintKind::MinHash => Extractor::minhash(config.pipeline, config.minhash_params()?)?,
    })
}

fn output(path: Option<&Path>) -> CliResult<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).map_err(|e| io_error(p, e))?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn io_error(path: &Path, source: io::Error) -> CliError {
    if source.kind() == io::ErrorKind::BrokenPipe {
        return CliError::Closed;
    }
    CliError::Lib(Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

#[derive(Serialize)]
struct FingerprintLine<'a> {
    timestamp: f64,
    kind: &'a str,
    /// f32 components, or lowercase hex for signatures.
    value: serde_json::Value,
}

fn fingerprint(config: &Config, a: FingerprintArgs) -> CliResult {
    let ex = extractor(config, a.kind, a.pca.as_deref())?;
    let fps = ex.fingerprint(&load_wav(&a.input)?)?;
    let mut w = output(a.out.as_deref())?;
    for f in &fps {
        let value = match &f.value {
            Fingerprint::Proposed(e) => serde_json::json!(e.widen().to_vec()),
            Fingerprint::MinHash(s) => {
                serde_json::json!(s.0.iter().map(|b| format!("{b:02x}")).collect::<String>())
            }
        };
        let line = FingerprintLine {
            timestamp: f.timestamp,
            kind: a.kind.name(),
            value,
        };
        write_line(&mut w, &line, a.out.as_deref())?;
    }
    w.flush().map_err(|e| io_error(a.out.as_deref().unwrap_or(Path::new("<stdout>")), e))
}

/// `println!` that reports a closed stdout instead of panicking.
fn say(text: impl std::fmt::Display) -> CliResult {
    writeln!(io::stdout().lock(), "{text}").map_err(|e| io_error(Path::new("<stdout>"), e))
}

fn write_line<T: Serialize>(w: &mut dyn Write, v: &T, path: Option<&Path>) -> CliResult {
    let text = serde_json::to_string(v).map_err(Error::from)?;
    writeln!(w, "{text}").map_err(|e| io_error(path.unwrap_or(Path::new("<stdout>")), e))
}

fn build_db(config: &Config, a: BuildDbArgs) -> CliResult {
    let ex = extractor(config, a.kind, a.pca.as_deref())?;
    let entries = load_manifest(&a.corpus)?;
    let (db, report) = ReferenceDB::build(&entries, &ex, a.skip)?;
    for (id, reason) in &report.failures {
        eprintln!("warning: skipped {id}: {reason}");
    }
    if db.is_empty() {
        return Err(Error::EmptyDatabase.into());
    }
    db.save(&a.out)?;
    say(format!(
        "{} DB: {} contents, {} fingerprints (skip {}) -> {}",
        db.kind(),
        db.contents().len(),
        db.len(),
        db.skip(),
        a.out.display()
    ))?;
    Ok(())
}

fn build_index_cmd(config: &Config, a: BuildIndexArgs) -> CliResult {
    let db = Arc::new(ReferenceDB::load(&a.db)?);
    let ty = a.index_type.unwrap_or(match db.kind() {
        FingerprintKind::Proposed => IndexType::Ivf,
        FingerprintKind::MinHash => IndexType::Flat,
    });
    let mut settings = config.index;
    settings.nlist = a.nlist.or(settings.nlist);
    settings.nprobe = a.nprobe.or(settings.nprobe);
    settings.seed = a.seed.unwrap_or(settings.seed);
    let start = std::time::Instant::now();
    let index = build_index(db, ty, &settings)?;
    index.save(&a.out)?;
    say(format!(
        "{} over {} fingerprints in {:.2}s -> {}",
        index.describe(),
        index.db().len(),
        start.elapsed().as_secs_f64(),
        a.out.display()
    ))?;
    Ok(())
}

fn load_index(db: Arc<ReferenceDB>, path: Option<&Path>, nprobe: Option<usize>) -> CliResult<Index> {
    let mut index = match path {
        Some(p) => Index::load(p, db)?,
        None => Index::flat(db),
    };
    if let Some(n) = nprobe {
        match &mut index {
            Index::Ivf(ivf) => ivf.set_nprobe(n)?,
            Index::Flat(_) => return Err(CliError::Usage("--nprobe needs an IVF index".into())),
        }
    }
    Ok(index)
}

fn query(config: &Config, a: QueryArgs) -> CliResult {
    config.validate()?;
    let db = Arc::new(ReferenceDB::load(&a.db)?);
    let index = load_index(db.clone(), a.index.as_deref(), a.nprobe)?;
    let fps = db.extractor().fingerprint(&load_wav(&a.audio)?)?;
    let segments = segment_stream(&fps, a.seg_len, a.hop.unwrap_or(a.seg_len), None)?;
    let mut w = output(None)?;
    for seg in segments.iter().filter(|s| s.fingerprints.len() >= 2) {
        let r = match_segment(seg, &index, &config.matching)?;
        write_line(&mut w, &r, None)?;
    }
    w.flush().map_err(|e| io_error(Path::new("<stdout>"), e))
}

fn bench(config: &Config, a: BenchArgs) -> CliResult {
    let db = Arc::new(ReferenceDB::load(&a.db)?);
    let index = load_index(db, a.index.as_deref(), a.nprobe)?;
    let qdb = ReferenceDB::load(&a.queries)?;
    let queries: Vec<Fingerprint> = (0..qdb.len()).map(|g| qdb.fingerprint(g)).collect();
    let report = bench_fps(&index, &queries, a.k.unwrap_or(config.index.k), a.runs)?;
    say(serde_json::to_string_pretty(&report).map_err(Error::from)?)?;
    Ok(())
}

fn inspect(path: &Path) -> CliResult {
    let bytes = std::fs::read(path).map_err(|e| io_error(path, e))?;
    match bytes.get(..4) {
        Some(b"ACDB") => {
            let db = ReferenceDB::from_bytes(&bytes)?;
            say("format: ACDB")?;
            say(format!("kind: {}", db.kind()))?;
            say(format!("skip: {}", db.skip()))?;
            say(format!("contents: {}", db.contents().len()))?;
            say(format!("fingerprints: {}", db.len()))?;
            say(format!("spacing_s: {}", db.spacing()))?;
            say(format!("checksum: {:08x}", db.checksum()))?;
        }
        Some(b"ACIX") => {
            let h = Index::read_header(&bytes)?;
            say("format: ACIX")?;
            say(format!("type: {}", if h.index_type == IndexType::Ivf { "ivf" } else { "flat" }))?;
            say(format!("kind: {}", h.kind))?;
            say(format!("db_checksum: {:08x}", h.db_checksum))?;
            if h.index_type == IndexType::Ivf {
                say(format!("nlist: {}", h.nlist))?;
                say(format!("nprobe: {}", h.nprobe))?;
                say(format!("seed: {}", h.seed))?;
            }
        }
        Some(b"ACPC") => {
            let m = PcaModel::from_bytes(&bytes)?;
            let total: f32 = m.explained_variance().iter().sum();
            say("format: ACPC")?;
            say(format!("in_dims: {}", m.in_dims()))?;
            say(format!("out_dims: {}", m.out_dims()))?;
            say(format!("trained_on: {}", m.trained_on()))?;
            say(format!("rank: {}", m.rank()))?;
            say(format!("explained_variance_sum: {total:.4}"))?;
        }
        _ => {
            return Err(CliError::Lib(Error::Malformed(format!(
                "{}: not an ACDB, ACIX or ACPC file",
                path.display()
            ))))
        }
    }
    Ok(())
}
