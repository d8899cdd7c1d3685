//! Desk-scale experiments: accuracy under artificial noise, accuracy
//! against skip rate, pairwise-distance matrices and retrieval speed.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{Config, IndexSettings};
use crate::corpus::Corpus;
use crate::degrade::{apply_noise_with_tool, Noise, NoiseSpec, Shift};
use crate::error::{Error, Result};
use crate::fingerprint::{Embedding, Fingerprint, FingerprintKind, Signature, Timed, SIGNATURE_LEN};
use crate::index::{bench_fps, Index, IndexType};
use crate::matcher::{match_segment, segment_stream, MatchConfig, QuerySegment, ARTIFICIAL_SEGMENT_SECONDS, DEFAULT_SEGMENT_SECONDS};
use crate::pipeline::Extractor;
use crate::proposed::pca::{pca_fit, PcaModel};
use crate::proposed::pre_fingerprints;
use crate::refdb::{load_manifest, ReferenceDB};

pub const VERSION: &str = concat!("v", env!("CARGO_PKG_VERSION"));
/// Lags summarised from each distance matrix.
pub const LAGS: [usize; 3] = [1, 8, 32];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum CorpusSource {
    /// JSON manifest of `{id, path}` entries.
    Manifest(PathBuf),
    /// Seeded synthetic music clips.
    Synthetic { clips: usize, seconds: f64, seed: u64 },
}

impl CorpusSource {
    pub fn load(&self) -> Result<Corpus> {
        match self {
            CorpusSource::Manifest(p) => Corpus::from_entries(&load_manifest(p)?),
            CorpusSource::Synthetic { clips, seconds, seed } => {
                if *clips == 0 || !(*seconds > 0.0) {
                    return Err(Error::Config("synthetic corpus needs clips > 0 and seconds > 0".into()));
                }
                Ok(Corpus::synthetic(*clips, *seconds, *seed))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    Noise,
    Skip,
    Distance,
    Speed,
}

/// Skip and index type used for one kind in the noise experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TableSetup {
    pub skip: usize,
    pub index: IndexType,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpeedSetup {
    pub db_size: usize,
    pub queries: usize,
    pub runs: usize,
    /// Also time exhaustive L2 over the full proposed DB.
    pub exhaustive_control: bool,
}

impl Default for SpeedSetup {
    fn default() -> Self {
        Self {
            db_size: 1_000_000,
            queries: 2000,
            runs: 3,
            exhaustive_control: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentSpec {
    pub corpus: CorpusSource,
    pub experiments: Vec<Experiment>,
    pub kinds: Vec<FingerprintKind>,
    pub noises: Vec<Noise>,
    pub skips: Vec<usize>,
    pub skip_noise: Noise,
    pub proposed: TableSetup,
    pub minhash: TableSetup,
    /// Segments evaluated per clip and cell; 0 keeps every segment.
    pub segments_per_clip: usize,
    pub noise_segment_seconds: f64,
    pub skip_segment_seconds: f64,
    pub distance_clips: usize,
    pub speed: SpeedSetup,
    /// Existing PCA model; trained on the corpus when absent.
    pub pca_model: Option<PathBuf>,
    /// Config file; defaults when absent.
    pub config: Option<PathBuf>,
    pub seed: u64,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        let mut noises = vec![Noise::Clean];
        noises.extend(Noise::suite());
        Self {
            corpus: CorpusSource::Synthetic {
                clips: 200,
                seconds: 30.0,
                seed: 1,
            },
            experiments: vec![Experiment::Noise, Experiment::Skip, Experiment::Distance, Experiment::Speed],
            kinds: vec![FingerprintKind::Proposed, FingerprintKind::MinHash],
            noises,
            skips: vec![0, 1, 3, 5, 7],
            skip_noise: Noise::Composite {
                percent: 5.0,
                sigma: 0.01,
                shift: Shift::Samples(45),
            },
            proposed: TableSetup {
                skip: 5,
                index: IndexType::Ivf,
            },
            minhash: TableSetup {
                skip: 0,
                index: IndexType::Flat,
            },
            segments_per_clip: 8,
            noise_segment_seconds: ARTIFICIAL_SEGMENT_SECONDS,
            skip_segment_seconds: DEFAULT_SEGMENT_SECONDS,
            distance_clips: 10,
            speed: SpeedSetup::default(),
            pca_model: None,
            config: None,
            seed: 1,
        }
    }
}

impl ExperimentSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("experiment spec: {e}")))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut spec = Self::from_json(&text)?;
        // Relative paths resolve against the spec file's directory.
        let base = path.parent().unwrap_or(Path::new("."));
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let CorpusSource::Manifest(p) = &mut spec.corpus {
            fix(p);
        }
        spec.pca_model.as_mut().map(fix);
        spec.config.as_mut().map(fix);
        Ok(spec)
    }

    /// Checks parameters and that every referenced file exists.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        for p in [
            match &self.corpus {
                CorpusSource::Manifest(p) => Some(p),
                _ => None,
            },
            self.pca_model.as_ref(),
            self.config.as_ref(),
        ]
        .into_iter()
        .flatten()
        {
            if !p.exists() {
                return Err(Error::Config(format!("{} does not exist", p.display())));
            }
        }
        if self.kinds.is_empty() {
            return bad("kinds is empty");
        }
        if self.minhash.index == IndexType::Ivf {
            return bad("min-hash supports only the flat index");
        }
        for n in self.noises.iter().chain([&self.skip_noise]) {
            n.validate()?;
        }
        if !(self.noise_segment_seconds > 0.0 && self.skip_segment_seconds > 0.0) {
            return bad("segment lengths must be positive");
        }
        if self.experiments.contains(&Experiment::Speed) && self.speed.queries < 1000 {
            return bad("speed.queries must be at least 1000");
        }
        Ok(())
    }

    pub fn setup(&self, kind: FingerprintKind) -> TableSetup {
        match kind {
            FingerprintKind::Proposed => self.proposed,
            FingerprintKind::MinHash => self.minhash,
        }
    }

    pub fn load_config(&self) -> Result<Config> {
        match &self.config {
            Some(p) => Config::load(p),
            None => Ok(Config::default()),
        }
    }

    /// Hash of spec and config together, for tagging report rows.
    pub fn hash(&self, config: &Config) -> u32 {
        let mut h = crc32fast::Hasher::new();
        h.update(serde_json::to_string(self).expect("spec serializes").as_bytes());
        h.update(&config.hash().to_le_bytes());
        h.finalize()
    }
}

/// Trains the projection on every pre-fingerprint of `corpus`.
pub fn train_pca(corpus: &Corpus, config: &Config) -> Result<PcaModel> {
    let rows: Vec<Vec<f32>> = corpus
        .items
        .par_iter()
        .map(|(_, a)| {
            Ok(pre_fingerprints(a, &config.pipeline)?
                .into_iter()
                .flat_map(|t| t.value.widen())
                .collect::<Vec<f32>>())
        })
        .collect::<Result<_>>()?;
    let dims = 2 * config.pipeline.mel_bands - 1;
    pca_fit(&rows.concat(), dims, config.pca.dims, config.pca.max_samples, config.pca.seed)
}

/// Builds an index over `db` following `settings`.
pub fn build_index(db: Arc<ReferenceDB>, ty: IndexType, settings: &IndexSettings) -> Result<Index> {
    match ty {
        IndexType::Flat => Ok(Index::flat(db)),
        IndexType::Ivf => {
            let mut index = Index::ivf(db, settings.nlist, settings.seed)?;
            if let (Index::Ivf(ivf), Some(p)) = (&mut index, settings.nprobe) {
                ivf.set_nprobe(p.min(ivf.nlist()))?;
            }
            Ok(index)
        }
    }
}

/// Dense (skip 0) fingerprints of every reference clip for one extractor;
/// DBs at any skip are derived from these.
pub struct DenseSet {
    pub extractor: Extractor,
    pub sequences: Vec<(String, Vec<Timed<Fingerprint>>)>,
}

impl DenseSet {
    pub fn compute(corpus: &Corpus, extractor: &Extractor) -> Result<Self> {
        let sequences = corpus
            .items
            .par_iter()
            .map(|(id, a)| Ok((id.clone(), extractor.fingerprint(a)?)))
            .collect::<Result<_>>()?;
        Ok(Self {
            extractor: extractor.clone(),
            sequences,
        })
    }

    pub fn db(&self, skip: usize) -> Result<Arc<ReferenceDB>> {
        Ok(Arc::new(ReferenceDB::from_dense(
            self.extractor.clone(),
            skip,
            self.sequences.clone(),
        )?))
    }

    pub fn total(&self) -> usize {
        self.sequences.iter().map(|s| s.1.len()).sum()
    }
}

/// Picks `n` evenly spread items (all when `n` is 0 or too large).
fn spread<T>(v: Vec<T>, n: usize) -> Vec<T> {
    let len = v.len();
    if n == 0 || n >= len {
        return v;
    }
    let keep: Vec<usize> = (0..n).map(|j| (2 * j + 1) * len / (2 * n)).collect();
    v.into_iter()
        .enumerate()
        .filter(|(i, _)| keep.contains(i))
        .map(|(_, x)| x)
        .collect()
}

fn clip_seed(seed: u64, clip: usize, salt: u64) -> u64 {
    seed ^ (clip as u64 + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ salt.rotate_left(32)
}

/// Degrades each clip with `noise`, fingerprints it and cuts non-overlapping
/// `seg_len` segments, keeping `per_clip` of them with ground truth set.
pub fn noisy_queries(
    corpus: &Corpus,
    extractor: &Extractor,
    noise: Noise,
    seg_len: f64,
    per_clip: usize,
    seed: u64,
    transcoder: &Path,
) -> Result<Vec<QuerySegment>> {
    let salt = crc32fast::hash(noise.label().as_bytes()) as u64;
    let per: Vec<Vec<QuerySegment>> = corpus
        .items
        .par_iter()
        .enumerate()
        .map(|(i, (id, audio))| {
            let spec = NoiseSpec::new(noise, clip_seed(seed, i, salt));
            let degraded = apply_noise_with_tool(audio, &spec, transcoder)?;
            let fps = extractor.fingerprint(&degraded)?;
            let segs = segment_stream(&fps, seg_len, seg_len, Some(id))?;
            let segs: Vec<QuerySegment> = segs.into_iter().filter(|s| s.fingerprints.len() >= 2).collect();
            Ok(spread(segs, per_clip))
        })
        .collect::<Result<_>>()?;
    Ok(per.into_iter().flatten().collect())
}

/// Per-cell tallies. For a segment without ground truth, no match counts
/// as correct and a match as incorrect.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Outcome {
    pub correct: usize,
    pub incorrect: usize,
    pub no_match: usize,
    /// Matched content per segment, in input order.
    #[serde(skip)]
    pub decisions: Vec<Option<String>>,
}

impl Outcome {
    pub fn n(&self) -> usize {
        self.correct + self.incorrect + self.no_match
    }

    pub fn accuracy(&self) -> f64 {
        pct(self.correct, self.n())
    }

    pub fn false_positive(&self) -> f64 {
        pct(self.incorrect, self.n())
    }
}

fn pct(a: usize, n: usize) -> f64 {
    if n == 0 {
        0.0
    } else {
        100.0 * a as f64 / n as f64
    }
}

pub fn evaluate(index: &Index, segments: &[QuerySegment], cfg: &MatchConfig) -> Result<Outcome> {
    let results = segments
        .par_iter()
        .map(|s| match_segment(s, index, cfg))
        .collect::<Result<Vec<_>>>()?;
    let mut out = Outcome::default();
    for (seg, r) in segments.iter().zip(&results) {
        let got = r.matched_id().map(str::to_string);
        match (&seg.ground_truth, &got) {
            (_, None) if seg.ground_truth.is_some() => out.no_match += 1,
            (None, None) => out.correct += 1,
            (Some(t), Some(g)) if t == g => out.correct += 1,
            _ => out.incorrect += 1,
        }
        out.decisions.push(got);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AccuracyRow {
    pub experiment: String,
    pub kind: FingerprintKind,
    /// Noise label or `skip_<k>`.
    pub setting: String,
    pub skip: usize,
    pub index: String,
    pub status: String,
    pub accuracy: f64,
    pub false_positive: f64,
    pub n_segments: usize,
    pub correct: usize,
    pub incorrect: usize,
    pub no_match: usize,
    pub seed: u64,
    pub config_hash: String,
    pub version: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct AccuracyReport {
    pub rows: Vec<AccuracyRow>,
}

impl AccuracyReport {
    pub fn row(&self, kind: FingerprintKind, setting: &str) -> Option<&AccuracyRow> {
        self.rows.iter().find(|r| r.kind == kind && r.setting == setting)
    }
}

/// Everything shared by the experiments: corpus, config, extractors and
/// dense fingerprints.
pub struct Workspace {
    pub spec: ExperimentSpec,
    pub config: Config,
    pub corpus: Corpus,
    pub dense: Vec<DenseSet>,
    pub config_hash: u32,
}

impl Workspace {
    pub fn prepare(spec: ExperimentSpec) -> Result<Self> {
        spec.validate()?;
        let config = spec.load_config()?;
        config.validate()?;
        let corpus = spec.corpus.load()?;
        Self::with_corpus(spec, config, corpus)
    }

    /// As [`Workspace::prepare`] but with an already loaded corpus.
    pub fn with_corpus(spec: ExperimentSpec, config: Config, corpus: Corpus) -> Result<Self> {
        if corpus.is_empty() {
            return Err(Error::EmptyDatabase);
        }
        let mut dense = Vec::new();
        for &kind in &spec.kinds {
            let extractor = match kind {
                FingerprintKind::Proposed => {
                    let model = match &spec.pca_model {
                        Some(p) => PcaModel::load(p)?,
                        None => train_pca(&corpus, &config)?,
                    };
                    Extractor::proposed(config.pipeline, model)?
                }
                FingerprintKind::MinHash => Extractor::minhash(config.pipeline, config.minhash_params()?)?,
            };
            dense.push(DenseSet::compute(&corpus, &extractor)?);
        }
        let config_hash = spec.hash(&config);
        Ok(Self {
            spec,
            config,
            corpus,
            dense,
            config_hash,
        })
    }

    pub fn dense(&self, kind: FingerprintKind) -> Result<&DenseSet> {
        self.dense
            .iter()
            .find(|d| d.extractor.kind() == kind)
            .ok_or_else(|| Error::Config(format!("kind {kind} not in the experiment")))
    }

    /// Index at the kind's table skip and index type.
    pub fn table_index(&self, kind: FingerprintKind) -> Result<Index> {
        let setup = self.spec.setup(kind);
        build_index(self.dense(kind)?.db(setup.skip)?, setup.index, &self.config.index)
    }

    fn row(&self, experiment: &str, kind: FingerprintKind, setting: String, skip: usize, index: &str, o: Option<&Outcome>) -> AccuracyRow {
        let o = o.cloned().unwrap_or_default();
        AccuracyRow {
            experiment: experiment.into(),
            kind,
            setting,
            skip,
            index: index.into(),
            status: if o.n() > 0 { "ok".into() } else { "skipped".into() },
            accuracy: o.accuracy(),
            false_positive: o.false_positive(),
            n_segments: o.n(),
            correct: o.correct,
            incorrect: o.incorrect,
            no_match: o.no_match,
            seed: self.spec.seed,
            config_hash: format!("{:08x}", self.config_hash),
            version: VERSION.into(),
        }
    }

    /// Queries for one noise setting, built with the kind's extractor.
    pub fn queries(&self, kind: FingerprintKind, noise: Noise, seg_len: f64) -> Result<Vec<QuerySegment>> {
        noisy_queries(
            &self.corpus,
            &self.dense(kind)?.extractor,
            noise,
            seg_len,
            self.spec.segments_per_clip,
            self.spec.seed,
            Path::new(&self.config.transcoder),
        )
    }

    /// Accuracy per (noise, kind) at each kind's table setup. A missing
    /// transcoder marks the cell skipped.
    pub fn run_noise_experiment(&self) -> Result<AccuracyReport> {
        let mut report = AccuracyReport::default();
        for &kind in &self.spec.kinds {
            let setup = self.spec.setup(kind);
            let index = self.table_index(kind)?;
            let desc = index.describe();
            for &noise in &self.spec.noises {
                let outcome = match self.queries(kind, noise, self.spec.noise_segment_seconds) {
                    Ok(q) => Some(evaluate(&index, &q, &self.config.matching)?),
                    Err(Error::ToolUnavailable { .. }) => None,
                    Err(e) => return Err(e),
                };
                report
                    .rows
                    .push(self.row("noise", kind, noise.label(), setup.skip, &desc, outcome.as_ref()));
            }
        }
        Ok(report)
    }

    /// Accuracy against skip with exhaustive indexes and lightly degraded
    /// queries.
    pub fn run_skip_experiment(&self) -> Result<AccuracyReport> {
        let mut report = AccuracyReport::default();
        for &kind in &self.spec.kinds {
            let dense = self.dense(kind)?;
            let queries = self.queries(kind, self.spec.skip_noise, self.spec.skip_segment_seconds)?;
            for &skip in &self.spec.skips {
                let index = Index::flat(dense.db(skip)?);
                let o = evaluate(&index, &queries, &self.config.matching)?;
                report
                    .rows
                    .push(self.row("skip", kind, format!("skip_{skip}"), skip, &index.describe(), Some(&o)));
            }
        }
        Ok(report)
    }

    /// Distance summaries for the first `distance_clips` clips and kinds.
    pub fn run_distance_experiment(&self) -> Result<Vec<DistanceSummary>> {
        let mut out = Vec::new();
        for &kind in &self.spec.kinds {
            let dense = self.dense(kind)?;
            for (id, fps) in dense.sequences.iter().take(self.spec.distance_clips) {
                let m = DistanceMatrix::compute(fps)?;
                out.push(DistanceSummary {
                    content_id: id.clone(),
                    kind,
                    size: m.size,
                    lag_means: LAGS.map(|l| m.lag_mean(l)),
                    monotone: m.is_monotone(&LAGS),
                });
            }
        }
        Ok(out)
    }

    /// Throughput of min-hash exhaustive against proposed IVF on
    /// `speed.db_size`-fingerprint DBs, plus build time and file size.
    pub fn run_speed_experiment(&self) -> Result<Vec<SpeedRow>> {
        let s = self.spec.speed;
        let mut rows = Vec::new();
        let k = self.config.index.k;
        for &kind in &self.spec.kinds {
            let dense = self.dense(kind)?;
            let setup = self.spec.setup(kind);
            let (db, queries) = speed_db(dense, s.db_size, s.queries, setup.skip, self.spec.seed)?;
            let start = Instant::now();
            let index = build_index(db.clone(), setup.index, &self.config.index)?;
            let build_secs = start.elapsed().as_secs_f64();
            let bytes = index.to_bytes().len();
            let b = bench_fps(&index, &queries, k, s.runs)?;
            rows.push(SpeedRow::new(kind, &b, build_secs, bytes));
            if kind == FingerprintKind::Proposed && s.exhaustive_control && setup.index == IndexType::Ivf {
                let flat = Index::flat(db);
                let b = bench_fps(&flat, &queries, k, s.runs)?;
                rows.push(SpeedRow::new(kind, &b, 0.0, flat.to_bytes().len()));
            }
        }
        Ok(rows)
    }

    /// Runs the requested experiments and writes CSVs plus `summary.txt`
    /// under `out`.
    pub fn run_all(&self, out: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
        let mut written = Vec::new();
        let mut summary = format!(
            "version {VERSION}\nseed {}\nconfig_hash {:08x}\nclips {}\n",
            self.spec.seed,
            self.config_hash,
            self.corpus.len()
        );
        for exp in &self.spec.experiments {
            match exp {
                Experiment::Noise | Experiment::Skip => {
                    let (name, r) = if *exp == Experiment::Noise {
                        ("noise", self.run_noise_experiment()?)
                    } else {
                        ("skip", self.run_skip_experiment()?)
                    };
                    let p = out.join(format!("{name}.csv"));
                    write_csv(&p, &r.rows)?;
                    summary.push_str(&format!("\n[{name}]\n"));
                    for row in &r.rows {
                        summary.push_str(&format!(
                            "{:<9} {:<32} {:>7.2}% fp {:>5.2}% n={} {}\n",
                            row.kind.name(),
                            row.setting,
                            row.accuracy,
                            row.false_positive,
                            row.n_segments,
                            row.status
                        ));
                    }
                    written.push(p);
                }
                Experiment::Distance => {
                    let rows = self.run_distance_experiment()?;
                    let flat: Vec<DistanceCsvRow> = rows.iter().map(DistanceCsvRow::from).collect();
                    let p = out.join("distance.csv");
                    write_csv(&p, &flat)?;
                    written.push(p);
                    summary.push_str("\n[distance]\n");
                    for kind in &self.spec.kinds {
                        let mine: Vec<&DistanceSummary> = rows.iter().filter(|r| r.kind == *kind).collect();
                        let lag1 = mine.iter().map(|r| r.lag_means[0]).sum::<f64>() / mine.len().max(1) as f64;
                        let mono = mine.iter().filter(|r| r.monotone).count();
                        summary.push_str(&format!(
                            "{:<9} mean lag-1 {:.4}, monotone on {mono}/{}\n",
                            kind.name(),
                            lag1,
                            mine.len()
                        ));
                    }
                    // One full matrix per kind for plotting.
                    for d in &self.dense {
                        if let Some((id, fps)) = d.sequences.first() {
                            let p = out.join(format!("matrix_{}_{}.csv", d.extractor.kind().name(), id));
                            DistanceMatrix::compute(fps)?.write_csv(&p)?;
                            written.push(p);
                        }
                    }
                }
                Experiment::Speed => {
                    let rows = self.run_speed_experiment()?;
                    let p = out.join("speed.csv");
                    write_csv(&p, &rows)?;
                    written.push(p);
                    summary.push_str("\n[speed]\n");
                    for r in &rows {
                        summary.push_str(&format!(
                            "{:<9} {:<28} db={} {:>12.0} fps build {:.1}s size {} B\n",
                            r.kind.name(),
                            r.index,
                            r.db_size,
                            r.fps,
                            r.build_secs,
                            r.index_bytes
                        ));
                    }
                }
            }
        }
        let p = out.join("summary.txt");
        std::fs::write(&p, summary).map_err(|e| Error::io(&p, e))?;
        written.push(p);
        Ok(written)
    }
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    Error::io(path, std::io::Error::other(e.to_string()))
}

/// Min-max normalized pairwise distances of one fingerprint sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    pub size: usize,
    /// Row-major `size × size`.
    pub values: Vec<f64>,
}

/// Fewest fingerprints a distance matrix accepts.
pub const MIN_MATRIX_FINGERPRINTS: usize = 64;

impl DistanceMatrix {
    pub fn compute(fps: &[Timed<Fingerprint>]) -> Result<Self> {
        let n = fps.len();
        if n < MIN_MATRIX_FINGERPRINTS {
            return Err(Error::AudioTooShort {
                len: n,
                need: MIN_MATRIX_FINGERPRINTS,
            });
        }
        let rows: Vec<Vec<f64>> = (0..n)
            .into_par_iter()
            .map(|i| {
                (0..n)
                    .map(|j| {
                        if j < i {
                            0.0
                        } else {
                            fps[i].value.distance(&fps[j].value).map(|d| d as f64).unwrap_or(f64::NAN)
                        }
                    })
                    .collect()
            })
            .collect();
        let mut values = vec![0.0; n * n];
        for i in 0..n {
            for j in i..n {
                values[i * n + j] = rows[i][j];
                values[j * n + i] = rows[i][j];
            }
        }
        if values.iter().any(|v| v.is_nan()) {
            return Err(Error::InvalidParameter("mixed fingerprint kinds".into()));
        }
        let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let span = hi - lo;
        if span > 0.0 {
            values.iter_mut().for_each(|v| *v = (*v - lo) / span);
        } else {
            values.iter_mut().for_each(|v| *v = 0.0);
        }
        Ok(Self { size: n, values })
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.size + j]
    }

    /// Mean over all pairs with `|i − j| == lag`.
    pub fn lag_mean(&self, lag: usize) -> f64 {
        if lag >= self.size {
            return f64::NAN;
        }
        let n = self.size - lag;
        (0..n).map(|i| self.get(i, i + lag)).sum::<f64>() / n as f64
    }

    pub fn is_monotone(&self, lags: &[usize]) -> bool {
        let m: Vec<f64> = lags.iter().map(|&l| self.lag_mean(l)).collect();
        m.windows(2).all(|w| w[0] < w[1])
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
        w.write_record((0..self.size).map(|j| j.to_string()))
            .map_err(|e| csv_err(path, e))?;
        for i in 0..self.size {
            w.write_record((0..self.size).map(|j| format!("{:.6}", self.get(i, j))))
                .map_err(|e| csv_err(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DistanceSummary {
    pub content_id: String,
    pub kind: FingerprintKind,
    pub size: usize,
    pub lag_means: [f64; 3],
    pub monotone: bool,
}

#[derive(Serialize)]
struct DistanceCsvRow {
    content_id: String,
    kind: FingerprintKind,
    size: usize,
    lag_1: f64,
    lag_8: f64,
    lag_32: f64,
    monotone: bool,
}

impl From<&DistanceSummary> for DistanceCsvRow {
    fn from(s: &DistanceSummary) -> Self {
        Self {
            content_id: s.content_id.clone(),
            kind: s.kind,
            size: s.size,
            lag_1: s.lag_means[0],
            lag_8: s.lag_means[1],
            lag_32: s.lag_means[2],
            monotone: s.monotone,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpeedRow {
    pub kind: FingerprintKind,
    pub index: String,
    pub db_size: usize,
    pub queries: usize,
    pub threads: usize,
    pub fps: f64,
    pub build_secs: f64,
    pub index_bytes: usize,
    pub version: String,
}

impl SpeedRow {
    fn new(kind: FingerprintKind, b: &crate::index::BenchReport, build_secs: f64, index_bytes: usize) -> Self {
        Self {
            kind,
            index: b.index.clone(),
            db_size: b.db_size,
            queries: b.queries,
            threads: b.threads,
            fps: b.fps,
            build_secs,
            index_bytes,
            version: VERSION.into(),
        }
    }
}

/// A `size`-fingerprint DB for timing, grown from the real dense
/// fingerprints: embeddings are jittered copies (so the cluster structure
/// stays realistic), signatures are copies with random bytes replaced.
/// Queries are jittered DB members.
pub fn speed_db(
    dense: &DenseSet,
    size: usize,
    queries: usize,
    skip: usize,
    seed: u64,
) -> Result<(Arc<ReferenceDB>, Vec<Fingerprint>)> {
    let base: Vec<Fingerprint> = dense.sequences.iter().flat_map(|s| s.1.iter().map(|t| t.value)).collect();
    if base.is_empty() || size == 0 {
        return Err(Error::EmptyDatabase);
    }
    const PER_CONTENT: usize = 10_000;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5bee_d000);
    let jitter = Normal::new(0.0f32, 0.05).unwrap();
    let perturb = |f: &Fingerprint, rng: &mut ChaCha8Rng| -> Fingerprint {
        match f {
            Fingerprint::Proposed(e) => {
                let v: Vec<f32> = e.widen().iter().map(|x| x + jitter.sample(rng)).collect();
                Fingerprint::Proposed(Embedding::from_f32(&v).expect("finite jittered embedding"))
            }
            Fingerprint::MinHash(s) => {
                let mut b = s.0;
                for _ in 0..8 {
                    b[rng.random_range(0..SIGNATURE_LEN)] = rng.random();
                }
                Fingerprint::MinHash(Signature(b))
            }
        }
    };
    let all: Vec<Fingerprint> = (0..size).map(|i| perturb(&base[i % base.len()], &mut rng)).collect();
    let q: Vec<Fingerprint> = (0..queries)
        .map(|_| {
            let i = rng.random_range(0..size);
            perturb(&all[i], &mut rng)
        })
        .collect();
    let spacing = dense.extractor.config().fingerprint_spacing();
    let seqs: Vec<(String, Vec<Timed<Fingerprint>>)> = all
        .chunks(PER_CONTENT)
        .enumerate()
        .map(|(c, chunk)| {
            let seq = chunk
                .iter()
                .enumerate()
                .map(|(i, &value)| Timed {
                    timestamp: i as f64 * spacing * (skip + 1) as f64,
                    value,
                })
                .collect();
            (format!("speed{c:05}"), seq)
        })
        .collect();
    // Chunks are already the retained set, so they are stored at skip 0.
    Ok((Arc::new(ReferenceDB::from_dense(dense.extractor.clone(), 0, seqs)?), q))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fps(values: &[f32]) -> Vec<Timed<Fingerprint>> {
        values
            .iter()
            .enumerate()
            .map(|(i, &x)| Timed {
                timestamp: i as f64 * 0.128,
                value: Fingerprint::Proposed(Embedding::from_f32(&[x; 32]).unwrap()),
            })
            .collect()
    }

    #[test]
    fn matrix_is_symmetric_normalized_with_zero_diagonal() {
        let v: Vec<f32> = (0..80).map(|i| (i as f32 * 0.05).sin() + i as f32 * 0.01).collect();
        let m = DistanceMatrix::compute(&fps(&v)).unwrap();
        for i in 0..m.size {
            assert_eq!(m.get(i, i), 0.0);
            for j in 0..m.size {
                assert_eq!(m.get(i, j), m.get(j, i));
                assert!((0.0..=1.0).contains(&m.get(i, j)));
            }
        }
        assert!(m.values.contains(&1.0));
    }

    #[test]
    fn drifting_sequence_has_monotone_lags() {
        let v: Vec<f32> = (0..100).map(|i| i as f32 * 0.1).collect();
        let m = DistanceMatrix::compute(&fps(&v)).unwrap();
        assert!(m.is_monotone(&LAGS));
        assert!(DistanceMatrix::compute(&fps(&v[..40])).is_err());
    }

    #[test]
    fn spread_picks_evenly() {
        assert_eq!(spread((0..10).collect(), 2), vec![2, 7]);
        assert_eq!(spread((0..3).collect(), 5), vec![0, 1, 2]);
        assert_eq!(spread((0..4).collect(), 0), vec![0, 1, 2, 3]);
    }

    #[test]
    fn outcome_accounting() {
        let o = Outcome {
            correct: 3,
            incorrect: 1,
            no_match: 0,
            decisions: vec![],
        };
        assert_eq!(o.n(), 4);
        assert_eq!(o.accuracy(), 75.0);
        assert_eq!(o.false_positive(), 25.0);
    }

    #[test]
    fn spec_defaults_and_unknown_keys() {
        let s = ExperimentSpec::default();
        assert_eq!(s.noises.len(), 30);
        let back = ExperimentSpec::from_json(&serde_json::to_string(&s).unwrap()).unwrap();
        assert_eq!(back, s);
        assert!(ExperimentSpec::from_json(r#"{"nope": 1}"#).is_err());
        let m = ExperimentSpec {
            corpus: CorpusSource::Manifest("/definitely/missing.json".into()),
            ..ExperimentSpec::default()
        };
        assert!(matches!(m.validate(), Err(Error::Config(_))));
    }
}
