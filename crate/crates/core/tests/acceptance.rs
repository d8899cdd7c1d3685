//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. Runs on a 200 × 30 s synthetic desk corpus plus a 1M-fingerprint
//! timing DB; expect several minutes in release mode.

use std::process::ExitCode;
use std::time::Instant;

use acfp::config::Config;
use acfp::corpus::{white_noise, Corpus};
use acfp::degrade::{apply_noise, Noise, NoiseSpec, Shift};
use acfp::error::{Error, Result};
use acfp::eval::{evaluate, CorpusSource, Experiment, ExperimentSpec, SpeedSetup, Workspace};
use acfp::fingerprint::{Fingerprint, FingerprintKind};
use acfp::index::{Index, IndexType};
use acfp::matcher::{segment_stream, MatchConfig};
use acfp::minhash::{haar2d, haar2d_inverse, minhash, BitVector, MinHashParams};
use acfp::pipeline::Extractor;
use acfp::proposed::standardize;
use acfp::refdb::sparse_len;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use FingerprintKind::{MinHash, Proposed};

const CLIPS: usize = 200;

type Check<'a> = Box<dyn Fn() -> Result<Outcome> + 'a>;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Result<Outcome> {
    Ok(Outcome { pass, detail: detail.into() })
}

fn spec() -> ExperimentSpec {
    ExperimentSpec {
        corpus: CorpusSource::Synthetic { clips: CLIPS, seconds: 30.0, seed: 1 },
        experiments: vec![Experiment::Skip, Experiment::Distance, Experiment::Speed],
        noises: vec![Noise::Clean],
        speed: SpeedSetup {
            db_size: 1_000_000,
            queries: 1000,
            runs: 1,
            exhaustive_control: false,
        },
        ..ExperimentSpec::default()
    }
}

fn accuracy(ws: &Workspace, index: &Index, kind: FingerprintKind, noise: Noise) -> Result<acfp::eval::Outcome> {
    let q = ws.queries(kind, noise, ws.spec.noise_segment_seconds)?;
    evaluate(index, &q, &ws.config.matching)
}

fn c1(ws: &Workspace, started: Instant) -> Result<Outcome> {
    let mut parts = Vec::new();
    let mut pass = ws.corpus.len() >= 200;
    for kind in [Proposed, MinHash] {
        let index = Index::flat(ws.dense(kind)?.db(0)?);
        let o = accuracy(ws, &index, kind, Noise::Clean)?;
        pass &= o.correct == o.n() && o.n() > 0;
        parts.push(format!("{kind} {:.2}% of {}", o.accuracy(), o.n()));
    }
    let secs = started.elapsed().as_secs_f64();
    pass &= secs < 600.0;
    outcome(pass, format!("{} clips; {}; {secs:.0} s", ws.corpus.len(), parts.join(", ")))
}

fn c2(ws: &Workspace) -> Result<Outcome> {
    let r = ws.run_skip_experiment()?;
    let acc = |k, s| r.row(k, s).map(|r| r.accuracy).unwrap_or(f64::NAN);
    let (p0, p7) = (acc(Proposed, "skip_0"), acc(Proposed, "skip_7"));
    let (m0, m7) = (acc(MinHash, "skip_0"), acc(MinHash, "skip_7"));
    outcome(
        (p0 - p7).abs() <= 3.0 && m0 - m7 >= 8.0,
        format!("{}: proposed {p0:.2} -> {p7:.2}, minhash {m0:.2} -> {m7:.2}", ws.spec.skip_noise.label()),
    )
}

fn c3(ws: &Workspace, tables: &[Index; 2]) -> Result<Outcome> {
    let mut pass = true;
    let mut parts = Vec::new();
    for samples in [45, 90] {
        let n = Noise::Shifted { samples };
        let p = accuracy(ws, &tables[0], Proposed, n)?.accuracy();
        let m = accuracy(ws, &tables[1], MinHash, n)?.accuracy();
        pass &= p >= 98.0 && p >= m;
        parts.push(format!("{}: proposed {p:.2} minhash {m:.2}", n.label()));
    }
    outcome(pass, parts.join("; "))
}

fn c4(ws: &Workspace, tables: &[Index; 2]) -> Result<Outcome> {
    let clean = accuracy(ws, &tables[0], Proposed, Noise::Clean)?;
    let mut pass = true;
    let mut parts = vec![format!("clean {:.2}", clean.accuracy())];
    for n in [
        Noise::Volume { db: -6.0 },
        Noise::Volume { db: 6.0 },
        Noise::LoudnessNorm { target_lufs: -14.0 },
        Noise::LoudnessNorm { target_lufs: -24.0 },
    ] {
        let o = accuracy(ws, &tables[0], Proposed, n)?;
        let changed = o.decisions.iter().zip(&clean.decisions).filter(|(a, b)| a != b).count();
        pass &= changed == 0 && o.decisions.len() == clean.decisions.len() && o.accuracy() == clean.accuracy();
        parts.push(format!("{} {:.2} ({changed} changed)", n.label(), o.accuracy()));
    }
    outcome(pass, parts.join(", "))
}

fn c5(ws: &Workspace) -> Result<Outcome> {
    let rows = ws.run_distance_experiment()?;
    let of = |k| rows.iter().filter(move |r| r.kind == k);
    let lag1 = |k| of(k).map(|r| r.lag_means[0]).sum::<f64>() / of(k).count().max(1) as f64;
    let clips = of(Proposed).count();
    let mono = of(Proposed).filter(|r| r.monotone).count();
    let (p, m) = (lag1(Proposed), lag1(MinHash));
    outcome(
        clips >= 10 && p < m && mono >= 9,
        format!("{clips} clips; lag-1 proposed {p:.4} < minhash {m:.4}; increasing on {mono}/{clips}"),
    )
}

fn c6(ws: &Workspace) -> Result<Outcome> {
    let dense = ws.dense(Proposed)?;
    let db = dense.db(0)?;
    let flat = Index::flat(db.clone());
    let Index::Ivf(ivf) = Index::ivf(db.clone(), None, ws.config.index.seed)? else { unreachable!() };
    // Real query fingerprints: every clip under light Gaussian noise.
    let mut queries: Vec<Fingerprint> = Vec::new();
    for (i, (_, a)) in ws.corpus.items.iter().enumerate() {
        let y = apply_noise(a, &NoiseSpec::new(Noise::Gaussian { sigma: 0.01 }, 7000 + i as u64))?;
        queries.extend(dense.extractor.fingerprint(&y)?.into_iter().map(|t| t.value));
    }
    let step = (queries.len() / 10_000).max(1);
    let queries: Vec<Fingerprint> = queries.into_iter().step_by(step).take(10_000).collect();
    let k = ws.config.index.k;
    let nlist = ivf.nlist();
    let (mut equal, mut top1) = (0, 0);
    for q in &queries {
        let oracle = flat.search(q, k)?;
        equal += usize::from(ivf.search_nprobe(q, k, nlist)? == oracle);
        let got = ivf.search_nprobe(q, 1, (nlist / 8).max(1))?;
        top1 += usize::from((got[0].content, got[0].position) == (oracle[0].content, oracle[0].position));
    }
    let recall = top1 as f64 / queries.len() as f64;
    outcome(
        queries.len() == 10_000 && equal == queries.len() && recall >= 0.95,
        format!(
            "db {} nlist {nlist}; nprobe=nlist identical on {equal}/{}; recall@1 at nprobe {} = {recall:.4}",
            db.len(),
            queries.len(),
            (nlist / 8).max(1)
        ),
    )
}

fn c7(ws: &Workspace) -> Result<Outcome> {
    let mut pass = true;
    let mut parts = Vec::new();
    for kind in [Proposed, MinHash] {
        let dense = ws.dense(kind)?;
        let db = dense.db(5)?;
        let expect: usize = dense.sequences.iter().map(|(_, s)| sparse_len(s.len(), 5)).sum();
        for (c, (id, s)) in db.contents().iter().zip(&dense.sequences) {
            pass &= c.id == *id && c.count == sparse_len(s.len(), 5);
        }
        pass &= db.len() == expect;
        parts.push(format!("{kind} dense {} -> skip-5 {} (expected {expect})", dense.total(), db.len()));
    }
    outcome(pass, parts.join("; "))
}

fn c8(ws: &Workspace) -> Result<Outcome> {
    let rows = ws.run_speed_experiment()?;
    let find = |k| rows.iter().find(|r| r.kind == k);
    let (Some(p), Some(m)) = (find(Proposed), find(MinHash)) else {
        return outcome(false, "speed rows missing");
    };
    let ratio = p.fps / m.fps;
    outcome(
        p.db_size >= 1_000_000 && ratio >= 10.0 && p.build_secs < 300.0 && p.index_bytes < m.index_bytes,
        format!(
            "db {}; proposed {} {:.0} fps vs minhash {} {:.0} fps = {ratio:.1}x; build {:.1} s; index {} B vs {} B",
            p.db_size, p.index, p.fps, m.index, m.fps, p.build_secs, p.index_bytes, m.index_bytes
        ),
    )
}

fn c9(ws: &Workspace) -> Result<Outcome> {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut failures = Vec::new();

    let mut worst_moment = 0.0f64;
    for _ in 0..200 {
        let v: Vec<f32> = (0..127).map(|_| rng.random_range(-60.0..20.0)).collect();
        let z = standardize(&v);
        let n = z.len() as f64;
        let mean = z.iter().map(|&x| x as f64).sum::<f64>() / n;
        let sd = (z.iter().map(|&x| (x as f64 - mean).powi(2)).sum::<f64>() / n).sqrt();
        worst_moment = worst_moment.max(mean.abs()).max((sd - 1.0).abs());
    }
    if worst_moment >= 1e-6 {
        failures.push(format!("standardize moments off by {worst_moment:e}"));
    }

    let Extractor::Proposed(p) = &ws.dense(Proposed)?.extractor else { unreachable!() };
    let m = p.model();
    let mut worst_ortho = 0.0f64;
    for i in 0..m.out_dims() {
        for j in 0..m.out_dims() {
            let dot: f64 = m.component(i).iter().zip(m.component(j)).map(|(&a, &b)| a as f64 * b as f64).sum();
            worst_ortho = worst_ortho.max((dot - f64::from(u8::from(i == j))).abs());
        }
    }
    if worst_ortho > 1e-4 {
        failures.push(format!("PCA orthonormality off by {worst_ortho:e}"));
    }

    let mut worst_haar = 0.0f32;
    for _ in 0..20 {
        let x: Vec<f32> = (0..64 * 32).map(|_| rng.random_range(-1.0..1.0)).collect();
        let back = haar2d_inverse(&haar2d(&x, 64, 32)?, 64, 32)?;
        worst_haar = x.iter().zip(&back).map(|(a, b)| (a - b).abs()).fold(worst_haar, f32::max);
    }
    if worst_haar > 1e-5 {
        failures.push(format!("Haar round trip off by {worst_haar:e}"));
    }

    let params = MinHashParams::new(200, 3, 4096)?;
    let mut worst_j = 0.0f64;
    for shared in [40usize, 80, 120, 160, 200] {
        let idx = rand::seq::index::sample(&mut rng, 4096, 400).into_vec();
        let (mut a, mut b) = (BitVector::zeros(4096), BitVector::zeros(4096));
        for &i in &idx[..shared] {
            a.set(i);
            b.set(i);
        }
        idx[shared..200].iter().for_each(|&i| a.set(i));
        idx[200..400 - shared].iter().for_each(|&i| b.set(i));
        let j = shared as f64 / (400 - shared) as f64;
        let agree = 1.0 - minhash(&a, &params)?.hamming(&minhash(&b, &params)?) as f64 / 72.0;
        worst_j = worst_j.max((agree - j).abs());
    }
    if worst_j > 0.15 {
        failures.push(format!("Jaccard estimate off by {worst_j:.3}"));
    }

    let clip = ws.corpus.items[0].1.slice(0, 16000 * 4)?;
    let len = clip.frames();
    let mut skipped = 0;
    for noise in Noise::suite() {
        let spec = NoiseSpec::new(noise, 5);
        let y = match apply_noise(&clip, &spec) {
            Err(Error::ToolUnavailable { .. }) => {
                skipped += 1;
                continue;
            }
            r => r?,
        };
        let again = apply_noise(&clip, &spec)?;
        let want = match noise {
            Noise::Shifted { samples } | Noise::Composite { shift: Shift::Samples(samples), .. } => Some(len - samples),
            Noise::TimeStretch { factor } => Some((len as f64 / factor).round() as usize),
            Noise::Composite { .. } => None,
            _ => Some(len),
        };
        if y.samples() != again.samples() || want.is_some_and(|w| w != y.frames()) {
            failures.push(format!("{} not deterministic or wrong length {}", noise.label(), y.frames()));
        }
    }
    let secs = started.elapsed().as_secs_f64();
    if secs >= 300.0 {
        failures.push(format!("took {secs:.0} s"));
    }
    let detail = if failures.is_empty() {
        format!(
            "moments {worst_moment:.1e}, orthonormality {worst_ortho:.1e}, Haar {worst_haar:.1e}, Jaccard {worst_j:.3}, \
             degradations ok ({skipped} transcode skipped, no encoder); {secs:.1} s"
        )
    } else {
        failures.join("; ")
    };
    outcome(failures.is_empty(), detail)
}

fn c10(ws: &Workspace, tables: &[Index; 2]) -> Result<Outcome> {
    let cfg = MatchConfig::default();
    let seg = ws.spec.noise_segment_seconds;
    let mut pass = true;
    let mut parts = Vec::new();
    for (kind, index) in [Proposed, MinHash].into_iter().zip(tables) {
        let ex = &ws.dense(kind)?.extractor;
        let mut segs = Vec::new();
        for s in 0..100u64 {
            let amp = 0.05 + 0.45 * (s as f32 / 99.0);
            let fps = ex.fingerprint(&white_noise(seg + 1.5, amp, 50_000 + s))?;
            segs.push(segment_stream(&fps, seg, seg, None)?.remove(0));
        }
        let o = evaluate(index, &segs, &cfg)?;
        pass &= o.correct >= 95;
        parts.push(format!("{kind} {}/100 no_match", o.correct));
    }
    outcome(pass, parts.join(", "))
}

fn main() -> ExitCode {
    let started = Instant::now();
    let ws = match Workspace::with_corpus(spec(), Config::default(), Corpus::synthetic(CLIPS, 30.0, 1)) {
        Ok(ws) => ws,
        Err(e) => {
            println!("FAIL  setup: {e}");
            return ExitCode::FAILURE;
        }
    };
    let tables = [Proposed, MinHash].map(|k| ws.table_index(k).expect("table index"));
    assert_eq!(tables[0].index_type(), IndexType::Ivf);

    let criteria: Vec<(&str, Check)> = vec![
        ("1 self-retrieval", Box::new(|| c1(&ws, started))),
        ("2 skip-rate trend", Box::new(|| c2(&ws))),
        ("3 shifted noise", Box::new(|| c3(&ws, &tables))),
        ("4 volume/loudness invariance", Box::new(|| c4(&ws, &tables))),
        ("5 temporal correlation", Box::new(|| c5(&ws))),
        ("6 IVF correctness", Box::new(|| c6(&ws))),
        ("7 sparsity arithmetic", Box::new(|| c7(&ws))),
        ("8 speed direction", Box::new(|| c8(&ws))),
        ("9 oracle suites", Box::new(|| c9(&ws))),
        ("10 false positives", Box::new(|| c10(&ws, &tables))),
    ];
    let mut failed = 0;
    for (name, run) in &criteria {
        let t = Instant::now();
        let (pass, detail) = match run() {
            Ok(o) => (o.pass, o.detail),
            Err(e) => (false, format!("error: {e}")),
        };
        failed += usize::from(!pass);
        println!("{}  {name}: {detail} [{:.1} s]", if pass { "PASS" } else { "FAIL" }, t.elapsed().as_secs_f64());
    }
    println!("{}/{} criteria passed in {:.0} s", criteria.len() - failed, criteria.len(), started.elapsed().as_secs_f64());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
