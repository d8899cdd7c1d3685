//! Nearest-neighbour search over a reference DB: exhaustive L2 or Hamming,
//! and an inverted-file index with a k-means coarse quantizer.

pub mod kmeans;

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::path::Path;
use std::sync::{Arc, OnceLock};
use std::time::Instant;

use half::f16;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::binio::{frame, unframe, Reader, Writer};
use crate::error::{Error, Result};
use crate::fingerprint::{hamming_words, l2_squared, Embedding, Fingerprint, FingerprintKind, Signature, EMBEDDING_DIMS, SIGNATURE_LEN};
use crate::refdb::{Payload, ReferenceDB};

const MAGIC: &[u8; 4] = b"ACIX";
const VERSION: u16 = 1;
pub const DEFAULT_K: usize = 5;
pub const DEFAULT_SEED: u64 = 0x1f5;
pub const UNRELATED_PAIRS: usize = 2048;

/// `round(sqrt(n))` clamped to `[16, 65536]`.
pub fn default_nlist(n: usize) -> usize {
    ((n as f64).sqrt().round() as usize).clamp(16, 65536)
}

/// `max(1, nlist / 16)`.
pub fn default_nprobe(nlist: usize) -> usize {
    (nlist / 16).max(1)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SearchHit {
    /// Index into the DB's content table.
    pub content: usize,
    /// Retained-fingerprint position within the content.
    pub position: usize,
    pub ref_timestamp: f64,
    /// L2 distance or Hamming count.
    pub distance: f32,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Candidate {
    distance: f32,
    global: u32,
}

impl Eq for Candidate {}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.distance
            .total_cmp(&other.distance)
            .then(self.global.cmp(&other.global))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Bounded max-heap keeping the `k` smallest (distance, global index) pairs.
struct TopK {
    k: usize,
    heap: BinaryHeap<Candidate>,
}

impl TopK {
    fn new(k: usize) -> Self {
        Self {
            k,
            heap: BinaryHeap::with_capacity(k + 1),
        }
    }

    #[inline]
    fn push(&mut self, distance: f32, global: u32) {
        let c = Candidate { distance, global };
        if self.heap.len() < self.k {
            self.heap.push(c);
        } else if c < *self.heap.peek().unwrap() {
            self.heap.pop();
            self.heap.push(c);
        }
    }

    #[inline]
    fn bound(&self) -> f32 {
        if self.heap.len() < self.k {
            f32::INFINITY
        } else {
            self.heap.peek().unwrap().distance
        }
    }

    fn into_sorted(self) -> Vec<Candidate> {
        self.heap.into_sorted_vec()
    }
}

enum Vectors {
    Dense(Vec<f32>),
    Packed(Vec<[u64; 9]>),
}

fn widen_payload(db: &ReferenceDB) -> Vectors {
    match db.payload() {
        Payload::Proposed(v) => Vectors::Dense(v.iter().flat_map(|e| e.widen()).collect()),
        Payload::MinHash(v) => Vectors::Packed(v.iter().map(|s| s.words()).collect()),
    }
}

fn hits(db: &ReferenceDB, top: TopK, kind: FingerprintKind) -> Vec<SearchHit> {
    top.into_sorted()
        .into_iter()
        .map(|c| {
            let (content, position) = db.locate(c.global as usize);
            SearchHit {
                content,
                position,
                ref_timestamp: db.timestamp(content, position),
                distance: match kind {
                    FingerprintKind::Proposed => c.distance.sqrt(),
                    FingerprintKind::MinHash => c.distance,
                },
            }
        })
        .collect()
}

fn check_query(db: &ReferenceDB, q: &Fingerprint, k: usize) -> Result<()> {
    if q.kind() != db.kind() {
        return Err(Error::KindMismatch {
            expected: db.kind().name(),
            actual: q.kind().name(),
        });
    }
    if db.is_empty() {
        return Err(Error::EmptyDatabase);
    }
    if k == 0 {
        return Err(Error::InvalidParameter("k must be at least 1".into()));
    }
    Ok(())
}

/// Exhaustive search: L2 for embeddings, Hamming for signatures.
pub struct FlatIndex {
    db: Arc<ReferenceDB>,
    vectors: Vectors,
    unrelated: OnceLock<Option<f32>>,
}

impl FlatIndex {
    pub fn new(db: Arc<ReferenceDB>) -> Self {
        let vectors = widen_payload(&db);
        Self {
            db,
            vectors,
            unrelated: OnceLock::new(),
        }
    }

    pub fn db(&self) -> &Arc<ReferenceDB> {
        &self.db
    }

    pub fn search(&self, q: &Fingerprint, k: usize) -> Result<Vec<SearchHit>> {
        check_query(&self.db, q, k)?;
        let mut top = TopK::new(k);
        match (&self.vectors, q) {
            (Vectors::Dense(v), Fingerprint::Proposed(e)) => {
                let q = e.widen();
                for (i, row) in v.chunks_exact(EMBEDDING_DIMS).enumerate() {
                    let d = l2_squared(&q, row);
                    if d <= top.bound() {
                        top.push(d, i as u32);
                    }
                }
            }
            (Vectors::Packed(v), Fingerprint::MinHash(s)) => {
                let q = s.words();
                for (i, w) in v.iter().enumerate() {
                    let d = hamming_words(&q, w) as f32;
                    if d <= top.bound() {
                        top.push(d, i as u32);
                    }
                }
            }
            _ => unreachable!("kind checked"),
        }
        Ok(hits(&self.db, top, self.db.kind()))
    }
}

struct InvertedList {
    globals: Vec<u32>,
    vectors: Vec<f32>,
}

/// Inverted-file index over embeddings.
pub struct IvfIndex {
    db: Arc<ReferenceDB>,
    nlist: usize,
    nprobe: usize,
    seed: u64,
    trained_on: usize,
    centroids: Vec<f32>,
    lists: Vec<InvertedList>,
    unrelated: OnceLock<Option<f32>>,
}

impl IvfIndex {
    /// Trains `nlist` centroids on at most `256·nlist` DB vectors (sampled
    /// with `seed`) and assigns every vector to its nearest centroid.
    pub fn build(db: Arc<ReferenceDB>, nlist: usize, seed: u64) -> Result<Self> {
        if db.kind() != FingerprintKind::Proposed {
            return Err(Error::KindMismatch {
                expected: FingerprintKind::Proposed.name(),
                actual: db.kind().name(),
            });
        }
        let n = db.len();
        if nlist == 0 || n < nlist {
            return Err(Error::InvalidParameter(format!(
                "IVF needs at least nlist ({nlist}) vectors, DB has {n}"
            )));
        }
        let Vectors::Dense(all) = widen_payload(&db) else {
            unreachable!("proposed payload")
        };
        let cap = kmeans::POINTS_PER_CENTROID * nlist;
        let centroids = if n > cap {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
            let mut idx = rand::seq::index::sample(&mut rng, n, cap).into_vec();
            idx.sort_unstable();
            let sample: Vec<f32> = idx
                .iter()
                .flat_map(|&i| all[i * EMBEDDING_DIMS..(i + 1) * EMBEDDING_DIMS].iter().copied())
                .collect();
            kmeans::kmeans(&sample, EMBEDDING_DIMS, nlist, seed)
        } else {
            kmeans::kmeans(&all, EMBEDDING_DIMS, nlist, seed)
        };
        let assigned = kmeans::assign(&all, EMBEDDING_DIMS, &centroids);
        let mut lists: Vec<InvertedList> = (0..nlist)
            .map(|_| InvertedList {
                globals: Vec::new(),
                vectors: Vec::new(),
            })
            .collect();
        for (i, (c, _)) in assigned.into_iter().enumerate() {
            lists[c].globals.push(i as u32);
            lists[c]
                .vectors
                .extend_from_slice(&all[i * EMBEDDING_DIMS..(i + 1) * EMBEDDING_DIMS]);
        }
        Ok(Self {
            db,
            nlist,
            nprobe: default_nprobe(nlist),
            seed,
            trained_on: n.min(cap),
            centroids,
            lists,
            unrelated: OnceLock::new(),
        })
    }

    pub fn db(&self) -> &Arc<ReferenceDB> {
        &self.db
    }

    pub fn nlist(&self) -> usize {
        self.nlist
    }

    pub fn nprobe(&self) -> usize {
        self.nprobe
    }

    pub fn set_nprobe(&mut self, nprobe: usize) -> Result<()> {
        if nprobe == 0 || nprobe > self.nlist {
            return Err(Error::InvalidParameter(format!(
                "nprobe {nprobe} must be in 1..={}",
                self.nlist
            )));
        }
        self.nprobe = nprobe;
                Ok(())
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Vectors used to train the coarse quantizer.
    pub fn trained_on(&self) -> usize {
        self.trained_on
    }

    pub fn centroid(&self, c: usize) -> &[f32] {
        &self.centroids[c * EMBEDDING_DIMS..(c + 1) * EMBEDDING_DIMS]
    }

    pub fn list_sizes(&self) -> Vec<usize> {
        self.lists.iter().map(|l| l.globals.len()).collect()
    }

    /// Global DB indices stored in list `c`.
    pub fn list(&self, c: usize) -> &[u32] {
        &self.lists[c].globals
    }

    /// The `nprobe` centroids nearest to `q`, nearest first (ties to lower index).
    pub fn probe_order(&self, q: &[f32], nprobe: usize) -> Vec<usize> {
        let mut d: Vec<(f32, usize)> = self
            .centroids
            .chunks_exact(EMBEDDING_DIMS)
            .enumerate()
            .map(|(i, c)| (l2_squared(q, c), i))
            .collect();
        let nprobe = nprobe.min(d.len());
        let cmp = |a: &(f32, usize), b: &(f32, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if nprobe < d.len() {
            d.select_nth_unstable_by(nprobe, cmp);
            d.truncate(nprobe);
        }
        d.sort_by(cmp);
        d.into_iter().map(|(_, i)| i).collect()
    }

    pub fn search(&self, q: &Fingerprint, k: usize) -> Result<Vec<SearchHit>> {
        self.search_nprobe(q, k, self.nprobe)
    }

    pub fn search_nprobe(&self, q: &Fingerprint, k: usize, nprobe: usize) -> Result<Vec<SearchHit>> {
        check_query(&self.db, q, k)?;
        if nprobe == 0 || nprobe > self.nlist {
            return Err(Error::InvalidParameter(format!(
                "nprobe {nprobe} must be in 1..={}",
                self.nlist
            )));
        }
        let Fingerprint::Proposed(e) = q else {
            unreachable!("kind checked")
        };
        let q = e.widen();
        let mut top = TopK::new(k);
        for c in self.probe_order(&q, nprobe) {
            let list = &self.lists[c];
            for (row, &g) in list.vectors.chunks_exact(EMBEDDING_DIMS).zip(&list.globals) {
                let d = l2_squared(&q, row);
                if d <= top.bound() {
                    top.push(d, g);
                }
            }
        }
        Ok(hits(&self.db, top, FingerprintKind::Proposed))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IndexHeader {
    pub index_type: IndexType,
    pub kind: FingerprintKind,
    /// Checksum of the DB the index belongs to.
    pub db_checksum: u32,
    /// Zero for exhaustive indexes.
    pub nlist: usize,
    pub nprobe: usize,
    pub seed: u64,
}

/// Either index type behind one interface.
pub enum Index {
    Flat(FlatIndex),
    Ivf(IvfIndex),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IndexType {
    Flat,
    Ivf,
}

impl std::str::FromStr for IndexType {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "flat" | "exhaustive" => Ok(IndexType::Flat),
            "ivf" => Ok(IndexType::Ivf),
            other => Err(Error::InvalidParameter(format!(
                "unknown index type {other:?} (expected flat or ivf)"
            ))),
        }
    }
}

impl Index {
    pub fn flat(db: Arc<ReferenceDB>) -> Self {
        Index::Flat(FlatIndex::new(db))
    }

    /// IVF with `nlist` (default `round(sqrt(N))`) lists.
    pub fn ivf(db: Arc<ReferenceDB>, nlist: Option<usize>, seed: u64) -> Result<Self> {
        let nlist = nlist.unwrap_or_else(|| default_nlist(db.len()).min(db.len().max(1)));
        Ok(Index::Ivf(IvfIndex::build(db, nlist, seed)?))
    }

    pub fn index_type(&self) -> IndexType {
        match self {
            Index::Flat(_) => IndexType::Flat,
            Index::Ivf(_) => IndexType::Ivf,
        }
    }

    pub fn db(&self) -> &Arc<ReferenceDB> {
        match self {
            Index::Flat(i) => i.db(),
            Index::Ivf(i) => i.db(),
        }
    }

    pub fn kind(&self) -> FingerprintKind {
        self.db().kind()
    }

    pub fn describe(&self) -> String {
        match self {
            Index::Flat(_) => match self.kind() {
                FingerprintKind::Proposed => "exhaustive L2".into(),
                FingerprintKind::MinHash => "exhaustive Hamming".into(),
            },
            Index::Ivf(i) => format!("IVF nlist={} nprobe={}", i.nlist(), i.nprobe()),
        }
    }

    pub fn search(&self, q: &Fingerprint, k: usize) -> Result<Vec<SearchHit>> {
        match self {
            Index::Flat(i) => i.search(q, k),
            Index::Ivf(i) => i.search(q, k),
        }
    }

    /// Median distance between [`UNRELATED_PAIRS`] random pairs of DB
    /// fingerprints from different contents: how far apart unrelated audio
    /// typically lands. Unlike nearest-neighbour statistics it does not
    /// shrink as the DB grows. `None` for a single-content DB. Cached.
    pub fn unrelated_distance(&self) -> Option<f32> {
        let cell = match self {
            Index::Flat(i) => &i.unrelated,
            Index::Ivf(i) => &i.unrelated,
        };
        *cell.get_or_init(|| {
            let db = self.db();
            if db.contents().len() < 2 {
                return None;
            }
            let mut rng = ChaCha8Rng::seed_from_u64(0x0dd5);
            let mut d = Vec::with_capacity(UNRELATED_PAIRS);
            while d.len() < UNRELATED_PAIRS {
                let a = rng.random_range(0..db.len());
                let b = rng.random_range(0..db.len());
                if db.locate(a).0 != db.locate(b).0 {
                    d.push(db.fingerprint(a).distance(&db.fingerprint(b)).expect("same kind"));
                }
            }
            d.sort_by(f32::total_cmp);
            Some(d[d.len() / 2])
        })
    }

    /// Parallel search; results keep query order.
    pub fn search_batch(&self, queries: &[Fingerprint], k: usize) -> Result<Vec<Vec<SearchHit>>> {
        queries.par_iter().map(|q| self.search(q, k)).collect()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let db = self.db();
        let mut w = Writer::new();
        w.u8(match self {
            Index::Flat(_) => 0,
            Index::Ivf(_) => 1,
        });
        w.u8(db.kind().code());
        w.u32(db.checksum());
        let write_entry = |w: &mut Writer, g: usize| {
            let (c, p) = db.locate(g);
            w.u32(c as u32);
            w.u32(p as u32);
            match db.fingerprint(g) {
                Fingerprint::Proposed(e) => e.to_bits().iter().for_each(|&b| w.u16(b)),
                Fingerprint::MinHash(s) => w.bytes(&s.0),
            }
        };
        match self {
            Index::Flat(_) => {
                w.u32(0);
                w.u32(0);
                w.u64(0);
                w.u16(0);
                w.u32(1);
                w.u32(db.len() as u32);
                for g in 0..db.len() {
                    write_entry(&mut w, g);
                }
            }
            Index::Ivf(ix) => {
                w.u32(ix.nlist as u32);
                w.u32(ix.nprobe as u32);
                w.u64(ix.seed);
                w.u16(EMBEDDING_DIMS as u16);
                w.f32s(&ix.centroids);
                w.u64(ix.trained_on as u64);
                w.u32(ix.nlist as u32);
                for l in &ix.lists {
                    w.u32(l.globals.len() as u32);
                    for &g in &l.globals {
                        write_entry(&mut w, g as usize);
                    }
                }
            }
        }
        frame(MAGIC, VERSION, &w.into_inner())
    }

    /// Header fields of a serialized index, readable without its DB.
    pub fn read_header(bytes: &[u8]) -> Result<IndexHeader> {
        let mut r = Reader::new(unframe(bytes, MAGIC, "index", VERSION)?);
        let index_type = match r.u8()? {
            0 => IndexType::Flat,
            1 => IndexType::Ivf,
            other => return Err(Error::Malformed(format!("unknown index type {other}"))),
        };
        let kind = FingerprintKind::from_code(r.u8()?)?;
        let db_checksum = r.u32()?;
        let nlist = r.u32()? as usize;
        let nprobe = r.u32()? as usize;
        let seed = r.u64()?;
        Ok(IndexHeader {
            index_type,
            kind,
            db_checksum,
            nlist,
            nprobe,
            seed,
        })
    }

    /// Loads an index; `db` must be the exact DB it was built from.
    pub fn from_bytes(bytes: &[u8], db: Arc<ReferenceDB>) -> Result<Self> {
        let mut r = Reader::new(unframe(bytes, MAGIC, "index", VERSION)?);
        let ty = r.u8()?;
        let kind = FingerprintKind::from_code(r.u8()?)?;
        if kind != db.kind() {
            return Err(Error::KindMismatch {
                expected: kind.name(),
                actual: db.kind().name(),
            });
        }
        if r.u32()? != db.checksum() {
            return Err(Error::IndexDbMismatch);
        }
        let nlist = r.u32()? as usize;
        let nprobe = r.u32()? as usize;
        let seed = r.u64()?;
        let dims = r.u16()? as usize;
        let (centroids, trained_on) = if ty == 1 {
            if dims != EMBEDDING_DIMS || nlist == 0 {
                return Err(Error::Malformed("bad IVF header".into()));
            }
            (r.f32s(nlist * dims)?, r.u64()? as usize)
        } else {
            (Vec::new(), 0)
        };
        let n_lists = r.u32()? as usize;
        let mut seen = vec![false; db.len()];
        let mut lists = Vec::with_capacity(n_lists);
        for _ in 0..n_lists {
            let count = r.u32()? as usize;
            let mut globals = Vec::with_capacity(count.min(db.len()));
            for _ in 0..count {
                let c = r.u32()? as usize;
                let p = r.u32()? as usize;
                let info = db
                    .contents()
                    .get(c)
                    .filter(|i| p < i.count)
                    .ok_or_else(|| Error::Malformed("index entry outside the DB".into()))?;
                let g = info.offset + p;
                let stored = match kind {
                    FingerprintKind::Proposed => {
                        let mut bits = [0u16; EMBEDDING_DIMS];
                        for b in &mut bits {
                            *b = r.u16()?;
                        }
                        bits.iter().any(|&b| f16::from_bits(b).is_nan())
                            || Fingerprint::Proposed(Embedding::from_bits(bits))
                                != db.fingerprint(g)
                    }
                    FingerprintKind::MinHash => {
                        let raw = r.take(SIGNATURE_LEN)?;
                        Fingerprint::MinHash(Signature(raw.try_into().unwrap())) != db.fingerprint(g)
                    }
                };
                if stored || std::mem::replace(&mut seen[g], true) {
                    return Err(Error::IndexDbMismatch);
                }
                globals.push(g as u32);
            }
            lists.push(globals);
        }
        if !r.is_empty() || seen.iter().any(|s| !s) {
            return Err(Error::Malformed("index does not cover the DB exactly".into()));
        }
        match ty {
            0 => Ok(Index::flat(db)),
            1 => {
                if lists.len() != nlist {
                    return Err(Error::Malformed("IVF list count mismatch".into()));
                }
                let Vectors::Dense(all) = widen_payload(&db) else {
                    unreachable!("proposed payload")
                };
                let lists = lists
                    .into_iter()
                    .map(|globals| InvertedList {
                        vectors: globals
                            .iter()
                            .flat_map(|&g| {
                                all[g as usize * EMBEDDING_DIMS..(g as usize + 1) * EMBEDDING_DIMS]
                                    .iter()
                                    .copied()
                            })
                            .collect(),
                        globals,
                    })
                    .collect();
                let mut ix = IvfIndex {
                    db,
                    nlist,
                    nprobe: 1,
                    seed,
                    trained_on,
                    centroids,
                    lists,
                    unrelated: OnceLock::new(),
                };
                ix.set_nprobe(nprobe)?;
                Ok(Index::Ivf(ix))
            }
            other => Err(Error::Malformed(format!("unknown index type {other}"))),
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>, db: Arc<ReferenceDB>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes, db)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchReport {
    pub index: String,
    pub db_size: usize,
    pub queries: usize,
    pub k: usize,
    pub threads: usize,
    pub runs_fps: Vec<f64>,
    pub fps: f64,
}

/// Median over `runs` timed passes of batch search throughput, in query
/// fingerprints per second.
pub fn bench_fps(index: &Index, queries: &[Fingerprint], k: usize, runs: usize) -> Result<BenchReport> {
    if queries.len() < 1000 {
        return Err(Error::InvalidParameter(format!(
            "benchmark needs at least 1000 queries, got {}",
            queries.len()
        )));
    }
    let runs = runs.max(1);
    let mut fps = Vec::with_capacity(runs);
    for _ in 0..runs {
        let start = Instant::now();
        let out = index.search_batch(queries, k)?;
        let secs = start.elapsed().as_secs_f64().max(1e-9);
        std::hint::black_box(out);
        fps.push(queries.len() as f64 / secs);
    }
    let mut sorted = fps.clone();
    sorted.sort_by(f64::total_cmp);
    Ok(BenchReport {
        index: index.describe(),
        db_size: index.db().len(),
        queries: queries.len(),
        k,
        threads: rayon::current_num_threads(),
        runs_fps: fps,
        fps: sorted[sorted.len() / 2],
    })
}
