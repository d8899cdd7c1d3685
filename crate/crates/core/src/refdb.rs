//! Reference databases: per-content fingerprint sequences, skip-filtered,
//! with the extractor that produced them embedded.

use std::path::{Path, PathBuf};

use half::f16;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::audio::{load_wav, CANONICAL_RATE};
use crate::binio::{frame, unframe, Reader, Writer};
use crate::error::{Error, Result};
use crate::fingerprint::{Embedding, Fingerprint, FingerprintKind, Signature, Timed, EMBEDDING_DIMS, SIGNATURE_LEN};
use crate::pipeline::Extractor;

const MAGIC: &[u8; 4] = b"ACDB";
const VERSION: u16 = 1;

/// One corpus item: a content id and the audio file holding it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusEntry {
    pub id: String,
    pub path: PathBuf,
}

/// Reads a manifest: a JSON list of `{id, path}`. Relative paths resolve
/// against the manifest's directory.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<Vec<CorpusEntry>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut entries: Vec<CorpusEntry> = serde_json::from_str(&text)?;
    let base = path.parent().unwrap_or(Path::new("."));
    for e in &mut entries {
        if e.path.is_relative() {
            e.path = base.join(&e.path);
        }
    }
    Ok(entries)
}

pub fn save_manifest(path: impl AsRef<Path>, entries: &[CorpusEntry]) -> Result<()> {
    let path = path.as_ref();
    let text = serde_json::to_string_pretty(entries)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Indices `0, k+1, 2(k+1), …` of a dense sequence.
pub fn sparsify<T: Clone>(dense: &[T], skip: usize) -> Vec<T> {
    dense.iter().step_by(skip + 1).cloned().collect()
}

/// Retained count for a dense sequence of `dense` fingerprints.
pub fn sparse_len(dense: usize, skip: usize) -> usize {
    dense.div_ceil(skip + 1)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContentInfo {
    pub id: String,
    /// Global index of the content's first fingerprint.
    pub offset: usize,
    pub count: usize,
    pub first_timestamp: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    Proposed(Vec<Embedding>),
    MinHash(Vec<Signature>),
}

impl Payload {
    fn len(&self) -> usize {
        match self {
            Payload::Proposed(v) => v.len(),
            Payload::MinHash(v) => v.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceDB {
    extractor: Extractor,
    skip: usize,
    contents: Vec<ContentInfo>,
    payload: Payload,
}

/// Files that could not be fingerprinted during a build.
#[derive(Debug, Clone, Default)]
pub struct BuildReport {
    pub failures: Vec<(String, String)>,
}

impl ReferenceDB {
    /// Assembles a DB from dense per-content sequences, applying `skip`.
    /// Contents are ordered by id.
    pub fn from_dense(
        extractor: Extractor,
        skip: usize,
        mut sequences: Vec<(String, Vec<Timed<Fingerprint>>)>,
    ) -> Result<Self> {
        sequences.sort_by(|a, b| a.0.cmp(&b.0));
        for w in sequences.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(Error::DuplicateId(w[0].0.clone()));
            }
        }
        let kind = extractor.kind();
        let mut contents = Vec::with_capacity(sequences.len());
        let mut payload = match kind {
            FingerprintKind::Proposed => Payload::Proposed(Vec::new()),
            FingerprintKind::MinHash => Payload::MinHash(Vec::new()),
        };
        for (id, dense) in sequences {
            let kept = sparsify(&dense, skip);
            contents.push(ContentInfo {
                id,
                offset: payload.len(),
                count: kept.len(),
                first_timestamp: kept.first().map_or(0.0, |t| t.timestamp),
            });
            for t in kept {
                match (&mut payload, t.value) {
                    (Payload::Proposed(v), Fingerprint::Proposed(e)) => v.push(e),
                    (Payload::MinHash(v), Fingerprint::MinHash(s)) => v.push(s),
                    (_, other) => {
                        return Err(Error::KindMismatch {
                            expected: kind.name(),
                            actual: other.kind().name(),
                        })
                    }
                }
            }
        }
        Ok(Self {
            extractor,
            skip,
            contents,
            payload,
        })
    }

    /// Fingerprints every corpus file in parallel. Unreadable files are
    /// reported and skipped; duplicate ids are an error.
    pub fn build(corpus: &[CorpusEntry], extractor: &Extractor, skip: usize) -> Result<(Self, BuildReport)> {
        let mut ids: Vec<&str> = corpus.iter().map(|c| c.id.as_str()).collect();
        ids.sort_unstable();
        if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::DuplicateId(w[0].to_string()));
        }
        let results: Vec<(String, Result<Vec<Timed<Fingerprint>>>)> = corpus
            .par_iter()
            .map(|c| {
                let r = load_wav(&c.path).and_then(|a| extractor.fingerprint(&a));
                (c.id.clone(), r)
            })
            .collect();
        let mut report = BuildReport::default();
        let mut ok = Vec::new();
        for (id, r) in results {
            match r {
                Ok(seq) => ok.push((id, seq)),
                Err(e) => report.failures.push((id, e.to_string())),
            }
        }
        Ok((Self::from_dense(extractor.clone(), skip, ok)?, report))
    }

    pub fn kind(&self) -> FingerprintKind {
        self.extractor.kind()
    }

    pub fn extractor(&self) -> &Extractor {
        &self.extractor
    }

    pub fn skip(&self) -> usize {
        self.skip
    }

    pub fn contents(&self) -> &[ContentInfo] {
        &self.contents
    }

    pub fn content_index(&self, id: &str) -> Option<usize> {
        self.contents.binary_search_by(|c| c.id.as_str().cmp(id)).ok()
    }

    /// Total stored fingerprints.
    pub fn len(&self) -> usize {
        self.payload.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn payload(&self) -> &Payload {
        &self.payload
    }

    /// Seconds between retained fingerprints.
    pub fn spacing(&self) -> f64 {
        (self.skip + 1) as f64 * self.extractor.config().fingerprint_spacing()
    }

    /// Timestamp of retained fingerprint `position` of content `content`.
    pub fn timestamp(&self, content: usize, position: usize) -> f64 {
        let cfg = self.extractor.config();
        let frames = position * (self.skip + 1) * cfg.window.stride;
        self.contents[content].first_timestamp + (frames * cfg.hop) as f64 / CANONICAL_RATE as f64
    }

    /// `(content, position)` of a global fingerprint index.
    pub fn locate(&self, global: usize) -> (usize, usize) {
        let c = self.contents.partition_point(|c| c.offset + c.count <= global);
        (c, global - self.contents[c].offset)
    }

    pub fn fingerprint(&self, global: usize) -> Fingerprint {
        match &self.payload {
            Payload::Proposed(v) => Fingerprint::Proposed(v[global]),
            Payload::MinHash(v) => Fingerprint::MinHash(v[global]),
        }
    }

    /// Timed fingerprints of one content.
    pub fn sequence(&self, content: usize) -> Vec<Timed<Fingerprint>> {
        let c = &self.contents[content];
        (0..c.count)
            .map(|p| Timed {
                timestamp: self.timestamp(content, p),
                value: self.fingerprint(c.offset + p),
            })
            .collect()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.u8(self.kind().code());
        w.u32(self.skip as u32);
        self.extractor.write(&mut w);
        w.u32(self.contents.len() as u32);
        for c in &self.contents {
            w.str(&c.id);
            w.u64(c.offset as u64);
            w.u32(c.count as u32);
            w.f64(c.first_timestamp);
        }
        w.u64(self.len() as u64);
        match &self.payload {
            Payload::Proposed(v) => {
                for e in v {
                    for b in e.to_bits() {
                        w.u16(b);
                    }
                }
            }
            Payload::MinHash(v) => {
                for s in v {
                    w.bytes(&s.0);
                }
            }
        }
        frame(MAGIC, VERSION, &w.into_inner())
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(unframe(bytes, MAGIC, "reference DB", VERSION)?);
        let kind = FingerprintKind::from_code(r.u8()?)?;
        let skip = r.u32()? as usize;
        let extractor = Extractor::read(kind, &mut r)?;
        let n = r.u32()? as usize;
        let mut contents = Vec::with_capacity(n.min(1 << 20));
        let mut expected_offset = 0;
        for _ in 0..n {
            let c = ContentInfo {
                id: r.str()?,
                offset: r.u64()? as usize,
                count: r.u32()? as usize,
                first_timestamp: r.f64()?,
            };
            if c.offset != expected_offset {
                return Err(Error::Malformed("content table offsets are not contiguous".into()));
            }
            expected_offset += c.count;
            contents.push(c);
        }
        if contents.windows(2).any(|w| w[0].id >= w[1].id) {
            return Err(Error::Malformed("content ids are not sorted and unique".into()));
        }
        let total = r.u64()? as usize;
        if total != expected_offset {
            return Err(Error::Malformed("payload size disagrees with content table".into()));
        }
        let payload = match kind {
            FingerprintKind::Proposed => {
                let raw = r.take(total * EMBEDDING_DIMS * 2)?;
                Payload::Proposed(
                    raw.chunks_exact(EMBEDDING_DIMS * 2)
                        .map(|c| {
                            let mut e = [f16::ZERO; EMBEDDING_DIMS];
                            for (i, b) in c.chunks_exact(2).enumerate() {
                                e[i] = f16::from_bits(u16::from_le_bytes([b[0], b[1]]));
                            }
                            Embedding(e)
                        })
                        .collect(),
                )
            }
            FingerprintKind::MinHash => {
                let raw = r.take(total * SIGNATURE_LEN)?;
                Payload::MinHash(
                    raw.chunks_exact(SIGNATURE_LEN)
                        .map(|c| Signature(c.try_into().unwrap()))
                        .collect(),
                )
            }
        };
        if !r.is_empty() {
            return Err(Error::Malformed("trailing bytes in DB body".into()));
        }
        Ok(Self {
            extractor,
            skip,
            contents,
            payload,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    /// CRC32 of the serialized DB; an index records it to detect a DB swap.
    pub fn checksum(&self) -> u32 {
        crc32fast::hash(&self.to_bytes())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::minhash::MinHashPipeline;
    use crate::pipeline::PipelineConfig;

    fn extractor() -> Extractor {
        let p = MinHashPipeline::with_defaults().unwrap();
        Extractor::minhash(*p.config(), p.params().clone()).unwrap()
    }

    fn dense(n: usize, tag: u8) -> Vec<Timed<Fingerprint>> {
        let cfg = PipelineConfig::default();
        (0..n)
            .map(|i| {
                let mut s = [tag; SIGNATURE_LEN];
                s[0] = i as u8;
                Timed {
                    timestamp: cfg.timestamp(i * cfg.window.stride),
                    value: Fingerprint::MinHash(Signature(s)),
                }
            })
            .collect()
    }

    #[test]
    fn sparsify_counts() {
        let v: Vec<usize> = (0..10).collect();
        assert_eq!(sparsify(&v, 5), vec![0, 6]);
        assert_eq!(sparsify(&v, 0), v);
        assert_eq!(sparsify(&v, 1).len(), 5);
        for n in 0..50 {
            for k in 0..8 {
                assert_eq!(sparsify(&vec![0; n], k).len(), sparse_len(n, k));
            }
        }
    }

    #[test]
    fn timestamps_are_a_dense_subsequence() {
        let seq = dense(40, 1);
        let db = ReferenceDB::from_dense(extractor(), 3, vec![("a".into(), seq.clone())]).unwrap();
        assert_eq!(db.len(), 10);
        for p in 0..10 {
            assert_eq!(db.timestamp(0, p), seq[p * 4].timestamp);
        }
        assert!((db.spacing() - 4.0 * 0.128).abs() < 1e-12);
    }

    #[test]
    fn round_trip_and_corruption() {
        let db = ReferenceDB::from_dense(
            extractor(),
            0,
            vec![("c".into(), dense(7, 3)), ("a".into(), dense(12, 1)), ("b".into(), dense(1, 2))],
        )
        .unwrap();
        let counts: Vec<usize> = db.contents().iter().map(|c| c.count).collect();
        assert_eq!(counts, vec![12, 1, 7]);
        let bytes = db.to_bytes();
        let back = ReferenceDB::from_bytes(&bytes).unwrap();
        assert_eq!(back.to_bytes(), bytes);
        assert_eq!(back.contents().iter().map(|c| c.count).collect::<Vec<_>>(), counts);
        let mut bad = bytes.clone();
        let n = bad.len();
        bad[n - 20] ^= 0x40;
        assert!(matches!(ReferenceDB::from_bytes(&bad), Err(Error::Checksum { .. })));
        assert!(matches!(ReferenceDB::from_bytes(&bytes[..n - 1]), Err(Error::Truncated)));
        let mut magic = bytes.clone();
        magic[0] = b'X';
        assert!(matches!(ReferenceDB::from_bytes(&magic), Err(Error::BadMagic { .. })));
        let mut version = bytes;
        version[4] = 9;
        assert!(matches!(
            ReferenceDB::from_bytes(&version),
            Err(Error::UnsupportedVersion { version: 9, .. })
        ));
    }

    #[test]
    fn locate_and_duplicates() {
        let db = ReferenceDB::from_dense(extractor(), 0, vec![("a".into(), dense(3, 1)), ("b".into(), dense(4, 2))])
            .unwrap();
        assert_eq!(db.locate(0), (0, 0));
        assert_eq!(db.locate(2), (0, 2));
        assert_eq!(db.locate(3), (1, 0));
        assert_eq!(db.locate(6), (1, 3));
        assert_eq!(db.content_index("b"), Some(1));
        let dup = ReferenceDB::from_dense(extractor(), 0, vec![("a".into(), dense(3, 1)), ("a".into(), dense(4, 2))]);
        assert!(matches!(dup, Err(Error::DuplicateId(_))));
    }
}
