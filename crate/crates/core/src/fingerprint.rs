//! Fingerprint value types shared by both pipelines, the database and the index.

use half::f16;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Output dimensionality of the proposed fingerprint.
pub const EMBEDDING_DIMS: usize = 32;
/// Bytes in a min-hash signature.
pub const SIGNATURE_LEN: usize = 72;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FingerprintKind {
    Proposed,
    #[serde(rename = "minhash")]
    MinHash,
}

impl FingerprintKind {
    pub fn name(self) -> &'static str {
        match self {
            FingerprintKind::Proposed => "proposed",
            FingerprintKind::MinHash => "minhash",
        }
    }

    pub(crate) fn code(self) -> u8 {
        match self {
            FingerprintKind::Proposed => 0,
            FingerprintKind::MinHash => 1,
        }
    }

    pub(crate) fn from_code(c: u8) -> Result<Self> {
        match c {
            0 => Ok(FingerprintKind::Proposed),
            1 => Ok(FingerprintKind::MinHash),
            _ => Err(Error::Malformed(format!("unknown fingerprint kind {c}"))),
        }
    }
}

impl std::fmt::Display for FingerprintKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for FingerprintKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "proposed" => Ok(FingerprintKind::Proposed),
            "minhash" | "min-hash" => Ok(FingerprintKind::MinHash),
            other => Err(Error::InvalidParameter(format!(
                "unknown fingerprint kind {other:?} (expected proposed or minhash)"
            ))),
        }
    }
}

/// A 32-dimensional half-precision vector compared by L2 distance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Embedding(pub [f16; EMBEDDING_DIMS]);

impl Embedding {
    pub fn from_f32(v: &[f32]) -> Result<Self> {
        if v.len() != EMBEDDING_DIMS {
            return Err(Error::DimensionMismatch {
                expected: EMBEDDING_DIMS,
                actual: v.len(),
            });
        }
        let mut out = [f16::ZERO; EMBEDDING_DIMS];
        for (o, &x) in out.iter_mut().zip(v) {
            *o = f16::from_f32(x);
            if o.is_infinite() || o.is_nan() {
                return Err(Error::HalfOverflow(x));
            }
        }
        Ok(Self(out))
    }

    pub fn widen(&self) -> [f32; EMBEDDING_DIMS] {
        self.0.map(f16::to_f32)
    }

    pub fn to_bits(&self) -> [u16; EMBEDDING_DIMS] {
        self.0.map(f16::to_bits)
    }

    pub fn from_bits(bits: [u16; EMBEDDING_DIMS]) -> Self {
        Self(bits.map(f16::from_bits))
    }

    pub fn l2(&self, other: &Embedding) -> f32 {
        l2_squared(&self.widen(), &other.widen()).sqrt()
    }
}

/// A 72-byte min-hash signature compared by byte-wise Hamming distance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Signature(pub [u8; SIGNATURE_LEN]);

impl Signature {
    /// Number of byte positions that differ.
    pub fn hamming(&self, other: &Signature) -> u32 {
        self.0.iter().zip(&other.0).filter(|(a, b)| a != b).count() as u32
    }

    /// Packs the bytes into nine words for [`hamming_words`].
    pub fn words(&self) -> [u64; 9] {
        let mut w = [0u64; 9];
        for (i, chunk) in self.0.chunks_exact(8).enumerate() {
            w[i] = u64::from_le_bytes(chunk.try_into().unwrap());
        }
        w
    }
}

/// Byte-wise Hamming distance between arbitrary slices.
pub fn hamming_bytes(a: &[u8], b: &[u8]) -> Result<u32> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            actual: b.len(),
        });
    }
    Ok(a.iter().zip(b).filter(|(x, y)| x != y).count() as u32)
}

/// Differing-byte count over packed signatures.
#[inline]
pub fn hamming_words(a: &[u64; 9], b: &[u64; 9]) -> u32 {
    const LOW: u64 = 0x0101_0101_0101_0101;
    let mut n = 0;
    for i in 0..9 {
        let mut x = a[i] ^ b[i];
        x |= x >> 4;
        x |= x >> 2;
        x |= x >> 1;
        n += (x & LOW).count_ones();
    }
    n
}

/// Squared L2 distance with a fixed eight-lane accumulation order, so every
/// caller gets bit-identical results.
#[inline]
pub fn l2_squared(a: &[f32], b: &[f32]) -> f32 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0f32; 8];
    let mut ca = a.chunks_exact(8);
    let mut cb = b.chunks_exact(8);
    for (x, y) in (&mut ca).zip(&mut cb) {
        for j in 0..8 {
            let d = x[j] - y[j];
            acc[j] += d * d;
        }
    }
    for (j, (x, y)) in ca.remainder().iter().zip(cb.remainder()).enumerate() {
        let d = x - y;
        acc[j] += d * d;
    }
    ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]))
}

/// One fingerprint of either kind.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Fingerprint {
    Proposed(Embedding),
    MinHash(Signature),
}

impl Fingerprint {
    pub fn kind(&self) -> FingerprintKind {
        match self {
            Fingerprint::Proposed(_) => FingerprintKind::Proposed,
            Fingerprint::MinHash(_) => FingerprintKind::MinHash,
        }
    }

    /// L2 for embeddings, Hamming for signatures.
    pub fn distance(&self, other: &Fingerprint) -> Result<f32> {
        match (self, other) {
            (Fingerprint::Proposed(a), Fingerprint::Proposed(b)) => Ok(a.l2(b)),
            (Fingerprint::MinHash(a), Fingerprint::MinHash(b)) => Ok(a.hamming(b) as f32),
            (a, b) => Err(Error::KindMismatch {
                expected: a.kind().name(),
                actual: b.kind().name(),
            }),
        }
    }
}

/// A fingerprint with the start time of its analysis window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Timed<T> {
    pub timestamp: f64,
    pub value: T,
}
