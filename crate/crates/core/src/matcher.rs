//! Segment-level content decisions from per-fingerprint search hits, by
//! voting into (content, time-offset) buckets.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fingerprint::{Fingerprint, FingerprintKind, Timed};
use crate::index::{Index, SearchHit, DEFAULT_K};

pub const DEFAULT_SEGMENT_SECONDS: f64 = 1.25;
pub const ARTIFICIAL_SEGMENT_SECONDS: f64 = 1.0;
pub const DEFAULT_MAJORITY: f64 = 0.4;
pub const DEFAULT_PROPOSED_GATE: f64 = 0.42;

/// Per-kind multiples of [`Index::unrelated_distance`] that the winner's
/// closest hit must come within; `None` turns the gate off for that kind.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistanceGate {
    pub proposed: Option<f64>,
    pub minhash: Option<f64>,
}

impl Default for DistanceGate {
    fn default() -> Self {
        // Min-hash noise is already rejected by voting, and its true hits
        // sit too close to the unrelated distance for a useful gate.
        Self {
            proposed: Some(DEFAULT_PROPOSED_GATE),
            minhash: None,
        }
    }
}

impl DistanceGate {
    pub fn for_kind(&self, kind: FingerprintKind) -> Option<f64> {
        match kind {
            FingerprintKind::Proposed => self.proposed,
            FingerprintKind::MinHash => self.minhash,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuerySegment {
    pub fingerprints: Vec<Timed<Fingerprint>>,
    /// Known content id, for evaluation.
    pub ground_truth: Option<String>,
}

impl QuerySegment {
    pub fn start(&self) -> f64 {
        self.fingerprints.first().map_or(0.0, |f| f.timestamp)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatchConfig {
    pub top_k: usize,
    /// Offset bucket width in seconds; `None` uses one retained-fingerprint
    /// spacing of the DB.
    pub offset_bin: Option<f64>,
    pub majority_fraction: f64,
    pub distance_gate: DistanceGate,
}

impl Default for MatchConfig {
    fn default() -> Self {
        Self {
            top_k: DEFAULT_K,
            offset_bin: None,
            majority_fraction: DEFAULT_MAJORITY,
            distance_gate: DistanceGate::default(),
        }
    }
}

impl MatchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.top_k == 0 {
            return Err(Error::InvalidParameter("top_k must be at least 1".into()));
        }
        if let Some(b) = self.offset_bin {
            if !(b > 0.0) {
                return Err(Error::InvalidParameter("offset_bin must be positive".into()));
            }
        }
        if !(self.majority_fraction > 0.0 && self.majority_fraction <= 1.0) {
            return Err(Error::InvalidParameter("majority_fraction must be in (0, 1]".into()));
        }
        for g in [self.distance_gate.proposed, self.distance_gate.minhash].into_iter().flatten() {
            if !(g > 0.0 && g.is_finite()) {
                return Err(Error::InvalidParameter("distance_gate factors must be positive".into()));
            }
        }
        Ok(())
    }

    /// Votes the winner needs for a segment of `n` fingerprints.
    pub fn threshold(&self, n: usize) -> usize {
        ((self.majority_fraction * n as f64) - 1e-9).ceil().max(1.0) as usize
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Candidate {
    pub content_id: String,
    /// Bucket index; the bucket covers offsets near `bin · offset_bin` seconds.
    pub bin: i64,
    pub votes: usize,
    /// Votes cast by a query fingerprint's nearest hit.
    pub nearest: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "decision", rename_all = "snake_case")]
pub enum Decision {
    Matched {
        content_id: String,
        /// Reference time minus query time, seconds.
        offset: f64,
        votes: usize,
    },
    NoMatch,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MatchResult {
    #[serde(flatten)]
    pub decision: Decision,
    pub segment_start: f64,
    pub segment_len: usize,
    pub candidates: Vec<Candidate>,
}

impl MatchResult {
    pub fn matched_id(&self) -> Option<&str> {
        match &self.decision {
            Decision::Matched { content_id, .. } => Some(content_id),
            Decision::NoMatch => None,
        }
    }
}

/// Bucket of a raw offset. Halves round up, so with a sparse DB each query
/// fingerprint has exactly one retained neighbour in the zero bucket.
pub fn offset_bucket(raw: f64, offset_bin: f64) -> i64 {
    (raw / offset_bin + 0.5 + 1e-9).floor() as i64
}

/// Per-DB quantities the decision depends on.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scale {
    /// Offset bucket width, seconds.
    pub offset_bin: f64,
    /// Closest-hit limit for the winner, already scaled; `None` means no gate.
    pub gate: Option<f32>,
}

impl Scale {
    pub fn of(index: &Index, cfg: &MatchConfig) -> Self {
        Self {
            offset_bin: cfg.offset_bin.unwrap_or_else(|| index.db().spacing()),
            gate: cfg
                .distance_gate
                .for_kind(index.kind())
                .zip(index.unrelated_distance())
                .map(|(g, d)| (g * d as f64) as f32),
        }
    }
}

struct Bucket {
    votes: usize,
    nearest: usize,
    offset_sum: f64,
    closest: f32,
    /// Distinct reference positions behind the votes.
    refs: Vec<usize>,
}

/// Decides from precomputed hits (`hits[i]` belongs to `query_ts[i]`,
/// nearest first). `ids` maps content indices to ids.
///
/// Each hit votes once into its (content, offset bucket). Buckets rank by
/// a score where a query fingerprint's nearest hit counts twice, then by
/// plain votes. The winner is the best-ranked bucket that
/// - draws on at least two distinct reference positions when the segment
///   spans one offset bin or more (a run of queries all hitting one
///   stationary reference is not a time-ordered match), and
/// - has a hit within `scale.gate`.
///
/// It matches if its votes reach [`MatchConfig::threshold`].
pub fn decide(
    query_ts: &[f64],
    hits: &[Vec<SearchHit>],
    ids: &dyn Fn(usize) -> String,
    scale: Scale,
    cfg: &MatchConfig,
) -> MatchResult {
    let mut buckets: HashMap<(usize, i64), Bucket> = HashMap::new();
    for (&qt, hs) in query_ts.iter().zip(hits) {
        let mut voted: Vec<(usize, i64)> = Vec::with_capacity(hs.len());
        for (rank, h) in hs.iter().take(cfg.top_k).enumerate() {
            let raw = h.ref_timestamp - qt;
            let key = (h.content, offset_bucket(raw, scale.offset_bin));
            if voted.contains(&key) {
                continue;
            }
            voted.push(key);
            let b = buckets.entry(key).or_insert_with(|| Bucket {
                votes: 0,
                nearest: 0,
                offset_sum: 0.0,
                closest: f32::INFINITY,
                refs: Vec::new(),
            });
            b.votes += 1;
            b.nearest += usize::from(rank == 0);
            b.offset_sum += raw;
            b.closest = b.closest.min(h.distance);
            if !b.refs.contains(&h.position) {
                b.refs.push(h.position);
            }
        }
    }
    let mut ranked: Vec<((usize, i64), Bucket)> = buckets.into_iter().collect();
    let key = |b: &Bucket| (b.votes + b.nearest, b.votes);
    ranked.sort_by(|(ka, a), (kb, b)| {
        key(b).cmp(&key(a))
            .then(ka.0.cmp(&kb.0))
            .then(ka.1.abs().cmp(&kb.1.abs()))
            .then(ka.1.cmp(&kb.1))
    });
    let span = match (query_ts.first(), query_ts.last()) {
        (Some(a), Some(b)) => b - a,
        _ => 0.0,
    };
    let need_refs = if span + 1e-9 >= scale.offset_bin { 2 } else { 1 };
    let gate = scale.gate.unwrap_or(f32::INFINITY);
    let n = query_ts.len();
    let winner = ranked
        .iter()
        .find(|(_, b)| b.refs.len() >= need_refs && b.closest <= gate);
    let decision = match winner {
        Some(((content, _), b)) if b.votes >= cfg.threshold(n) => Decision::Matched {
            content_id: ids(*content),
            offset: b.offset_sum / b.votes as f64,
            votes: b.votes,
        },
        _ => Decision::NoMatch,
    };
    MatchResult {
        decision,
        segment_start: query_ts.first().copied().unwrap_or(0.0),
        segment_len: n,
        candidates: ranked
            .iter()
            .take(5)
            .map(|((c, bin), b)| Candidate {
                content_id: ids(*c),
                bin: *bin,
                votes: b.votes,
                nearest: b.nearest,
            })
            .collect(),
    }
}

/// Searches every fingerprint of `seg` and votes.
pub fn match_segment(seg: &QuerySegment, index: &Index, cfg: &MatchConfig) -> Result<MatchResult> {
    cfg.validate()?;
    if seg.fingerprints.len() < 2 {
        return Err(Error::InvalidParameter("a segment needs at least 2 fingerprints".into()));
    }
    let queries: Vec<Fingerprint> = seg.fingerprints.iter().map(|f| f.value).collect();
    let hits = queries
        .iter()
        .map(|q| index.search(q, cfg.top_k))
        .collect::<Result<Vec<_>>>()?;
    let ts: Vec<f64> = seg.fingerprints.iter().map(|f| f.timestamp).collect();
    let db = index.db();
    Ok(decide(&ts, &hits, &|c| db.contents()[c].id.clone(), Scale::of(index, cfg), cfg))
}

/// Cuts a fingerprint stream into segments `[t0 + k·hop, t0 + k·hop + seg_len)`.
/// Fingerprints are assigned by their window start time; the stream is
/// taken to last `count · spacing` seconds.
pub fn segment_stream(
    fps: &[Timed<Fingerprint>],
    seg_len: f64,
    hop: f64,
    ground_truth: Option<&str>,
) -> Result<Vec<QuerySegment>> {
    if fps.is_empty() {
        return Err(Error::InvalidParameter("empty fingerprint stream".into()));
    }
    if !(seg_len > 0.0 && hop > 0.0) {
        return Err(Error::InvalidParameter("segment length and hop must be positive".into()));
    }
    let t0 = fps[0].timestamp;
    let spacing = if fps.len() > 1 {
        fps[1].timestamp - fps[0].timestamp
    } else {
        seg_len
    };
    let duration = fps.len() as f64 * spacing;
    const EPS: f64 = 1e-9;
    if seg_len > duration + EPS {
        return Err(Error::AudioTooShort {
            len: fps.len(),
            need: (seg_len / spacing).ceil() as usize,
        });
    }
    let count = ((duration - seg_len + EPS) / hop).floor() as usize + 1;
    let mut out = Vec::with_capacity(count);
    let mut lo = 0;
    for k in 0..count {
        let start = t0 + k as f64 * hop;
        let end = start + seg_len;
        while lo < fps.len() && fps[lo].timestamp < start - EPS {
            lo += 1;
        }
        let mut hi = lo;
        while hi < fps.len() && fps[hi].timestamp < end - EPS {
            hi += 1;
        }
        out.push(QuerySegment {
            fingerprints: fps[lo..hi].to_vec(),
            ground_truth: ground_truth.map(str::to_string),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fingerprint::{Signature, SIGNATURE_LEN};

    fn stream(n: usize) -> Vec<Timed<Fingerprint>> {
        (0..n)
            .map(|i| Timed {
                timestamp: (i * 2048) as f64 / 16000.0,
                value: Fingerprint::MinHash(Signature([i as u8; SIGNATURE_LEN])),
            })
            .collect()
    }

    #[test]
    fn segment_counts() {
        // 10 s at 128 ms spacing.
        let s = segment_stream(&stream(78), 1.25, 1.25, None).unwrap();
        assert_eq!(s.len(), 7);
        let s = segment_stream(&stream(79), 1.25, 1.25, None).unwrap();
        assert_eq!(s.len(), 8);
        assert!(s.iter().all(|q| q.fingerprints.len() >= 9 && q.fingerprints.len() <= 10));
        let one = segment_stream(&stream(10), 1.25, 1.25, Some("x")).unwrap();
        assert_eq!(one.len(), 1);
        assert_eq!(one[0].fingerprints.len(), 10);
        assert_eq!(one[0].ground_truth.as_deref(), Some("x"));
        assert!(segment_stream(&stream(5), 1.25, 1.25, None).is_err());
        assert_eq!(segment_stream(&stream(8), 1.0, 1.0, None).unwrap()[0].fingerprints.len(), 8);
    }

    #[test]
    fn segment_timestamps_follow_window_indices() {
        let fps = stream(200);
        for seg in segment_stream(&fps, 1.25, 1.25, None).unwrap() {
            for f in &seg.fingerprints {
                let i = (f.timestamp * 16000.0 / 2048.0).round() as usize;
                assert_eq!(fps[i].timestamp, f.timestamp);
            }
        }
    }

    fn hit(content: usize, ts: f64) -> SearchHit {
        SearchHit {
            content,
            position: (ts / 0.128).round().max(0.0) as usize,
            ref_timestamp: ts,
            distance: 0.0,
        }
    }

    fn sc(offset_bin: f64) -> Scale {
        Scale {
            offset_bin,
            gate: None,
        }
    }

    #[test]
    fn consistent_offsets_win() {
        let q: Vec<f64> = (0..10).map(|i| i as f64 * 0.128).collect();
        let hits: Vec<Vec<SearchHit>> = q
            .iter()
            .enumerate()
            .map(|(i, &t)| vec![hit(1, t + 5.0), hit(0, (i * 7 % 10) as f64)])
            .collect();
        let r = decide(&q, &hits, &|c| format!("c{c}"), sc(0.128), &MatchConfig::default());
        match r.decision {
            Decision::Matched { ref content_id, offset, votes } => {
                assert_eq!(content_id, "c1");
                assert!((offset - 5.0).abs() < 1e-9);
                assert_eq!(votes, 10);
            }
            Decision::NoMatch => panic!("expected a match"),
        }
    }

    #[test]
    fn scattered_hits_do_not_match() {
        let q: Vec<f64> = (0..10).map(|i| i as f64 * 0.128).collect();
        let hits: Vec<Vec<SearchHit>> = (0..10).map(|i| vec![hit(i % 4, i as f64 * 3.0)]).collect();
        let r = decide(&q, &hits, &|c| format!("c{c}"), sc(0.128), &MatchConfig::default());
        assert_eq!(r.decision, Decision::NoMatch);
        assert_eq!(MatchConfig::default().threshold(10), 4);
        assert_eq!(MatchConfig::default().threshold(8), 4);
    }

    #[test]
    fn one_vote_per_fingerprint_and_bucket() {
        let q = vec![0.0, 0.128];
        let hits = vec![vec![hit(0, 1.0), hit(0, 1.01), hit(0, 1.02)], vec![]];
        let cfg = MatchConfig {
            majority_fraction: 1.0,
            ..Default::default()
        };
        let r = decide(&q, &hits, &|c| format!("c{c}"), sc(0.5), &cfg);
        assert_eq!(r.candidates[0].votes, 1);
        assert_eq!(r.decision, Decision::NoMatch);
    }

    #[test]
    fn ties_prefer_lower_content_then_smaller_offset() {
        let q = vec![0.0, 0.128];
        let hits = vec![
            vec![hit(2, 1.0), hit(1, 0.0), hit(1, 3.0)],
            vec![hit(1, 0.128), hit(2, 1.128), hit(1, 3.128)],
        ];
        let r = decide(&q, &hits, &|c| format!("c{c}"), sc(0.128), &MatchConfig::default());
        assert_eq!(r.matched_id(), Some("c1"));
        assert_eq!(r.candidates[0].bin, 0);
        assert_eq!(r.candidates[1].content_id, "c2");
        assert_eq!(r.candidates[2].bin, 23);
    }

    #[test]
    fn halves_round_up() {
        assert_eq!(offset_bucket(0.384, 0.768), 1);
        assert_eq!(offset_bucket(-0.384, 0.768), 0);
        assert_eq!(offset_bucket(-0.385, 0.768), -1);
        assert_eq!(offset_bucket(0.0, 0.128), 0);
    }

    #[test]
    fn stationary_hub_is_not_a_match() {
        // Eight query fingerprints all nearest to one reference.
        let q: Vec<f64> = (0..8).map(|i| i as f64 * 0.128).collect();
        let hits: Vec<Vec<SearchHit>> = q.iter().map(|_| vec![hit(3, 20.0)]).collect();
        let r = decide(&q, &hits, &|c| format!("c{c}"), sc(0.768), &MatchConfig::default());
        assert!(r.candidates[0].votes >= 4);
        assert_eq!(r.decision, Decision::NoMatch);
        // The same votes spread over two advancing references do match.
        let hits: Vec<Vec<SearchHit>> = q
            .iter()
            .map(|&t| vec![hit(3, if t < 0.4 { 20.0 } else { 20.768 })])
            .collect();
        let r = decide(&q, &hits, &|c| format!("c{c}"), sc(0.768), &MatchConfig::default());
        assert_eq!(r.matched_id(), Some("c3"));
    }

    #[test]
    fn nearest_hits_outrank_extra_votes() {
        let q: Vec<f64> = (0..5).map(|i| i as f64 * 0.128).collect();
        // c1 is runner-up for all five queries; c0 is nearest for four.
        let mut hits: Vec<Vec<SearchHit>> = q.iter().map(|&t| vec![hit(0, t + 2.0), hit(1, t + 9.0)]).collect();
        hits[4] = vec![hit(7, 30.0), hit(1, q[4] + 9.0)];
        let r = decide(&q, &hits, &|c| format!("c{c}"), sc(0.128), &MatchConfig::default());
        assert_eq!(r.matched_id(), Some("c0"));
        assert_eq!((r.candidates[0].votes, r.candidates[0].nearest), (4, 4));
        assert_eq!((r.candidates[1].votes, r.candidates[1].nearest), (5, 0));
    }

    #[test]
    fn distance_gate_rejects_far_winners() {
        let q: Vec<f64> = (0..8).map(|i| i as f64 * 0.128).collect();
        let far = |d: f32| -> Vec<Vec<SearchHit>> {
            q.iter()
                .map(|&t| vec![SearchHit { distance: d, ..hit(5, t + 4.0) }])
                .collect()
        };
        let scale = Scale {
            offset_bin: 0.128,
            gate: Some(4.4),
        };
        let cfg = MatchConfig::default();
        assert_eq!(decide(&q, &far(4.3), &|c| format!("c{c}"), scale, &cfg).matched_id(), Some("c5"));
        assert_eq!(decide(&q, &far(4.5), &|c| format!("c{c}"), scale, &cfg).decision, Decision::NoMatch);
        assert_eq!(decide(&q, &far(40.0), &|c| format!("c{c}"), sc(0.128), &cfg).matched_id(), Some("c5"));
        let g = DistanceGate::default();
        assert_eq!(g.for_kind(FingerprintKind::Proposed), Some(DEFAULT_PROPOSED_GATE));
        assert_eq!(g.for_kind(FingerprintKind::MinHash), None);
    }
}
