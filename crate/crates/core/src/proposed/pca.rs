//! PCA projection from pre-fingerprints to the final 32 dimensions.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::binio::{frame, unframe, Reader, Writer};
use crate::error::{Error, Result};
use crate::fingerprint::{Embedding, EMBEDDING_DIMS};
use crate::linalg::symmetric_eigen;

use super::PreFingerprint;

pub const MIN_TRAIN_SAMPLES: usize = 1000;
pub const MAX_TRAIN_SAMPLES: usize = 500_000;

const MAGIC: &[u8; 4] = b"ACPC";
const VERSION: u16 = 1;
/// Rows per partial covariance block; fixed so results do not depend on the thread count.
const BLOCK: usize = 4096;

#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    in_dims: usize,
    out_dims: usize,
    trained_on: u64,
    mean: Vec<f32>,
    components: Vec<f32>,
    explained_variance: Vec<f32>,
}

impl PcaModel {
    /// Assembles a model from parts; components are `out_dims` rows of `in_dims`.
    pub fn from_parts(
        mean: Vec<f32>,
        components: Vec<f32>,
        explained_variance: Vec<f32>,
        trained_on: u64,
    ) -> Result<Self> {
        let in_dims = mean.len();
        let out_dims = explained_variance.len();
        if in_dims == 0 || out_dims == 0 || out_dims > in_dims {
            return Err(Error::InvalidParameter(format!(
                "bad PCA shape {out_dims}x{in_dims}"
            )));
        }
        if components.len() != in_dims * out_dims {
            return Err(Error::DimensionMismatch {
                expected: in_dims * out_dims,
                actual: components.len(),
            });
        }
        Ok(Self {
            in_dims,
            out_dims,
            trained_on,
            mean,
            components,
            explained_variance,
        })
    }

    pub fn in_dims(&self) -> usize {
        self.in_dims
    }

    pub fn out_dims(&self) -> usize {
        self.out_dims
    }

    pub fn trained_on(&self) -> u64 {
        self.trained_on
    }

    pub fn mean(&self) -> &[f32] {
        &self.mean
    }

    pub fn component(&self, k: usize) -> &[f32] {
        &self.components[k * self.in_dims..(k + 1) * self.in_dims]
    }

    /// Fraction of total variance per component, non-increasing.
    pub fn explained_variance(&self) -> &[f32] {
        &self.explained_variance
    }

    /// Components carrying non-negligible variance.
    pub fn rank(&self) -> usize {
        self.explained_variance.iter().filter(|&&v| v > 1e-9).count()
    }

    /// `components · (v − mean)` at full precision.
    pub fn apply(&self, v: &[f32]) -> Result<Vec<f32>> {
        if v.len() != self.in_dims {
            return Err(Error::DimensionMismatch {
                expected: self.in_dims,
                actual: v.len(),
            });
        }
        let centered: Vec<f64> = v
            .iter()
            .zip(&self.mean)
            .map(|(&x, &m)| x as f64 - m as f64)
            .collect();
        Ok(self
            .components
            .chunks_exact(self.in_dims)
            .map(|row| {
                row.iter()
                    .zip(&centered)
                    .map(|(&c, &x)| c as f64 * x)
                    .sum::<f64>() as f32
            })
            .collect())
    }

    /// Projects and casts to the half-precision 32-d embedding.
    pub fn project(&self, v: &PreFingerprint) -> Result<Embedding> {
        Embedding::from_f32(&self.apply(&v.widen())?)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.u16(self.in_dims as u16);
        w.u16(self.out_dims as u16);
        w.u64(self.trained_on);
        w.f32s(&self.mean);
        w.f32s(&self.components);
        w.f32s(&self.explained_variance);
        frame(MAGIC, VERSION, &w.into_inner())
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(unframe(bytes, MAGIC, "PCA model", VERSION)?);
        let in_dims = r.u16()? as usize;
        let out_dims = r.u16()? as usize;
        let trained_on = r.u64()?;
        let mean = r.f32s(in_dims)?;
        let components = r.f32s(in_dims * out_dims)?;
        let explained_variance = r.f32s(out_dims)?;
        if !r.is_empty() {
            return Err(Error::Malformed("trailing bytes in PCA body".into()));
        }
        Self::from_parts(mean, components, explained_variance, trained_on)
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
}

/// Trains the 32-component projection on pre-fingerprints, subsampling to at
/// most [`MAX_TRAIN_SAMPLES`] with `seed`.
pub fn pca_train(samples: &[PreFingerprint], seed: u64) -> Result<PcaModel> {
    let Some(first) = samples.first() else {
        return Err(Error::TooFewSamples {
            got: 0,
            need: MIN_TRAIN_SAMPLES,
        });
    };
    let dims = first.len();
    let mut flat = Vec::with_capacity(samples.len() * dims);
    for s in samples {
        if s.len() != dims {
            return Err(Error::DimensionMismatch {
                expected: dims,
                actual: s.len(),
            });
        }
        flat.extend(s.0.iter().map(|h| h.to_f32()));
    }
    pca_fit(&flat, dims, EMBEDDING_DIMS, MAX_TRAIN_SAMPLES, seed)
}

/// Fits PCA to row-major `data` (`n × dims`), keeping `out_dims` components.
pub fn pca_fit(
    data: &[f32],
    dims: usize,
    out_dims: usize,
    max_samples: usize,
    seed: u64,
) -> Result<PcaModel> {
    if dims == 0 || !data.len().is_multiple_of(dims) {
        return Err(Error::InvalidParameter("data is not a whole number of rows".into()));
    }
    if out_dims == 0 || out_dims > dims {
        return Err(Error::InvalidParameter(format!(
            "cannot keep {out_dims} of {dims} components"
        )));
    }
    let n = data.len() / dims;
    if n < MIN_TRAIN_SAMPLES {
        return Err(Error::TooFewSamples {
            got: n,
            need: MIN_TRAIN_SAMPLES,
        });
    }
    let rows: Vec<usize> = if n > max_samples {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut idx = rand::seq::index::sample(&mut rng, n, max_samples).into_vec();
        idx.sort_unstable();
        idx
    } else {
        (0..n).collect()
    };
    let row = |i: usize| &data[i * dims..(i + 1) * dims];
    let count = rows.len() as f64;

    let partial_sums: Vec<Vec<f64>> = rows
        .par_chunks(BLOCK)
        .map(|block| {
            let mut s = vec![0.0; dims];
            for &i in block {
                for (a, &x) in s.iter_mut().zip(row(i)) {
                    *a += x as f64;
                }
            }
            s
        })
        .collect();
    let mut mean = vec![0.0f64; dims];
    for p in &partial_sums {
        for (m, v) in mean.iter_mut().zip(p) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= count);

    let partial_cov: Vec<Vec<f64>> = rows
        .par_chunks(BLOCK)
        .map(|block| {
            let mut c = vec![0.0; dims * dims];
            let mut x = vec![0.0; dims];
            for &i in block {
                for ((xc, &v), m) in x.iter_mut().zip(row(i)).zip(&mean) {
                    *xc = v as f64 - m;
                }
                for a in 0..dims {
                    let xa = x[a];
                    let out = &mut c[a * dims..a * dims + dims];
                    for b in a..dims {
                        out[b] += xa * x[b];
                    }
                }
            }
            c
        })
        .collect();
    let mut cov = vec![0.0f64; dims * dims];
    for p in &partial_cov {
        for (c, v) in cov.iter_mut().zip(p) {
            *c += v;
        }
    }
    for a in 0..dims {
        for b in a..dims {
            let v = cov[a * dims + b] / count;
            cov[a * dims + b] = v;
            cov[b * dims + a] = v;
        }
    }

    let trace: f64 = (0..dims).map(|i| cov[i * dims + i]).sum();
    let (values, vectors) = symmetric_eigen(&cov, dims);
    let mut components = Vec::with_capacity(out_dims * dims);
    let mut explained = Vec::with_capacity(out_dims);
    for k in 0..out_dims {
        let v = &vectors[k * dims..(k + 1) * dims];
        let pivot = v
            .iter()
            .enumerate()
            .fold(0, |best, (i, x)| if x.abs() > v[best].abs() { i } else { best });
        let sign = if v[pivot] < 0.0 { -1.0 } else { 1.0 };
        components.extend(v.iter().map(|x| (x * sign) as f32));
        let share = if trace > 0.0 { values[k].max(0.0) / trace } else { 0.0 };
        explained.push(share as f32);
    }
    // Guard against f32 rounding breaking monotonicity.
    for k in 1..out_dims {
        if explained[k] > explained[k - 1] {
            explained[k] = explained[k - 1];
        }
    }
    PcaModel::from_parts(
        mean.iter().map(|&m| m as f32).collect(),
        components,
        explained,
        rows.len() as u64,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn gaussian(rng: &mut ChaCha8Rng, n: usize) -> Vec<f32> {
        (0..n).map(|_| StandardNormal.sample(rng)).collect()
    }

    fn check_orthonormal(m: &PcaModel) {
        for i in 0..m.out_dims() {
            for j in 0..m.out_dims() {
                let dot: f64 = m
                    .component(i)
                    .iter()
                    .zip(m.component(j))
                    .map(|(&a, &b)| a as f64 * b as f64)
                    .sum();
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((dot - want).abs() <= 1e-4, "rows {i},{j}: {dot}");
            }
        }
    }

    #[test]
    fn exact_subspace_is_fully_explained() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let basis = gaussian(&mut rng, 32 * 127);
        let n = 3000;
        let mut data = Vec::with_capacity(n * 127);
        for _ in 0..n {
            let coef = gaussian(&mut rng, 32);
            for d in 0..127 {
                data.push((0..32).map(|k| coef[k] * basis[k * 127 + d]).sum::<f32>());
            }
        }
        let m = pca_fit(&data, 127, 32, MAX_TRAIN_SAMPLES, 0).unwrap();
        let total: f64 = m.explained_variance().iter().map(|&v| v as f64).sum();
        assert!((total - 1.0).abs() < 1e-6, "{total}");
        check_orthonormal(&m);
        assert!(m.explained_variance().windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn isotropic_shares_are_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 20_000;
        let data = gaussian(&mut rng, n * 127);
        let m = pca_fit(&data, 127, 32, MAX_TRAIN_SAMPLES, 0).unwrap();
        // Eigenvalues of a white sample covariance spread over the
        // Marchenko-Pastur support, edge (1 + sqrt(d/n))^2.
        let ratio: f64 = 127.0 / n as f64;
        let tolerance = 3.0 * ((1.0 + ratio.sqrt()).powi(2) - 1.0) / 127.0;
        for &v in m.explained_variance() {
            assert!((v as f64 - 1.0 / 127.0).abs() < tolerance, "{v}");
        }
    }

    #[test]
    fn axis_aligned_leading_component() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 5000;
        let mut data = gaussian(&mut rng, n * 40);
        for r in 0..n {
            data[r * 40] *= 2.0;
            for d in 2..40 {
                data[r * 40 + d] *= 0.5;
            }
        }
        let m = pca_fit(&data, 40, 32, MAX_TRAIN_SAMPLES, 0).unwrap();
        assert!(m.component(0)[0].abs() > 0.99);
        assert!(m.component(0)[0] > 0.0);
        check_orthonormal(&m);
    }

    #[test]
    fn too_few_samples() {
        let data = vec![0.0; 999 * 4];
        assert!(matches!(
            pca_fit(&data, 4, 2, MAX_TRAIN_SAMPLES, 0),
            Err(Error::TooFewSamples { got: 999, .. })
        ));
    }

    #[test]
    fn low_rank_is_padded_and_reported() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = 2000;
        let mut data = vec![0.0f32; n * 64];
        for r in 0..n {
            for d in 0..10 {
                data[r * 64 + d] = rng.random_range(-1.0..1.0);
            }
        }
        let m = pca_fit(&data, 64, 32, MAX_TRAIN_SAMPLES, 0).unwrap();
        assert_eq!(m.rank(), 10);
        check_orthonormal(&m);
    }

    fn trained() -> PcaModel {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let data = gaussian(&mut rng, 2000 * 127);
        pca_fit(&data, 127, 32, 1500, 9).unwrap()
    }

    #[test]
    fn apply_cases() {
        let m = trained();
        assert_eq!(m.trained_on(), 1500);
        assert!(m.apply(m.mean()).unwrap().iter().all(|&y| y.abs() < 1e-6));
        for k in [0, 7, 31] {
            let v: Vec<f32> = m.mean().iter().zip(m.component(k)).map(|(a, b)| a + b).collect();
            let y = m.apply(&v).unwrap();
            for (j, &yj) in y.iter().enumerate() {
                let want = if j == k { 1.0 } else { 0.0 };
                assert!((yj - want).abs() < 1e-3);
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..20 {
            let v = gaussian(&mut rng, 127);
            let y = m.apply(&v).unwrap();
            let ny = y.iter().map(|x| x * x).sum::<f32>().sqrt();
            let nv = v
                .iter()
                .zip(m.mean())
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f32>()
                .sqrt();
            assert!(ny <= nv + 1e-3);
        }
        assert!(matches!(m.apply(&[0.0; 3]), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn bytes_round_trip_bit_exact() {
        let m = trained();
        let bytes = m.to_bytes();
        let back = PcaModel::from_bytes(&bytes).unwrap();
        assert_eq!(back.to_bytes(), bytes);
        assert_eq!(back, m);
        let mut bad = bytes.clone();
        bad[30] ^= 1;
        assert!(matches!(PcaModel::from_bytes(&bad), Err(Error::Checksum { .. })));
        assert!(matches!(
            PcaModel::from_bytes(&bytes[..bytes.len() - 9]),
            Err(Error::Truncated)
        ));
    }

    #[test]
    fn training_is_deterministic() {
        assert_eq!(trained().to_bytes(), trained().to_bytes());
    }
}
