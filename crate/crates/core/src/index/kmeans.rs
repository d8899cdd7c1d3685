//! Seeded k-means for the IVF coarse quantizer.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::fingerprint::l2_squared;

pub const MAX_ITERATIONS: usize = 25;
/// Training uses at most this many points per centroid.
pub const POINTS_PER_CENTROID: usize = 256;
const BLOCK: usize = 8192;

/// Index of the nearest centroid (lowest index on ties) and its squared distance.
pub fn nearest(centroids: &[f32], dims: usize, v: &[f32]) -> (usize, f32) {
    let mut best = (0, f32::INFINITY);
    for (i, c) in centroids.chunks_exact(dims).enumerate() {
        let d = l2_squared(v, c);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

pub fn assign(data: &[f32], dims: usize, centroids: &[f32]) -> Vec<(usize, f32)> {
    data.par_chunks(dims).map(|v| nearest(centroids, dims, v)).collect()
}

fn plus_plus(data: &[f32], dims: usize, k: usize, rng: &mut ChaCha8Rng) -> Vec<f32> {
    let n = data.len() / dims;
    let row = |i: usize| &data[i * dims..(i + 1) * dims];
    let mut centroids = Vec::with_capacity(k * dims);
    centroids.extend_from_slice(row(rng.random_range(0..n)));
    let mut d2: Vec<f64> = (0..n).map(|i| l2_squared(row(i), &centroids[..dims]) as f64).collect();
    for _ in 1..k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &d) in d2.iter().enumerate() {
                if target < d {
                    chosen = i;
                    break;
                }
                target -= d;
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        let c = row(pick).to_vec();
        d2.par_iter_mut().enumerate().for_each(|(i, d)| {
            let nd = l2_squared(row(i), &c) as f64;
            if nd < *d {
                *d = nd;
            }
        });
        centroids.extend_from_slice(&c);
    }
    centroids
}

/// k-means++ seeding then up to [`MAX_ITERATIONS`] Lloyd steps, all from
/// `seed`. Empty clusters take the point of the largest cluster farthest
/// from its centroid. Deterministic regardless of thread count.
pub fn kmeans(data: &[f32], dims: usize, k: usize, seed: u64) -> Vec<f32> {
    let n = data.len() / dims;
    assert!(k >= 1 && n >= k);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = plus_plus(data, dims, k, &mut rng);
    let mut prev: Vec<usize> = Vec::new();
    for _ in 0..MAX_ITERATIONS {
        let assigned = assign(data, dims, &centroids);
        let labels: Vec<usize> = assigned.iter().map(|a| a.0).collect();
        if labels == prev {
            break;
        }

        let partials: Vec<(Vec<f64>, Vec<usize>)> = (0..n)
            .collect::<Vec<_>>()
            .par_chunks(BLOCK)
            .map(|idx| {
                let mut sums = vec![0.0f64; k * dims];
                let mut counts = vec![0usize; k];
                for &i in idx {
                    let c = labels[i];
                    counts[c] += 1;
                    for (s, &x) in sums[c * dims..(c + 1) * dims].iter_mut().zip(&data[i * dims..(i + 1) * dims]) {
                        *s += x as f64;
                    }
                }
                (sums, counts)
            })
            .collect();
        let mut sums = vec![0.0f64; k * dims];
        let mut counts = vec![0usize; k];
        for (s, c) in &partials {
            sums.iter_mut().zip(s).for_each(|(a, b)| *a += b);
            counts.iter_mut().zip(c).for_each(|(a, b)| *a += b);
        }
        for c in 0..k {
            if counts[c] > 0 {
                for d in 0..dims {
                    centroids[c * dims + d] = (sums[c * dims + d] / counts[c] as f64) as f32;
                }
            }
        }
        let mut labels = labels;
        for c in 0..k {
            if counts[c] > 0 {
                continue;
            }
            let largest = (0..k).max_by(|&a, &b| counts[a].cmp(&counts[b]).then(b.cmp(&a))).unwrap();
            let far = (0..n)
                .filter(|&i| labels[i] == largest)
                .map(|i| (i, l2_squared(&data[i * dims..(i + 1) * dims], &centroids[largest * dims..(largest + 1) * dims])))
                .fold((usize::MAX, -1.0f32), |best, (i, d)| if d > best.1 { (i, d) } else { best });
            if far.0 == usize::MAX {
                continue;
            }
            let point = data[far.0 * dims..(far.0 + 1) * dims].to_vec();
            centroids[c * dims..(c + 1) * dims].copy_from_slice(&point);
            counts[largest] -= 1;
            counts[c] = 1;
            labels[far.0] = c;
        }
        prev = labels;
    }
    centroids
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, Normal};

    pub(crate) fn blobs(per: usize, dims: usize, seed: u64) -> (Vec<f32>, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, 0.1).unwrap();
        let mut data = Vec::new();
        let mut labels = Vec::new();
        for b in 0..4 {
            for _ in 0..per {
                for d in 0..dims {
                    let center = if d == b { 10.0 } else { 0.0 };
                    data.push(center + noise.sample(&mut rng) as f32);
                }
                labels.push(b);
            }
        }
        (data, labels)
    }

    #[test]
    fn separates_blobs() {
        let (data, truth) = blobs(200, 8, 1);
        let c = kmeans(&data, 8, 4, 3);
        let labels: Vec<usize> = assign(&data, 8, &c).iter().map(|a| a.0).collect();
        for b in 0..4 {
            let members: Vec<usize> = (0..truth.len()).filter(|&i| truth[i] == b).map(|i| labels[i]).collect();
            assert!(members.iter().all(|&l| l == members[0]));
        }
        let mut distinct: Vec<usize> = labels.clone();
        distinct.sort_unstable();
        distinct.dedup();
        assert_eq!(distinct.len(), 4);
    }

    #[test]
    fn deterministic() {
        let (data, _) = blobs(100, 8, 2);
        assert_eq!(kmeans(&data, 8, 6, 9), kmeans(&data, 8, 6, 9));
    }

    #[test]
    fn duplicate_points_do_not_leave_empty_clusters_unfilled() {
        let mut data = vec![0.0f32; 50 * 2];
        data.extend([5.0, 5.0, 6.0, 6.0, 7.0, 7.0]);
        let c = kmeans(&data, 2, 3, 0);
        assert_eq!(c.len(), 6);
        assert!(c.iter().all(|v| v.is_finite()));
    }
}
