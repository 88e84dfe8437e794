use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KMeansConfig {
    pub max_iters: usize,
    /// Stop once the total centroid shift is at most this fraction of the
    /// total centroid norm.
    pub tolerance: f64,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        KMeansConfig {
            max_iters: 300,
            tolerance: 1e-6,
        }
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Index of the nearest centroid; ties go to the lowest index.
fn nearest(point: &[f64], centroids: &[f64], dim: usize) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, centroid) in centroids.chunks_exact(dim).enumerate() {
        let d = sq_dist(point, centroid);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn plus_plus_init(points: &[f64], dim: usize, k: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let n = points.len() / dim;
    let row = |i: usize| &points[i * dim..(i + 1) * dim];
    let mut centroids = Vec::with_capacity(k * dim);
    let mut chosen = vec![false; n];

    let first = rng.gen_range(0..n);
    chosen[first] = true;
    centroids.extend_from_slice(row(first));
    let mut dist: Vec<f64> = (0..n).map(|i| sq_dist(row(i), row(first))).collect();

    while centroids.len() < k * dim {
        let total: f64 = dist.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.gen::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = None;
            for (i, &d) in dist.iter().enumerate() {
                acc += d;
                if d > 0.0 && acc >= target {
                    pick = Some(i);
                    break;
                }
            }
            // rounding can leave `acc` just short of `target`
            pick.unwrap_or_else(|| dist.iter().rposition(|&d| d > 0.0).unwrap())
        } else {
            // fewer distinct points than clusters
            chosen.iter().position(|&c| !c).unwrap_or(0)
        };
        chosen[pick] = true;
        centroids.extend_from_slice(row(pick));
        for (i, d) in dist.iter_mut().enumerate() {
            *d = d.min(sq_dist(row(i), row(pick)));
        }
    }
    centroids
}

/// Seeded Lloyd's k-means with k-means++ initialization over the rows of a
/// row-major `n x dim` table. Returns one label per row; every label in
/// `0..k` is used.
pub fn kmeans(points: &[f64], dim: usize, k: usize, seed: u64, cfg: KMeansConfig) -> Result<Vec<usize>> {
    if dim == 0 || !points.len().is_multiple_of(dim) {
        return Err(Error::DimensionMismatch(format!(
            "{} values do not form rows of width {dim}",
            points.len()
        )));
    }
    let n = points.len() / dim;
    if k == 0 || k > n {
        return Err(Error::InvalidArgument(format!(
            "cannot form {k} clusters from {n} points"
        )));
    }
    let row = |i: usize| &points[i * dim..(i + 1) * dim];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = plus_plus_init(points, dim, k, &mut rng);
    let mut labels = vec![0usize; n];
    let mut dists = vec![0.0f64; n];
    let mut reseeds_left = k;

    let assign = |centroids: &[f64], labels: &mut [usize], dists: &mut [f64]| {
        for i in 0..n {
            let (c, d) = nearest(row(i), centroids, dim);
            labels[i] = c;
            dists[i] = d;
        }
    };

    // Moves the farthest point of a multi-member cluster into each empty one.
    let fill_empty = |centroids: &mut [f64],
                          labels: &mut [usize],
                          dists: &mut [f64],
                          reseeds_left: &mut usize|
     -> Result<()> {
        loop {
            let mut counts = vec![0usize; k];
            for &l in labels.iter() {
                counts[l] += 1;
            }
            let Some(empty) = counts.iter().position(|&c| c == 0) else {
                return Ok(());
            };
            if *reseeds_left == 0 {
                return Err(Error::Clustering(format!(
                    "cluster {empty} stayed empty after {k} re-seeds"
                )));
            }
            *reseeds_left -= 1;
            let far = (0..n)
                .filter(|&i| counts[labels[i]] > 1)
                .fold(None::<usize>, |best, i| match best {
                    Some(b) if dists[b] >= dists[i] => Some(b),
                    _ => Some(i),
                })
                .ok_or_else(|| Error::Clustering("no point available to re-seed".into()))?;
            centroids[empty * dim..(empty + 1) * dim].copy_from_slice(row(far));
            labels[far] = empty;
            dists[far] = 0.0;
        }
    };

    assign(&centroids, &mut labels, &mut dists);
    for _ in 0..cfg.max_iters {
        fill_empty(&mut centroids, &mut labels, &mut dists, &mut reseeds_left)?;

        let mut sums = vec![0.0f64; k * dim];
        let mut counts = vec![0usize; k];
        for i in 0..n {
            let c = labels[i];
            counts[c] += 1;
            for (s, x) in sums[c * dim..(c + 1) * dim].iter_mut().zip(row(i)) {
                *s += x;
            }
        }
        let mut shift = 0.0;
        let mut norm = 0.0;
        for c in 0..k {
            let inv = 1.0 / counts[c] as f64;
            for t in 0..dim {
                let old = centroids[c * dim + t];
                let new = sums[c * dim + t] * inv;
                shift += (new - old) * (new - old);
                norm += old * old;
                centroids[c * dim + t] = new;
            }
        }
        assign(&centroids, &mut labels, &mut dists);
        if shift.sqrt() <= cfg.tolerance * norm.sqrt() {
            break;
        }
    }
    fill_empty(&mut centroids, &mut labels, &mut dists, &mut reseeds_left)?;
    Ok(labels)
}
