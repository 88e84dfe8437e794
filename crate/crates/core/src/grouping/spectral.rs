use nalgebra::{DMatrix, SymmetricEigen};

use super::affinity::AffinityMatrix;
use super::kmeans::{kmeans, KMeansConfig};
use super::partition::Partition;
use crate::error::{Error, Result};

/// Row-normalized embedding of the `k` leading eigenvectors of
/// `D^{-1/2} A D^{-1/2}`, as a row-major `size x k` table.
///
/// Vertices with zero degree get a zero scaling and hence a zero row.
pub fn spectral_embedding(a: &AffinityMatrix, k: usize) -> Result<Vec<f64>> {
    let n = a.size();
    if k == 0 || k > n {
        return Err(Error::InvalidArgument(format!(
            "cannot take {k} eigenvectors of a {n}x{n} affinity"
        )));
    }
    let w = a.as_matrix();
    let scale: Vec<f64> = (0..n)
        .map(|i| {
            let degree: f64 = w.row(i).iter().sum();
            if degree > 0.0 {
                1.0 / degree.sqrt()
            } else {
                0.0
            }
        })
        .collect();
    let normalized = DMatrix::from_fn(n, n, |i, j| scale[i] * w[(i, j)] * scale[j]);
    let eig = SymmetricEigen::new(normalized);

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| {
        eig.eigenvalues[y]
            .total_cmp(&eig.eigenvalues[x])
            .then(x.cmp(&y))
    });

    let mut embedding = vec![0.0f64; n * k];
    for (col, &e) in order.iter().take(k).enumerate() {
        let v = eig.eigenvectors.column(e);
        for i in 0..n {
            embedding[i * k + col] = v[i];
        }
    }
    for row in embedding.chunks_exact_mut(k) {
        let norm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            row.iter_mut().for_each(|x| *x /= norm);
        }
    }
    Ok(embedding)
}

/// Partitions the affinity graph into `k` clusters: seeded k-means on the
/// normalized spectral embedding. Clusters are labeled canonically (in
/// order of their smallest member).
pub fn spectral_partition(a: &AffinityMatrix, k: usize, seed: u64) -> Result<Partition> {
    let n = a.size();
    if k == 0 || k > n {
        return Err(Error::InvalidArgument(format!(
            "cannot form {k} clusters from {n} entities"
        )));
    }
    if k == n {
        return Ok(Partition::singletons(n));
    }
    if k == 1 {
        return Ok(Partition::single_cluster(n));
    }
    let embedding = spectral_embedding(a, k)?;
    let labels = kmeans(&embedding, k, k, seed, KMeansConfig::default())?;
    Ok(Partition::from_assignment(labels, k)?.canonical())
}
