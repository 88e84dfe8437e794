use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Rating, RatingMatrix};
use crate::error::{Error, Result};

/// Which side of the rating matrix to cluster.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    Users,
    Items,
}

impl FromStr for Axis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "users" | "user" => Ok(Axis::Users),
            "items" | "item" => Ok(Axis::Items),
            other => Err(Error::InvalidArgument(format!(
                "unknown axis {other:?} (expected users or items)"
            ))),
        }
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Axis::Users => "users",
            Axis::Items => "items",
        })
    }
}

/// Dense symmetric similarity matrix with unit diagonal and weights in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct AffinityMatrix {
    weights: DMatrix<f64>,
}

impl AffinityMatrix {
    /// Wraps a row-major `size x size` table after checking symmetry and range.
    pub fn from_row_major(size: usize, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != size * size {
            return Err(Error::DimensionMismatch(format!(
                "{} weights for a {size}x{size} affinity",
                weights.len()
            )));
        }
        let m = DMatrix::from_row_slice(size, size, &weights);
        for i in 0..size {
            for j in 0..size {
                let w = m[(i, j)];
                if !(0.0..=1.0).contains(&w) {
                    return Err(Error::InvalidArgument(format!(
                        "affinity weight {w} at ({i}, {j}) outside [0, 1]"
                    )));
                }
                if w != m[(j, i)] {
                    return Err(Error::InvalidArgument(format!(
                        "affinity not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        Ok(AffinityMatrix { weights: m })
    }

    pub fn size(&self) -> usize {
        self.weights.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.weights[(i, j)]
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.weights
    }
}

/// Similarity between two rows given their item-sorted ratings.
fn row_similarity(a: &[Rating], b: &[Rating]) -> f64 {
    let (mut p, mut q) = (0, 0);
    let mut common = 0usize;
    let mut sq = 0.0f64;
    while p < a.len() && q < b.len() {
        match a[p].item.cmp(&b[q].item) {
            std::cmp::Ordering::Less => p += 1,
            std::cmp::Ordering::Greater => q += 1,
            std::cmp::Ordering::Equal => {
                let d = a[p].value as f64 - b[q].value as f64;
                sq += d * d;
                common += 1;
                p += 1;
                q += 1;
            }
        }
    }
    if common == 0 {
        return 0.0;
    }
    let union = a.len() + b.len() - common;
    (common as f64 / union as f64) / (1.0 + sq.sqrt())
}

/// Edge weight between users `i` and `j`.
pub fn edge_weight(y: &RatingMatrix, i: usize, j: usize) -> Result<f64> {
    y.check_user(i)?;
    y.check_user(j)?;
    if i == j {
        return Err(Error::InvalidArgument(format!(
            "self edge ({i}, {i}) has no weight; the diagonal is fixed at 1"
        )));
    }
    Ok(row_similarity(y.user_ratings(i), y.user_ratings(j)))
}

/// Affinity between all users (or, for [`Axis::Items`], all items).
pub fn build_affinity(y: &RatingMatrix, axis: Axis) -> Result<AffinityMatrix> {
    let transposed;
    let rows = match axis {
        Axis::Users => y,
        Axis::Items => {
            transposed = y.transpose();
            &transposed
        }
    };
    let n = rows.n_users();
    let empty: Vec<usize> = (0..n).filter(|&u| rows.user_count(u) == 0).collect();
    if !empty.is_empty() {
        return Err(Error::NoRatings {
            what: match axis {
                Axis::Users => "users",
                Axis::Items => "items",
            },
            indices: empty,
        });
    }

    let upper: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let ri = rows.user_ratings(i);
            (i + 1..n)
                .map(|j| row_similarity(ri, rows.user_ratings(j)))
                .collect()
        })
        .collect();

    let mut weights = DMatrix::<f64>::identity(n, n);
    for (i, row) in upper.into_iter().enumerate() {
        for (off, w) in row.into_iter().enumerate() {
            let j = i + 1 + off;
            weights[(i, j)] = w;
            weights[(j, i)] = w;
        }
    }
    Ok(AffinityMatrix { weights })
}
