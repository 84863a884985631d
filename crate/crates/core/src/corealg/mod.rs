//! Shared dense numerics: dot-product similarity, k-means and exact kNN.

mod kmeans;
mod knn;

pub use kmeans::{kmeans, KMeans, KMeansResult};
pub use knn::{knn_graph, max_in_degree, NeighborGraph};

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum AlgError {
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("cannot form {clusters} clusters from {points} points")]
    TooFewPoints { clusters: usize, points: usize },
    #[error("k = {k} is out of range for {n} points (need 1 <= k <= {max})")]
    KTooLarge { k: usize, n: usize, max: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

/// `Σ a_j b_j`, accumulated in f64.
pub fn dot_similarity(a: &[f32], b: &[f32]) -> Result<f64, AlgError> {
    if a.len() != b.len() {
        return Err(AlgError::DimensionMismatch(a.len(), b.len()));
    }
    Ok(dot(a, b))
}

#[inline]
pub(crate) fn dot(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| (x as f64) * (y as f64))
        .sum()
}

#[inline]
pub(crate) fn dot_f64(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub(crate) fn dot_mixed(a: &[f32], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(&x, y)| (x as f64) * y).sum()
}

#[inline]
pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Index of the row of `candidates` with the highest dot product with `query`.
pub(crate) fn nearest_row(query: &[f64], candidates: &crate::EmbeddingMatrix) -> usize {
    let mut best = 0;
    let mut best_sim = f64::NEG_INFINITY;
    for (j, row) in candidates.rows().enumerate() {
        let s = dot_mixed(row, query);
        if s > best_sim {
            best_sim = s;
            best = j;
        }
    }
    best
}
