use std::cmp::Ordering;

use rayon::prelude::*;

use super::{dot, AlgError};
use crate::EmbeddingMatrix;

/// Exact k-nearest-neighbor lists by dot-product similarity.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NeighborGraph {
    k: usize,
    n: usize,
    indices: Vec<usize>,
}

impl NeighborGraph {
    /// Builds a graph from explicit rows, checking that no row holds its own
    /// index, a duplicate, or an out-of-range index.
    pub fn from_rows(rows: Vec<Vec<usize>>) -> Result<Self, AlgError> {
        let n = rows.len();
        let k = rows.first().map_or(0, Vec::len);
        if k == 0 {
            return Err(AlgError::InvalidArgument("neighbor rows must be non-empty".into()));
        }
        let mut indices = Vec::with_capacity(n * k);
        for (i, row) in rows.into_iter().enumerate() {
            if row.len() != k {
                return Err(AlgError::InvalidArgument(format!(
                    "row {i} has {} neighbors, expected {k}",
                    row.len()
                )));
            }
            for (p, &j) in row.iter().enumerate() {
                if j >= n || j == i || row[..p].contains(&j) {
                    return Err(AlgError::InvalidArgument(format!(
                        "row {i} has invalid neighbor {j}"
                    )));
                }
            }
            indices.extend(row);
        }
        Ok(NeighborGraph { k, n, indices })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Neighbors of `i`, most similar first.
    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.indices[i * self.k..(i + 1) * self.k]
    }
}

/// Order: higher similarity first, then lower index.
fn by_similarity(a: &(f64, usize), b: &(f64, usize)) -> Ordering {
    b.0.partial_cmp(&a.0)
        .unwrap_or(Ordering::Equal)
        .then(a.1.cmp(&b.1))
}

pub fn knn_graph(points: &EmbeddingMatrix, k: usize) -> Result<NeighborGraph, AlgError> {
    let n = points.n();
    if k == 0 || k + 1 > n {
        return Err(AlgError::KTooLarge {
            k,
            n,
            max: n.saturating_sub(1),
        });
    }
    let rows: Vec<Vec<usize>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let query = points.row(i);
            let mut sims: Vec<(f64, usize)> = points
                .rows()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(j, row)| (dot(query, row), j))
                .collect();
            if k < sims.len() {
                sims.select_nth_unstable_by(k - 1, by_similarity);
                sims.truncate(k);
            }
            sims.sort_by(by_similarity);
            sims.into_iter().map(|(_, j)| j).collect()
        })
        .collect();
    Ok(NeighborGraph {
        k,
        n,
        indices: rows.concat(),
    })
}

/// Largest number of neighbor lists any single node appears in.
pub fn max_in_degree(g: &NeighborGraph) -> usize {
    let mut counts = vec![0usize; g.n];
    for &j in &g.indices {
        counts[j] += 1;
    }
    counts.into_iter().max().unwrap_or(0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain() -> EmbeddingMatrix {
        EmbeddingMatrix::from_rows(&[[1.0f32, 0.0], [0.9806, 0.1961], [0.0, 1.0]]).unwrap()
    }

    #[test]
    fn three_point_chain() {
        // a·b = 0.9806, a·c = 0, b·c = 0.1961
        let g = knn_graph(&chain(), 1).unwrap();
        assert_eq!(g.neighbors(0), &[1]);
        assert_eq!(g.neighbors(1), &[0]);
        assert_eq!(g.neighbors(2), &[1]);
        assert_eq!(max_in_degree(&g), 2);
    }

    #[test]
    fn full_k_is_a_permutation_of_others() {
        let m = chain();
        let g = knn_graph(&m, 2).unwrap();
        for i in 0..3 {
            let mut row = g.neighbors(i).to_vec();
            row.sort();
            let expected: Vec<usize> = (0..3).filter(|&j| j != i).collect();
            assert_eq!(row, expected);
        }
        assert_eq!(max_in_degree(&g), 2);
    }

    #[test]
    fn duplicates_pick_each_other() {
        let m = EmbeddingMatrix::from_rows(&[[0.6f32, 0.8], [0.6, 0.8], [0.6, 0.8]]).unwrap();
        let g = knn_graph(&m, 1).unwrap();
        assert_eq!(g.neighbors(0), &[1]);
        assert_eq!(g.neighbors(1), &[0]);
        assert_eq!(g.neighbors(2), &[0]);
    }

    #[test]
    fn mutual_pairs_have_in_degree_one() {
        let m = EmbeddingMatrix::from_rows(&[[1.0f32, 0.0], [0.99, 0.1], [-1.0, 0.0], [-0.99, -0.1]]).unwrap();
        let g = knn_graph(&m, 1).unwrap();
        assert_eq!(max_in_degree(&g), 1);
    }

    #[test]
    fn k_out_of_range() {
        let m = chain();
        assert!(matches!(knn_graph(&m, 3), Err(AlgError::KTooLarge { .. })));
        assert!(matches!(knn_graph(&m, 0), Err(AlgError::KTooLarge { .. })));
    }

    #[test]
    fn from_rows_validates() {
        assert!(NeighborGraph::from_rows(vec![vec![1], vec![0]]).is_ok());
        assert!(NeighborGraph::from_rows(vec![vec![0], vec![0]]).is_err());
        assert!(NeighborGraph::from_rows(vec![vec![1, 1], vec![0, 0]]).is_err());
        assert!(NeighborGraph::from_rows(vec![vec![5], vec![0]]).is_err());
    }
}
