//! Clustering evaluation: Hungarian-matched accuracy, NMI and ARI.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::LabelVector;

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("label vectors differ in length: {0} vs {1}")]
    SizeMismatch(usize, usize),
    #[error("metric needs at least {0} samples")]
    TooFewSamples(usize),
}

/// Co-occurrence counts, predicted classes by true classes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContingencyTable {
    rows: usize,
    cols: usize,
    counts: Vec<u64>,
    n: u64,
}

impl ContingencyTable {
    pub fn new(pred: &LabelVector, truth: &LabelVector) -> Result<Self, MetricError> {
        if pred.len() != truth.len() {
            return Err(MetricError::SizeMismatch(pred.len(), truth.len()));
        }
        let rows = pred.num_classes();
        let cols = truth.num_classes();
        let mut counts = vec![0u64; rows * cols];
        for (&p, &t) in pred.labels().iter().zip(truth.labels()) {
            counts[p * cols + t] += 1;
        }
        Ok(ContingencyTable {
            rows,
            cols,
            counts,
            n: pred.len() as u64,
        })
    }

    pub fn get(&self, pred: usize, truth: usize) -> u64 {
        self.counts[pred * self.cols + truth]
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    fn row_sums(&self) -> Vec<u64> {
        self.counts.chunks_exact(self.cols).map(|r| r.iter().sum()).collect()
    }

    fn col_sums(&self) -> Vec<u64> {
        (0..self.cols)
            .map(|j| (0..self.rows).map(|i| self.get(i, j)).sum())
            .collect()
    }
}

/// Minimum-cost perfect matching on a square matrix (Kuhn–Munkres with
/// potentials, O(s³)). Returns `assignment[row] = col`.
pub fn linear_assignment(cost: &[Vec<i64>]) -> Vec<usize> {
    let s = cost.len();
    if s == 0 {
        return Vec::new();
    }
    // 1-based arrays; index 0 is the virtual start column.
    let mut u = vec![0i64; s + 1];
    let mut v = vec![0i64; s + 1];
    let mut p = vec![0usize; s + 1];
    let mut way = vec![0usize; s + 1];
    for i in 1..=s {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![i64::MAX; s + 1];
        let mut used = vec![false; s + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = i64::MAX;
            let mut j1 = 0;
            for j in 1..=s {
                if used[j] {
                    continue;
                }
                let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=s {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0; s];
    for j in 1..=s {
        if p[j] != 0 {
            assignment[p[j] - 1] = j - 1;
        }
    }
    assignment
}

/// Best one-to-one mapping from predicted to true classes, as
/// `mapping[pred] = truth` over the zero-padded square table.
pub fn best_class_mapping(table: &ContingencyTable) -> Vec<usize> {
    let s = table.rows.max(table.cols);
    let cost: Vec<Vec<i64>> = (0..s)
        .map(|i| {
            (0..s)
                .map(|j| {
                    if i < table.rows && j < table.cols {
                        -(table.get(i, j) as i64)
                    } else {
                        0
                    }
                })
                .collect()
        })
        .collect();
    linear_assignment(&cost)
}

pub fn hungarian_accuracy(pred: &LabelVector, truth: &LabelVector) -> Result<f64, MetricError> {
    let table = ContingencyTable::new(pred, truth)?;
    if table.n == 0 {
        return Err(MetricError::TooFewSamples(1));
    }
    let mapping = best_class_mapping(&table);
    let matched: u64 = (0..table.rows).map(|i| {
        let j = mapping[i];
        if j < table.cols { table.get(i, j) } else { 0 }
    }).sum();
    Ok(matched as f64 / table.n as f64)
}

fn entropy(sums: &[u64], n: f64) -> f64 {
    sums.iter()
        .filter(|&&s| s > 0)
        .map(|&s| {
            let p = s as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// Mutual information normalized by the geometric mean of the two
/// entropies (natural log).
pub fn nmi(pred: &LabelVector, truth: &LabelVector) -> Result<f64, MetricError> {
    let table = ContingencyTable::new(pred, truth)?;
    if table.n == 0 {
        return Err(MetricError::TooFewSamples(1));
    }
    let n = table.n as f64;
    let rows = table.row_sums();
    let cols = table.col_sums();
    let h_pred = entropy(&rows, n);
    let h_truth = entropy(&cols, n);
    if h_pred == 0.0 && h_truth == 0.0 {
        // Both labelings put everything in one class.
        return Ok(1.0);
    }
    if h_pred == 0.0 || h_truth == 0.0 {
        return Ok(0.0);
    }
    let mut mi = 0.0;
    for i in 0..table.rows {
        for j in 0..table.cols {
            let nij = table.get(i, j);
            if nij == 0 {
                continue;
            }
            let nij = nij as f64;
            mi += nij / n * (n * nij / (rows[i] as f64 * cols[j] as f64)).ln();
        }
    }
    Ok((mi / (h_pred * h_truth).sqrt()).clamp(0.0, 1.0))
}

fn pairs(x: u64) -> f64 {
    (x as f64) * (x.saturating_sub(1) as f64) / 2.0
}

/// Adjusted Rand index (Hubert–Arabie).
pub fn ari(pred: &LabelVector, truth: &LabelVector) -> Result<f64, MetricError> {
    let table = ContingencyTable::new(pred, truth)?;
    if table.n < 2 {
        return Err(MetricError::TooFewSamples(2));
    }
    let index: f64 = table.counts.iter().map(|&c| pairs(c)).sum();
    let sum_rows: f64 = table.row_sums().into_iter().map(pairs).sum();
    let sum_cols: f64 = table.col_sums().into_iter().map(pairs).sum();
    let expected = sum_rows * sum_cols / pairs(table.n);
    let max_index = (sum_rows + sum_cols) / 2.0;
    if max_index == expected {
        // Both partitions trivial (all-in-one or all-singletons).
        return Ok(1.0);
    }
    Ok((index - expected) / (max_index - expected))
}

/// `{acc, nmi, ari, n, c}` as written to metrics JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub acc: f64,
    pub nmi: f64,
    pub ari: f64,
    pub n: usize,
    pub c: usize,
}

pub fn evaluate(pred: &LabelVector, truth: &LabelVector) -> Result<MetricsReport, MetricError> {
    Ok(MetricsReport {
        acc: hungarian_accuracy(pred, truth)?,
        nmi: nmi(pred, truth)?,
        ari: ari(pred, truth)?,
        n: pred.len(),
        c: pred.num_classes(),
    })
}
