//! Linear + softmax cluster head: k-means initialisation, the three
//! training losses with analytic gradients, and the training loop.

mod checkpoint;
mod loss;
mod train;

pub use checkpoint::{read_checkpoint, write_checkpoint, CheckpointMeta};
pub use loss::{
    batch_objective, loss_balance, loss_image_consistency, loss_image_semantic, sample_partners,
    total_loss_and_grad, BatchEval, Gradient, LossWeights, DOT_FLOOR,
};
pub use train::{train, EpochRecord, OptimizerKind, TrainConfig, TrainOutcome, TrainTrace};

use rayon::prelude::*;
use thiserror::Error;

use crate::corealg::{argmax, AlgError, KMeans, KMeansResult};
use crate::embedstore::StoreError;
use crate::pseudolab::PseudoError;
use crate::semspace::SemError;
use crate::{EmbeddingMatrix, LabelVector};

#[derive(Debug, Error)]
pub enum HeadError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("size mismatch: {0} vs {1}")]
    SizeMismatch(usize, usize),
    #[error("invalid soft assignment: {0}")]
    InvalidAssignment(String),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error(transparent)]
    Alg(#[from] AlgError),
    #[error(transparent)]
    Pseudo(#[from] PseudoError),
    #[error(transparent)]
    Sem(#[from] SemError),
    #[error(transparent)]
    Store(#[from] StoreError),
}

/// Row-stochastic `n × c` matrix of cluster probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftAssignment {
    n: usize,
    c: usize,
    q: Vec<f64>,
}

impl SoftAssignment {
    pub fn new(n: usize, c: usize, q: Vec<f64>) -> Result<Self, HeadError> {
        if n == 0 || c == 0 || q.len() != n * c {
            return Err(HeadError::InvalidAssignment(format!(
                "{} values cannot form a {n}x{c} assignment",
                q.len()
            )));
        }
        for (i, row) in q.chunks_exact(c).enumerate() {
            if row.iter().any(|v| !v.is_finite() || *v < 0.0 || *v > 1.0) {
                return Err(HeadError::InvalidAssignment(format!("row {i} has entries outside [0,1]")));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-6 {
                return Err(HeadError::InvalidAssignment(format!("row {i} sums to {sum}")));
            }
        }
        Ok(SoftAssignment { n, c, q })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn c(&self) -> usize {
        self.c
    }

    pub fn get(&self, i: usize, l: usize) -> f64 {
        self.q[i * self.c + l]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.q[i * self.c..(i + 1) * self.c]
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'_, f64> {
        self.q.chunks_exact(self.c)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.q
    }

    /// Mean of every column.
    pub fn column_means(&self) -> Vec<f64> {
        let mut mean = vec![0.0; self.c];
        for row in self.rows() {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= self.n as f64);
        mean
    }
}

/// Weights `W` (`c × d`, row-major), bias `b` and the temperature used at
/// initialisation.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterHeadParams {
    c: usize,
    d: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub temperature: f64,
}

impl ClusterHeadParams {
    pub fn new(c: usize, d: usize, weights: Vec<f64>, bias: Vec<f64>, temperature: f64) -> Result<Self, HeadError> {
        if c == 0 || d == 0 {
            return Err(HeadError::InvalidParams(format!("c={c}, d={d}")));
        }
        if weights.len() != c * d || bias.len() != c {
            return Err(HeadError::InvalidParams(format!(
                "W has {} values and b has {} for c={c}, d={d}",
                weights.len(),
                bias.len()
            )));
        }
        if weights.iter().chain(&bias).any(|v| !v.is_finite()) {
            return Err(HeadError::InvalidParams("non-finite weight or bias".into()));
        }
        if !(temperature > 0.0 && temperature.is_finite()) {
            return Err(HeadError::InvalidParams(format!("temperature {temperature} must be > 0")));
        }
        Ok(ClusterHeadParams {
            c,
            d,
            weights,
            bias,
            temperature,
        })
    }

    pub fn zeros(c: usize, d: usize) -> Self {
        ClusterHeadParams::new(c, d, vec![0.0; c * d], vec![0.0; c], 1.0).expect("valid shape")
    }

    /// `W = 2τ·R`, `b_l = −τ‖r_l‖²`.
    pub fn from_centers(centers: &EmbeddingMatrix, temperature: f64) -> Result<Self, HeadError> {
        if !(temperature > 0.0 && temperature.is_finite()) {
            return Err(HeadError::InvalidParams(format!("temperature {temperature} must be > 0")));
        }
        let (c, d) = (centers.n(), centers.d());
        let mut weights = Vec::with_capacity(c * d);
        let mut bias = Vec::with_capacity(c);
        for r in centers.rows() {
            let r: Vec<f64> = r.iter().map(|&v| v as f64).collect();
            weights.extend(r.iter().map(|v| 2.0 * temperature * v));
            bias.push(-temperature * r.iter().map(|v| v * v).sum::<f64>());
        }
        ClusterHeadParams::new(c, d, weights, bias, temperature)
    }

    pub fn c(&self) -> usize {
        self.c
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn weight_row(&self, l: usize) -> &[f64] {
        &self.weights[l * self.d..(l + 1) * self.d]
    }

    /// `W u + b`.
    pub fn logits(&self, u: &[f32]) -> Vec<f64> {
        let mut z = vec![0.0; self.c];
        self.logits_into(u, &mut z);
        z
    }

    pub(crate) fn logits_into(&self, u: &[f32], z: &mut [f64]) {
        for (l, zl) in z.iter_mut().enumerate() {
            let dot: f64 = self
                .weight_row(l)
                .iter()
                .zip(u)
                .map(|(w, &x)| w * (x as f64))
                .sum();
            *zl = dot + self.bias[l];
        }
    }

    fn check_dim(&self, images: &EmbeddingMatrix) -> Result<(), HeadError> {
        if images.d() != self.d {
            return Err(HeadError::DimensionMismatch {
                expected: self.d,
                got: images.d(),
            });
        }
        Ok(())
    }
}

/// Max-subtracted softmax.
pub fn softmax(z: &[f64]) -> Vec<f64> {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = z.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Log-softmax via log-sum-exp.
pub fn log_softmax(z: &[f64]) -> Vec<f64> {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    z.iter().map(|v| v - lse).collect()
}

/// Runs k-means on the images and builds the head from its centers.
pub fn init_kmeansnet(
    images: &EmbeddingMatrix,
    c: usize,
    temperature: f64,
    seed: u64,
) -> Result<ClusterHeadParams, HeadError> {
    Ok(init_kmeansnet_with(images, c, temperature, seed, &KMeans::default())?.0)
}

pub fn init_kmeansnet_with(
    images: &EmbeddingMatrix,
    c: usize,
    temperature: f64,
    seed: u64,
    kmeans: &KMeans,
) -> Result<(ClusterHeadParams, KMeansResult), HeadError> {
    if !(temperature > 0.0 && temperature.is_finite()) {
        return Err(HeadError::InvalidParams(format!("temperature {temperature} must be > 0")));
    }
    let km = kmeans.fit(images, c, seed)?;
    Ok((ClusterHeadParams::from_centers(&km.centers, temperature)?, km))
}

pub fn forward(params: &ClusterHeadParams, images: &EmbeddingMatrix) -> Result<SoftAssignment, HeadError> {
    params.check_dim(images)?;
    let c = params.c;
    let rows: Vec<Vec<f64>> = (0..images.n())
        .into_par_iter()
        .map(|i| softmax(&params.logits(images.row(i))))
        .collect();
    Ok(SoftAssignment {
        n: images.n(),
        c,
        q: rows.concat(),
    })
}

/// Hard labels by row argmax. The argmax is taken on the logits, which
/// orders classes exactly as the softmax does but cannot collapse nearly
/// equal probabilities into a false tie.
pub fn predict(params: &ClusterHeadParams, images: &EmbeddingMatrix) -> Result<LabelVector, HeadError> {
    params.check_dim(images)?;
    let labels: Vec<usize> = (0..images.n())
        .into_par_iter()
        .map(|i| argmax(&params.logits(images.row(i))))
        .collect();
    Ok(LabelVector::new(labels, params.c)?)
}
