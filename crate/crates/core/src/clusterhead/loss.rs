//! Training objective `L = L_I + β·L_IS + λ·L_B` and its gradient with
//! respect to the head's weights and bias.
//!
//! * `L_I` (neighbor consistency): `−mean log(q_iᵀ q_j)` with `j` drawn
//!   uniformly from the k nearest neighbors of `i`.
//! * `L_IS` (pseudo-label cross-entropy): `−mean log q_{i, p_i}`.
//! * `L_B` (balance): `Σ_l q̄_l log q̄_l` over the batch-mean assignment,
//!   i.e. negative entropy, smallest when clusters are used evenly.

use rand::Rng;

use super::{log_softmax, softmax, ClusterHeadParams, HeadError, SoftAssignment};
use crate::corealg::{dot_f64, NeighborGraph};
use crate::pseudolab::PseudoLabelSet;
use crate::EmbeddingMatrix;

/// Floor applied to `q_iᵀ q_j` before the log.
pub const DOT_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    /// λ, weight of the balance term.
    pub balance: f64,
    /// β, weight of the pseudo-label term.
    pub semantic: f64,
    /// Use `−Σ q̄ log q̄` instead (ablation only; rewards collapse).
    pub flip_balance_sign: bool,
}

impl LossWeights {
    pub fn new(balance: f64, semantic: f64) -> Self {
        LossWeights {
            balance,
            semantic,
            flip_balance_sign: false,
        }
    }

    fn balance_sign(&self) -> f64 {
        if self.flip_balance_sign {
            -1.0
        } else {
            1.0
        }
    }
}

/// Gradient of the objective, shaped like the head's parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Gradient {
    pub fn norm(&self) -> f64 {
        self.weights
            .iter()
            .chain(&self.bias)
            .map(|g| g * g)
            .sum::<f64>()
            .sqrt()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchEval {
    pub loss: f64,
    pub image_consistency: f64,
    pub image_semantic: f64,
    pub balance: f64,
    pub grad: Gradient,
}

/// One uniformly drawn neighbor per row.
pub fn sample_partners<R: Rng + ?Sized>(neighbors: &NeighborGraph, rows: &[usize], rng: &mut R) -> Vec<usize> {
    let k = neighbors.k();
    rows.iter()
        .map(|&i| neighbors.neighbors(i)[rng.random_range(0..k)])
        .collect()
}

/// Neighbor-consistency loss over all rows; returns the sampled partner of
/// every row alongside.
pub fn loss_image_consistency<R: Rng + ?Sized>(
    q: &SoftAssignment,
    neighbors: &NeighborGraph,
    rng: &mut R,
) -> Result<(f64, Vec<usize>), HeadError> {
    if q.n() != neighbors.n() {
        return Err(HeadError::SizeMismatch(q.n(), neighbors.n()));
    }
    let rows: Vec<usize> = (0..q.n()).collect();
    let partners = sample_partners(neighbors, &rows, rng);
    let total: f64 = rows
        .iter()
        .zip(&partners)
        .map(|(&i, &j)| dot_f64(q.row(i), q.row(j)).max(DOT_FLOOR).ln())
        .sum();
    Ok((-total / q.n() as f64, partners))
}

/// Mean cross-entropy between one-hot pseudo-labels and the assignment.
pub fn loss_image_semantic(q: &SoftAssignment, p: &PseudoLabelSet) -> Result<f64, HeadError> {
    if q.n() != p.len() {
        return Err(HeadError::SizeMismatch(q.n(), p.len()));
    }
    if q.c() != p.c {
        return Err(HeadError::SizeMismatch(q.c(), p.c));
    }
    let total: f64 = p
        .labels
        .iter()
        .enumerate()
        .map(|(i, &l)| -q.get(i, l).ln())
        .sum();
    Ok(total / q.n() as f64)
}

/// `Σ_l q̄_l log q̄_l` with `0 log 0 = 0`.
pub fn loss_balance(q: &SoftAssignment) -> f64 {
    q.column_means()
        .into_iter()
        .filter(|&m| m > 0.0)
        .map(|m| m * m.ln())
        .sum()
}

/// Loss and gradient on one batch with the neighbor pairing fixed.
///
/// `partners[t]` is the sampled neighbor of `batch[t]`; `pseudo[i]` is the
/// pseudo-label of image `i`. The neighbor's assignment is a function of
/// the parameters too, so the consistency gradient flows into both rows.
pub fn batch_objective(
    params: &ClusterHeadParams,
    images: &EmbeddingMatrix,
    batch: &[usize],
    partners: &[usize],
    pseudo: &[usize],
    weights: &LossWeights,
) -> Result<BatchEval, HeadError> {
    if batch.is_empty() {
        return Err(HeadError::Config("batch is empty".into()));
    }
    if batch.len() != partners.len() {
        return Err(HeadError::SizeMismatch(batch.len(), partners.len()));
    }
    if images.d() != params.d() {
        return Err(HeadError::DimensionMismatch {
            expected: params.d(),
            got: images.d(),
        });
    }
    if pseudo.len() != images.n() {
        return Err(HeadError::SizeMismatch(pseudo.len(), images.n()));
    }
    let (c, d) = (params.c(), params.d());
    let m = batch.len() as f64;

    let mut z = vec![0.0; c];
    let mut anchor_q = Vec::with_capacity(batch.len());
    let mut anchor_logq = Vec::with_capacity(batch.len());
    for &i in batch {
        params.logits_into(images.row(i), &mut z);
        anchor_q.push(softmax(&z));
        anchor_logq.push(log_softmax(&z));
    }
    let partner_q: Vec<Vec<f64>> = partners
        .iter()
        .map(|&j| {
            params.logits_into(images.row(j), &mut z);
            softmax(&z)
        })
        .collect();

    // Upstream gradients with respect to each row's probabilities.
    let mut g_anchor = vec![vec![0.0; c]; batch.len()];
    let mut g_partner = vec![vec![0.0; c]; batch.len()];

    let mut consistency = 0.0;
    for t in 0..batch.len() {
        let s = dot_f64(&anchor_q[t], &partner_q[t]);
        if s > DOT_FLOOR {
            consistency -= s.ln();
            for l in 0..c {
                g_anchor[t][l] -= partner_q[t][l] / (m * s);
                g_partner[t][l] -= anchor_q[t][l] / (m * s);
            }
        } else {
            consistency -= DOT_FLOOR.ln();
        }
    }
    consistency /= m;

    let mut semantic = 0.0;
    for (t, &i) in batch.iter().enumerate() {
        let label = pseudo[i];
        if label >= c {
            return Err(HeadError::SizeMismatch(label, c));
        }
        semantic -= anchor_logq[t][label];
    }
    semantic /= m;

    let mut mean_q = vec![0.0; c];
    for q in &anchor_q {
        for (a, v) in mean_q.iter_mut().zip(q) {
            *a += v / m;
        }
    }
    let sign = weights.balance_sign();
    let balance = sign
        * mean_q
            .iter()
            .filter(|&&v| v > 0.0)
            .map(|v| v * v.ln())
            .sum::<f64>();
    if weights.balance != 0.0 {
        let g_mean: Vec<f64> = mean_q
            .iter()
            .map(|&v| weights.balance * sign * (v.max(f64::MIN_POSITIVE).ln() + 1.0) / m)
            .collect();
        for g in g_anchor.iter_mut() {
            for (gl, gm) in g.iter_mut().zip(&g_mean) {
                *gl += gm;
            }
        }
    }

    let mut grad = Gradient {
        weights: vec![0.0; c * d],
        bias: vec![0.0; c],
    };
    let mut accumulate = |row: usize, dz: &[f64]| {
        let u = images.row(row);
        for l in 0..c {
            if dz[l] == 0.0 {
                continue;
            }
            grad.bias[l] += dz[l];
            for (gw, &x) in grad.weights[l * d..(l + 1) * d].iter_mut().zip(u) {
                *gw += dz[l] * x as f64;
            }
        }
    };
    let mut dz = vec![0.0; c];
    for (t, &i) in batch.iter().enumerate() {
        softmax_backward(&anchor_q[t], &g_anchor[t], &mut dz);
        // Cross-entropy through log-softmax: (q − onehot)/m.
        if weights.semantic != 0.0 {
            for l in 0..c {
                let target = if l == pseudo[i] { 1.0 } else { 0.0 };
                dz[l] += weights.semantic * (anchor_q[t][l] - target) / m;
            }
        }
        accumulate(i, &dz);
    }
    for (t, &j) in partners.iter().enumerate() {
        softmax_backward(&partner_q[t], &g_partner[t], &mut dz);
        accumulate(j, &dz);
    }

    let loss = consistency + weights.semantic * semantic + weights.balance * balance;
    if !loss.is_finite() {
        return Err(HeadError::Numeric(format!("batch loss is {loss}")));
    }
    Ok(BatchEval {
        loss,
        image_consistency: consistency,
        image_semantic: semantic,
        balance,
        grad,
    })
}

/// `dz = q ⊙ (g − gᵀq)`.
fn softmax_backward(q: &[f64], g: &[f64], dz: &mut [f64]) {
    let inner = dot_f64(g, q);
    for ((out, &ql), &gl) in dz.iter_mut().zip(q).zip(g) {
        *out = ql * (gl - inner);
    }
}

/// Draws a neighbor for every batch row, then evaluates [`batch_objective`].
#[allow(clippy::too_many_arguments)]
pub fn total_loss_and_grad<R: Rng + ?Sized>(
    params: &ClusterHeadParams,
    batch: &[usize],
    images: &EmbeddingMatrix,
    neighbors: &NeighborGraph,
    p: &PseudoLabelSet,
    lambda: f64,
    beta: f64,
    rng: &mut R,
) -> Result<BatchEval, HeadError> {
    if lambda < 0.0 || beta < 0.0 {
        return Err(HeadError::Config(format!("λ={lambda} and β={beta} must be >= 0")));
    }
    if neighbors.n() != images.n() {
        return Err(HeadError::SizeMismatch(neighbors.n(), images.n()));
    }
    let partners = sample_partners(neighbors, batch, rng);
    batch_objective(params, images, batch, &partners, &p.labels, &LossWeights::new(lambda, beta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pseudolab::Strategy;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn pls(labels: Vec<usize>, c: usize) -> PseudoLabelSet {
        PseudoLabelSet {
            labels,
            c,
            strategy: Strategy::CenterBased,
            epoch: 0,
        }
    }

    fn graph(n: usize) -> NeighborGraph {
        NeighborGraph::from_rows((0..n).map(|i| vec![(i + 1) % n]).collect()).unwrap()
    }

    #[test]
    fn consistency_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let onehot = SoftAssignment::new(3, 2, vec![1.0, 0.0, 1.0, 0.0, 1.0, 0.0]).unwrap();
        assert_eq!(loss_image_consistency(&onehot, &graph(3), &mut rng).unwrap().0, 0.0);

        let half = SoftAssignment::new(3, 2, vec![0.5; 6]).unwrap();
        let (l, partners) = loss_image_consistency(&half, &graph(3), &mut rng).unwrap();
        assert!((l - 2f64.ln()).abs() < 1e-15);
        assert_eq!(partners, vec![1, 2, 0]);

        let disjoint = SoftAssignment::new(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let (l, _) = loss_image_consistency(&disjoint, &graph(2), &mut rng).unwrap();
        assert!((l + DOT_FLOOR.ln()).abs() < 1e-12);
    }

    #[test]
    fn semantic_examples() {
        let q = SoftAssignment::new(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        assert_eq!(loss_image_semantic(&q, &pls(vec![0, 1], 2)).unwrap(), 0.0);
        let uniform = SoftAssignment::new(2, 3, vec![1.0 / 3.0; 6]).unwrap();
        assert!((loss_image_semantic(&uniform, &pls(vec![2, 0], 3)).unwrap() - 3f64.ln()).abs() < 1e-12);
        let q = SoftAssignment::new(1, 2, vec![0.9, 0.1]).unwrap();
        let l = loss_image_semantic(&q, &pls(vec![1], 2)).unwrap();
        assert!((l - 2.302585).abs() < 1e-6);
        assert!(loss_image_semantic(&q, &pls(vec![1, 0], 2)).is_err());
    }

    #[test]
    fn balance_examples() {
        let uniform = SoftAssignment::new(2, 2, vec![0.5; 4]).unwrap();
        assert!((loss_balance(&uniform) + 2f64.ln()).abs() < 1e-15);
        let collapsed = SoftAssignment::new(2, 2, vec![1.0, 0.0, 1.0, 0.0]).unwrap();
        assert_eq!(loss_balance(&collapsed), 0.0);
        let skew = SoftAssignment::new(2, 2, vec![1.0, 0.0, 0.5, 0.5]).unwrap();
        let expected = 0.75 * 0.75f64.ln() + 0.25 * 0.25f64.ln();
        assert!((loss_balance(&skew) - expected).abs() < 1e-15);
        assert!((expected + 0.5623).abs() < 1e-4);
    }

    #[test]
    fn zero_weights_reduce_to_consistency() {
        let images = EmbeddingMatrix::from_rows(&[[1.0f32, 0.0], [0.8, 0.6], [0.0, 1.0]]).unwrap();
        let params = ClusterHeadParams::new(2, 2, vec![0.3, -0.1, 0.2, 0.5], vec![0.1, -0.2], 1.0).unwrap();
        let g = graph(3);
        let p = pls(vec![0, 1, 1], 2);
        let batch = [0, 1, 2];
        let eval = total_loss_and_grad(&params, &batch, &images, &g, &p, 0.0, 0.0, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let q = super::super::forward(&params, &images).unwrap();
        let (li, _) = loss_image_consistency(&q, &g, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert!((eval.loss - li).abs() < 1e-12);
        assert!(total_loss_and_grad(&params, &batch, &images, &g, &p, -1.0, 0.0, &mut ChaCha8Rng::seed_from_u64(1)).is_err());
    }

    #[test]
    fn balanced_pseudo_labels_give_zero_bias_gradient_at_origin() {
        // At W = 0, b = 0 every q is uniform; with labels split evenly the
        // bias gradient of the cross-entropy term is mean(q − p) = 0.
        let images = EmbeddingMatrix::from_rows(&[[1.0f32, 0.0], [0.0, 1.0], [0.6, 0.8], [0.8, 0.6]]).unwrap();
        let params = ClusterHeadParams::zeros(2, 2);
        let batch = [0, 1, 2, 3];
        let partners = [1, 0, 3, 2];
        let w = LossWeights { balance: 0.0, semantic: 1.0, flip_balance_sign: false };
        let eval = batch_objective(&params, &images, &batch, &partners, &[0, 1, 0, 1], &w).unwrap();
        assert!(eval.grad.bias.iter().all(|g| g.abs() < 1e-15), "{:?}", eval.grad.bias);
    }
}
