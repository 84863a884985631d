//! Empirical diagnostics for the generalization bound and the convergence
//! rate of training.
//!
//! The bound has the form
//!
//! ```text
//! risk ≤ empirical risk + c̃₁/√n + c̃₂·√(log(1/δ)/(2n))
//! c̃₁ = 2/μ_n + 2Cβ + 2cλ·log(1/μ_p)
//! c̃₂ = (2 + 2k')·log(1/μ_n) + Cβ + 2cλ·log(1/μ_p)
//! ```
//!
//! where μ_n bounds neighbor agreement `q_iᵀq_j` from below, μ_p is the
//! prediction-confidence constant, and k' is the largest number of
//! neighbor lists any sample belongs to.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clusterhead::{SoftAssignment, TrainTrace};
use crate::corealg::{dot_f64, max_in_degree, NeighborGraph};

/// Lower clamp on μ_n before logs and reciprocals.
pub const MU_FLOOR: f64 = 1e-12;
pub const DEFAULT_DELTA: f64 = 0.05;
pub const DEFAULT_LAGRANGE_CONSTANT: f64 = 1.0;

#[derive(Debug, Error, PartialEq)]
pub enum TheoryError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("need at least 2 epochs, got {0}")]
    TooShort(usize),
    #[error("size mismatch: {0} vs {1}")]
    SizeMismatch(usize, usize),
    #[error("gradient norm at epoch {0} is not positive")]
    NonPositive(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    /// min over i and j ∈ N_k(i) of q_iᵀq_j, clamped at [`MU_FLOOR`].
    pub mu_n: f64,
    /// True when the unclamped μ_n was below the floor (bound is vacuous).
    pub mu_n_clamped: bool,
    /// min over i of max_l q_il (confidence floor); used in the constants.
    pub mu_p: f64,
    /// max over i of max_l q_il, reported alongside.
    pub mu_p_max: f64,
    pub k_prime: usize,
    pub c_tilde_1: f64,
    pub c_tilde_2: f64,
    pub bound_gap: f64,
    pub delta: f64,
    #[serde(rename = "C")]
    pub lagrange_constant: f64,
    pub lambda: f64,
    pub beta: f64,
    pub n: usize,
    pub c: usize,
}

/// `(c̃₁, c̃₂)` from the measured constants.
pub fn bound_constants(
    mu_n: f64,
    mu_p: f64,
    k_prime: usize,
    c: usize,
    lambda: f64,
    beta: f64,
    lagrange_constant: f64,
) -> (f64, f64) {
    let confidence = 2.0 * c as f64 * lambda * (1.0 / mu_p).ln();
    let c1 = 2.0 / mu_n + 2.0 * lagrange_constant * beta + confidence;
    let c2 = (2.0 + 2.0 * k_prime as f64) * (1.0 / mu_n).ln() + lagrange_constant * beta + confidence;
    (c1, c2)
}

/// `c̃₁/√n + c̃₂·√(log(1/δ)/(2n))`.
pub fn bound_gap(c1: f64, c2: f64, n: usize, delta: f64) -> f64 {
    let n = n as f64;
    c1 / n.sqrt() + c2 * ((1.0 / delta).ln() / (2.0 * n)).sqrt()
}

#[allow(clippy::too_many_arguments)]
pub fn bound_report(
    q: &SoftAssignment,
    g: &NeighborGraph,
    lambda: f64,
    beta: f64,
    c: usize,
    delta: f64,
    lagrange_constant: f64,
) -> Result<BoundReport, TheoryError> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(TheoryError::Config(format!("δ = {delta} must lie in (0, 1)")));
    }
    if !(lambda >= 0.0 && beta >= 0.0) {
        return Err(TheoryError::Config(format!("λ = {lambda} and β = {beta} must be >= 0")));
    }
    if !(lagrange_constant > 0.0 && lagrange_constant.is_finite()) {
        return Err(TheoryError::Config(format!("C = {lagrange_constant} must be > 0")));
    }
    if q.n() != g.n() {
        return Err(TheoryError::SizeMismatch(q.n(), g.n()));
    }
    let mut raw_mu_n = f64::INFINITY;
    for i in 0..q.n() {
        for &j in g.neighbors(i) {
            raw_mu_n = raw_mu_n.min(dot_f64(q.row(i), q.row(j)));
        }
    }
    let mu_n = raw_mu_n.clamp(MU_FLOOR, 1.0);
    let row_max: Vec<f64> = q
        .rows()
        .map(|r| r.iter().copied().fold(f64::NEG_INFINITY, f64::max))
        .collect();
    let mu_p = row_max.iter().copied().fold(f64::INFINITY, f64::min).min(1.0);
    let mu_p_max = row_max.iter().copied().fold(f64::NEG_INFINITY, f64::max).min(1.0);
    let k_prime = max_in_degree(g);
    let (c1, c2) = bound_constants(mu_n, mu_p, k_prime, c, lambda, beta, lagrange_constant);
    Ok(BoundReport {
        mu_n,
        mu_n_clamped: raw_mu_n < MU_FLOOR,
        mu_p,
        mu_p_max,
        k_prime,
        c_tilde_1: c1,
        c_tilde_2: c2,
        bound_gap: bound_gap(c1, c2, q.n(), delta),
        delta,
        lagrange_constant,
        lambda,
        beta,
        n: q.n(),
        c,
    })
}

/// Min-so-far gradient norms and a log–log least-squares fit against the
/// 1-based epoch index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceSummary {
    pub epochs: usize,
    pub grad_norms: Vec<f64>,
    pub min_so_far: Vec<f64>,
    pub slope: f64,
    pub intercept: f64,
}

impl ConvergenceSummary {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,grad_norm,min_so_far\n");
        for (t, (g, m)) in self.grad_norms.iter().zip(&self.min_so_far).enumerate() {
            out.push_str(&format!("{},{},{}\n", t + 1, g, m));
        }
        out
    }
}

pub fn convergence_report(trace: &TrainTrace) -> Result<ConvergenceSummary, TheoryError> {
    convergence_from_norms(&trace.grad_norms())
}

pub fn convergence_from_norms(norms: &[f64]) -> Result<ConvergenceSummary, TheoryError> {
    if norms.len() < 2 {
        return Err(TheoryError::TooShort(norms.len()));
    }
    if let Some(t) = norms.iter().position(|&g| !(g > 0.0 && g.is_finite())) {
        return Err(TheoryError::NonPositive(t + 1));
    }
    let mut min_so_far = Vec::with_capacity(norms.len());
    let mut running = f64::INFINITY;
    for &g in norms {
        running = running.min(g);
        min_so_far.push(running);
    }
    let xs: Vec<f64> = (1..=norms.len()).map(|t| (t as f64).ln()).collect();
    let ys: Vec<f64> = min_so_far.iter().map(|m| m.ln()).collect();
    let (slope, intercept) = least_squares(&xs, &ys);
    Ok(ConvergenceSummary {
        epochs: norms.len(),
        grad_norms: norms.to_vec(),
        min_so_far,
        slope,
        intercept,
    })
}

fn least_squares(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ring(n: usize) -> NeighborGraph {
        NeighborGraph::from_rows((0..n).map(|i| vec![(i + 1) % n]).collect()).unwrap()
    }

    #[test]
    fn c1_is_four_at_half_agreement() {
        let (c1, _) = bound_constants(0.5, 0.5, 1, 2, 0.0, 0.0, 1.0);
        assert_eq!(c1, 4.0);
        let q = SoftAssignment::new(3, 2, vec![0.5; 6]).unwrap();
        let r = bound_report(&q, &ring(3), 0.0, 0.0, 2, 0.05, 1.0).unwrap();
        assert_eq!(r.mu_n, 0.5);
        assert_eq!(r.c_tilde_1, 4.0);
    }

    #[test]
    fn perfect_confidence_leaves_c_beta() {
        let q = SoftAssignment::new(2, 2, vec![1.0, 0.0, 1.0, 0.0]).unwrap();
        let r = bound_report(&q, &ring(2), 5.0, 0.7, 2, 0.05, 1.5).unwrap();
        assert_eq!((r.mu_n, r.mu_p), (1.0, 1.0));
        assert!((r.c_tilde_2 - 1.5 * 0.7).abs() < 1e-15);
    }

    #[test]
    fn c2_grows_with_k_prime() {
        let (_, a) = bound_constants(0.4, 0.6, 2, 3, 1.0, 1.0, 1.0);
        let (_, b) = bound_constants(0.4, 0.6, 4, 3, 1.0, 1.0, 1.0);
        assert!(b > a);
    }

    #[test]
    fn gap_shrinks_with_n() {
        let mut last = f64::INFINITY;
        for n in [10, 20, 40, 80, 160] {
            let g = bound_gap(4.0, 2.0, n, 0.05);
            assert!(g < last);
            last = g;
        }
    }

    #[test]
    fn invalid_inputs() {
        let q = SoftAssignment::new(2, 2, vec![0.5; 4]).unwrap();
        assert!(matches!(bound_report(&q, &ring(2), 0.0, 0.0, 2, 1.0, 1.0), Err(TheoryError::Config(_))));
        assert!(matches!(bound_report(&q, &ring(2), 0.0, 0.0, 2, 0.0, 1.0), Err(TheoryError::Config(_))));
        assert!(matches!(bound_report(&q, &ring(3), 0.0, 0.0, 2, 0.5, 1.0), Err(TheoryError::SizeMismatch(2, 3))));
    }

    #[test]
    fn disjoint_neighbors_are_clamped() {
        let q = SoftAssignment::new(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let r = bound_report(&q, &ring(2), 0.0, 0.0, 2, 0.05, 1.0).unwrap();
        assert_eq!(r.mu_n, MU_FLOOR);
        assert!(r.mu_n_clamped);
    }

    #[test]
    fn convergence_slopes() {
        let flat = convergence_from_norms(&[2.0; 10]).unwrap();
        assert!(flat.slope.abs() < 1e-12);
        let power: Vec<f64> = (1..=50).map(|t| (t as f64).powf(-0.5)).collect();
        let s = convergence_from_norms(&power).unwrap();
        assert!((s.slope + 0.5).abs() < 1e-6, "{}", s.slope);
        let rising: Vec<f64> = (1..=10).map(|t| t as f64).collect();
        let r = convergence_from_norms(&rising).unwrap();
        assert!(r.min_so_far.iter().all(|&m| m == 1.0));
        assert!(r.slope.abs() < 1e-12);
        assert_eq!(convergence_from_norms(&[1.0]), Err(TheoryError::TooShort(1)));
    }
}
