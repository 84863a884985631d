//! Independent reference implementations used by the integration and
//! acceptance suites. Everything here is written the slow, obvious way.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian_rows(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Vec<Vec<f32>> {
    (0..n)
        .map(|_| (0..d).map(|_| StandardNormal.sample(rng)).collect())
        .collect()
}

pub fn unit_rows(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Vec<Vec<f32>> {
    gaussian_rows(rng, n, d)
        .into_iter()
        .map(|r| {
            let norm = r.iter().map(|&v| (v as f64) * (v as f64)).sum::<f64>().sqrt();
            r.into_iter().map(|v| (v as f64 / norm) as f32).collect()
        })
        .collect()
}

pub fn gaussian_vec(rng: &mut ChaCha8Rng, len: usize, scale: f64) -> Vec<f64> {
    (0..len)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            scale * z
        })
        .collect::<Vec<f64>>()
}

/// Random index in `0..n` other than `skip`.
pub fn other_index(rng: &mut ChaCha8Rng, n: usize, skip: usize) -> usize {
    let j = rng.random_range(0..n - 1);
    if j >= skip {
        j + 1
    } else {
        j
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Terms {
    pub consistency: f64,
    pub semantic: f64,
    pub balance: f64,
}

fn probabilities(w: &[f64], b: &[f64], c: usize, x: &[f64]) -> Vec<f64> {
    let d = x.len();
    let e: Vec<f64> = (0..c)
        .map(|l| {
            let z: f64 = (0..d).map(|j| w[l * d + j] * x[j]).sum::<f64>() + b[l];
            z.exp()
        })
        .collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// The three objective terms for a fixed pairing, recomputed from scratch.
pub fn objective_terms(
    w: &[f64],
    b: &[f64],
    c: usize,
    x: &[Vec<f64>],
    batch: &[usize],
    partners: &[usize],
    pseudo: &[usize],
) -> Terms {
    let m = batch.len() as f64;
    let mut consistency = 0.0;
    let mut semantic = 0.0;
    let mut mean = vec![0.0; c];
    for (&i, &j) in batch.iter().zip(partners) {
        let qi = probabilities(w, b, c, &x[i]);
        let qj = probabilities(w, b, c, &x[j]);
        let agree: f64 = qi.iter().zip(&qj).map(|(a, b)| a * b).sum();
        consistency -= agree.ln() / m;
        semantic -= qi[pseudo[i]].ln() / m;
        for l in 0..c {
            mean[l] += qi[l] / m;
        }
    }
    let balance = mean.iter().map(|v| v * v.ln()).sum();
    Terms {
        consistency,
        semantic,
        balance,
    }
}

/// Central differences of `f` at `theta`.
pub fn central_difference(theta: &[f64], h: f64, f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
    let mut probe = theta.to_vec();
    (0..theta.len())
        .map(|k| {
            probe[k] = theta[k] + h;
            let up = f(&probe);
            probe[k] = theta[k] - h;
            let down = f(&probe);
            probe[k] = theta[k];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// `‖a − b‖ / max(‖a‖, ‖b‖)`, zero when both vanish.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let scale = norm(a).max(norm(b));
    if scale == 0.0 {
        0.0
    } else {
        norm(&diff) / scale
    }
}

fn permutations(items: &mut Vec<usize>, k: usize, out: &mut Vec<Vec<usize>>) {
    if k == items.len() {
        out.push(items.clone());
        return;
    }
    for i in k..items.len() {
        items.swap(k, i);
        permutations(items, k + 1, out);
        items.swap(k, i);
    }
}

/// Best accuracy over every one-to-one relabelling of `pred`.
pub fn brute_force_accuracy(pred: &[usize], truth: &[usize]) -> f64 {
    let s = pred.iter().chain(truth).max().map_or(1, |&m| m + 1);
    let mut perms = Vec::new();
    permutations(&mut (0..s).collect(), 0, &mut perms);
    let best = perms
        .iter()
        .map(|p| pred.iter().zip(truth).filter(|(&a, &t)| p[a] == t).count())
        .max()
        .unwrap();
    best as f64 / pred.len() as f64
}

/// Adjusted Rand index from explicit pair enumeration.
pub fn pair_ari(pred: &[usize], truth: &[usize]) -> f64 {
    let n = pred.len();
    let (mut both, mut same_pred, mut same_truth, mut pairs) = (0.0, 0.0, 0.0, 0.0);
    for i in 0..n {
        for j in i + 1..n {
            let a = pred[i] == pred[j];
            let b = truth[i] == truth[j];
            both += (a && b) as u8 as f64;
            same_pred += a as u8 as f64;
            same_truth += b as u8 as f64;
            pairs += 1.0;
        }
    }
    let expected = same_pred * same_truth / pairs;
    let max = 0.5 * (same_pred + same_truth);
    (both - expected) / (max - expected)
}

/// k nearest rows by dot product via a full sort (similarity descending,
/// then index ascending), excluding the row itself.
pub fn full_sort_knn(rows: &[Vec<f32>], k: usize) -> Vec<Vec<usize>> {
    (0..rows.len())
        .map(|i| {
            let mut all: Vec<(f64, usize)> = (0..rows.len())
                .filter(|&j| j != i)
                .map(|j| {
                    let s: f64 = rows[i].iter().zip(&rows[j]).map(|(&a, &b)| a as f64 * b as f64).sum();
                    (s, j)
                })
                .collect();
            all.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
            all.into_iter().take(k).map(|(_, j)| j).collect()
        })
        .collect()
}

/// Nearest center by squared Euclidean distance, ties to the lowest index.
pub fn nearest_center_labels(points: &[Vec<f32>], centers: &[Vec<f32>]) -> Vec<usize> {
    points
        .iter()
        .map(|p| {
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (l, c) in centers.iter().enumerate() {
                let d: f64 = p.iter().zip(c).map(|(&a, &b)| (a as f64 - b as f64).powi(2)).sum();
                if d < best_d {
                    best_d = d;
                    best = l;
                }
            }
            best
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Term {
    Consistency,
    Semantic,
    Balance,
    Combined,
}

/// Draws a random head, batch, pairing and pseudo-labelling, then returns
/// the relative error between the analytic gradient of `term` and central
/// differences (step `1e-5`) of the reference objective.
pub fn gradient_check(seed: u64, term: Term) -> f64 {
    use sic_core::clusterhead::{batch_objective, LossWeights};
    use sic_core::{ClusterHeadParams, EmbeddingMatrix};

    let mut r = rng(seed);
    let c = r.random_range(2..=6);
    let d = r.random_range(2..=12);
    let n = r.random_range(c + 2..=30);
    let rows = unit_rows(&mut r, n, d);
    let images = EmbeddingMatrix::from_rows(&rows).unwrap();
    let x: Vec<Vec<f64>> = rows.iter().map(|row| row.iter().map(|&v| v as f64).collect()).collect();
    let m = r.random_range(2..=n);
    let batch: Vec<usize> = (0..m).map(|_| r.random_range(0..n)).collect();
    let partners: Vec<usize> = batch.iter().map(|&i| other_index(&mut r, n, i)).collect();
    let pseudo: Vec<usize> = (0..n).map(|_| r.random_range(0..c)).collect();
    let w = gaussian_vec(&mut r, c * d, 1.0);
    let b = gaussian_vec(&mut r, c, 0.5);
    let lambda = r.random_range(0.0..10.0);
    let beta = r.random_range(0.0..3.0);

    let grad = |balance: f64, semantic: f64| {
        let params = ClusterHeadParams::new(c, d, w.clone(), b.clone(), 1.0).unwrap();
        let eval = batch_objective(
            &params,
            &images,
            &batch,
            &partners,
            &pseudo,
            &LossWeights::new(balance, semantic),
        )
        .unwrap();
        let mut g = eval.grad.weights;
        g.extend(eval.grad.bias);
        g
    };
    let minus = |a: Vec<f64>, b: Vec<f64>| a.iter().zip(&b).map(|(x, y)| x - y).collect::<Vec<f64>>();
    let analytic = match term {
        Term::Consistency => grad(0.0, 0.0),
        Term::Semantic => minus(grad(0.0, 1.0), grad(0.0, 0.0)),
        Term::Balance => minus(grad(1.0, 0.0), grad(0.0, 0.0)),
        Term::Combined => grad(lambda, beta),
    };

    let mut theta = w.clone();
    theta.extend(&b);
    let numeric = central_difference(&theta, 1e-5, |t| {
        let terms = objective_terms(&t[..c * d], &t[c * d..], c, &x, &batch, &partners, &pseudo);
        match term {
            Term::Consistency => terms.consistency,
            Term::Semantic => terms.semantic,
            Term::Balance => terms.balance,
            Term::Combined => terms.consistency + beta * terms.semantic + lambda * terms.balance,
        }
    });
    relative_error(&analytic, &numeric)
}
