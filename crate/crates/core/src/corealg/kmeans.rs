use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{sq_dist, AlgError};
use crate::EmbeddingMatrix;

/// Output of a k-means run.
#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    pub centers: EmbeddingMatrix,
    pub assignment: Vec<usize>,
    /// Sum of squared Euclidean distances to the assigned center.
    pub inertia: f64,
    /// Lloyd iterations of the restart that was kept.
    pub iterations: usize,
}

/// Lloyd's algorithm with k-means++ seeding.
///
/// Points are assigned with the score `2·x·r − ‖r‖²` (argmax, lowest index
/// on ties), which ranks centers identically to squared Euclidean distance
/// and is the same quantity a k-means-initialised linear layer computes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KMeans {
    pub max_iter: usize,
    /// Stop once no center moves more than this (Euclidean).
    pub tol: f64,
    /// Independent seedings; the lowest-inertia result is kept.
    pub restarts: usize,
}

impl Default for KMeans {
    fn default() -> Self {
        KMeans {
            max_iter: 300,
            tol: 1e-6,
            restarts: 10,
        }
    }
}

/// k-means with the default restart count.
pub fn kmeans(
    points: &EmbeddingMatrix,
    c: usize,
    seed: u64,
    max_iter: usize,
    tol: f64,
) -> Result<KMeansResult, AlgError> {
    KMeans {
        max_iter,
        tol,
        ..KMeans::default()
    }
    .fit(points, c, seed)
}

impl KMeans {
    pub fn fit(&self, points: &EmbeddingMatrix, c: usize, seed: u64) -> Result<KMeansResult, AlgError> {
        let n = points.n();
        if c == 0 {
            return Err(AlgError::InvalidArgument("cluster count must be >= 1".into()));
        }
        if c > n {
            return Err(AlgError::TooFewPoints {
                clusters: c,
                points: n,
            });
        }
        if self.max_iter == 0 {
            return Err(AlgError::InvalidArgument("max_iter must be >= 1".into()));
        }
        let d = points.d();
        let data = points.to_f64();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);

        let mut best: Option<KMeansResult> = None;
        for _ in 0..self.restarts.max(1) {
            let run = self.lloyd(&data, n, d, c, &mut rng);
            if best.as_ref().is_none_or(|b| run.inertia < b.inertia) {
                best = Some(run);
            }
        }
        Ok(best.expect("at least one restart"))
    }

    fn lloyd(&self, data: &[f64], n: usize, d: usize, c: usize, rng: &mut ChaCha8Rng) -> KMeansResult {
        let mut centers = plus_plus_seed(data, n, d, c, rng);
        let mut assignment = vec![0usize; n];
        let mut iterations = 0;
        let mut last_inertia = f64::INFINITY;

        for _ in 0..self.max_iter {
            iterations += 1;
            assign(data, d, &centers, &mut assignment);
            repair_empty(data, d, &mut centers, &mut assignment);
            let inertia = inertia(data, d, &centers, &assignment);
            debug_assert!(
                inertia <= last_inertia * (1.0 + 1e-9) + 1e-12,
                "inertia increased: {last_inertia} -> {inertia}"
            );
            last_inertia = inertia;

            let updated = means(data, d, c, &assignment);
            let shift = centers
                .chunks_exact(d)
                .zip(updated.chunks_exact(d))
                .map(|(a, b)| sq_dist(a, b).sqrt())
                .fold(0.0, f64::max);
            centers = updated;
            if shift < self.tol {
                break;
            }
        }

        // Publish f32 centers and make the assignment consistent with them.
        let rounded: Vec<f64> = centers.iter().map(|&v| v as f32 as f64).collect();
        let mut centers = rounded;
        assign(data, d, &centers, &mut assignment);
        if repair_empty(data, d, &mut centers, &mut assignment) {
            centers.iter_mut().for_each(|v| *v = *v as f32 as f64);
            assign(data, d, &centers, &mut assignment);
        }
        let inertia = inertia(data, d, &centers, &assignment);
        let f32_centers: Vec<f32> = centers.iter().map(|&v| v as f32).collect();
        let centers = EmbeddingMatrix::new(c, d, f32_centers, false)
            .expect("centers are finite means of finite points");
        let centers = if (0..c).all(|l| (centers.row_norm(l) - 1.0).abs() <= crate::embedstore::NORM_TOLERANCE) {
            EmbeddingMatrix::new(c, d, centers.into_data(), true).unwrap()
        } else {
            centers
        };
        KMeansResult {
            centers,
            assignment,
            inertia,
            iterations,
        }
    }
}

fn plus_plus_seed(data: &[f64], n: usize, d: usize, c: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut chosen = Vec::with_capacity(c);
    chosen.push(rng.random_range(0..n));
    let mut min_d2: Vec<f64> = (0..n)
        .map(|i| sq_dist(&data[i * d..(i + 1) * d], &data[chosen[0] * d..(chosen[0] + 1) * d]))
        .collect();
    while chosen.len() < c {
        let total: f64 = min_d2.iter().sum();
        let next = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = None;
            for (i, &w) in min_d2.iter().enumerate() {
                acc += w;
                if w > 0.0 && acc >= target {
                    pick = Some(i);
                    break;
                }
            }
            // Rounding can leave `acc` a hair below `target`.
            pick.unwrap_or_else(|| min_d2.iter().rposition(|&w| w > 0.0).unwrap())
        } else {
            // Every point coincides with a chosen center.
            (0..n).find(|i| !chosen.contains(i)).unwrap()
        };
        chosen.push(next);
        let center = &data[next * d..(next + 1) * d];
        for (i, m) in min_d2.iter_mut().enumerate() {
            *m = m.min(sq_dist(&data[i * d..(i + 1) * d], center));
        }
    }
    chosen
        .iter()
        .flat_map(|&i| data[i * d..(i + 1) * d].iter().copied())
        .collect()
}

/// Nearest center by `2·x·r − ‖r‖²`, ties to the lowest index.
pub(crate) fn nearest_center(x: &[f64], centers: &[f64], d: usize) -> usize {
    let mut best = 0;
    let mut best_score = f64::NEG_INFINITY;
    for (l, r) in centers.chunks_exact(d).enumerate() {
        let xr: f64 = x.iter().zip(r).map(|(a, b)| a * b).sum();
        let rr: f64 = r.iter().map(|v| v * v).sum();
        let score = 2.0 * xr - rr;
        if score > best_score {
            best_score = score;
            best = l;
        }
    }
    best
}

fn assign(data: &[f64], d: usize, centers: &[f64], assignment: &mut [usize]) {
    assignment
        .par_iter_mut()
        .enumerate()
        .for_each(|(i, a)| *a = nearest_center(&data[i * d..(i + 1) * d], centers, d));
}

/// Moves the point farthest from its center into each empty cluster.
/// Returns whether anything changed.
fn repair_empty(data: &[f64], d: usize, centers: &mut [f64], assignment: &mut [usize]) -> bool {
    let c = centers.len() / d;
    let mut changed = false;
    loop {
        let mut sizes = vec![0usize; c];
        for &a in assignment.iter() {
            sizes[a] += 1;
        }
        let Some(empty) = sizes.iter().position(|&s| s == 0) else {
            return changed;
        };
        let mut far = None;
        let mut far_d2 = f64::NEG_INFINITY;
        for (i, &a) in assignment.iter().enumerate() {
            if sizes[a] < 2 {
                continue;
            }
            let d2 = sq_dist(&data[i * d..(i + 1) * d], &centers[a * d..(a + 1) * d]);
            if d2 > far_d2 {
                far_d2 = d2;
                far = Some(i);
            }
        }
        let i = far.expect("c <= n guarantees a cluster with two members");
        assignment[i] = empty;
        centers[empty * d..(empty + 1) * d].copy_from_slice(&data[i * d..(i + 1) * d]);
        changed = true;
    }
}

fn means(data: &[f64], d: usize, c: usize, assignment: &[usize]) -> Vec<f64> {
    let mut sums = vec![0.0; c * d];
    let mut counts = vec![0usize; c];
    for (i, &a) in assignment.iter().enumerate() {
        counts[a] += 1;
        for (s, x) in sums[a * d..(a + 1) * d].iter_mut().zip(&data[i * d..(i + 1) * d]) {
            *s += x;
        }
    }
    for (l, &cnt) in counts.iter().enumerate() {
        for s in &mut sums[l * d..(l + 1) * d] {
            *s /= cnt as f64;
        }
    }
    sums
}

fn inertia(data: &[f64], d: usize, centers: &[f64], assignment: &[usize]) -> f64 {
    assignment
        .iter()
        .enumerate()
        .map(|(i, &a)| sq_dist(&data[i * d..(i + 1) * d], &centers[a * d..(a + 1) * d]))
        .sum()
}
