//! Deterministic synthetic stand-in for a shared image/text embedding
//! space.
//!
//! Each cluster gets a unit direction. Images are noisy copies of their
//! direction. The lexicon holds, in order:
//!
//! 1. one "true" noun per cluster, close to its direction (`noun_noise`);
//! 2. `distractor_nouns` looser variants per cluster (twice the noun noise,
//!    at least [`MIN_DISTRACTOR_NOISE`]);
//! 3. `n_nouns` unrelated background nouns drawn uniformly on the sphere;
//! 4. one general word pointing at the centroid of all the others.
//!
//! Every vector is unit-norm and the image order is shuffled.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedstore::StoreError;
use crate::{EmbeddingMatrix, LabelVector, NounLexicon};

/// Largest allowed dot product between two cluster directions.
pub const MAX_DIRECTION_DOT: f64 = 0.3;
pub const MAX_ATTEMPTS: usize = 1000;
pub const MIN_DISTRACTOR_NOISE: f64 = 0.1;
pub const GENERAL_WORD: &str = "general";

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid synthetic spec: {0}")]
    Config(String),
    #[error(transparent)]
    Store(#[from] StoreError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthSpec {
    pub c: usize,
    pub n_per_cluster: usize,
    pub d: usize,
    pub noise_sigma: f64,
    /// Background nouns unrelated to any cluster.
    pub n_nouns: usize,
    pub noun_noise: f64,
    /// Distractor nouns per cluster.
    pub distractor_nouns: usize,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            c: 3,
            n_per_cluster: 200,
            d: 32,
            noise_sigma: 0.15,
            n_nouns: 20,
            noun_noise: 0.1,
            distractor_nouns: 0,
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        if self.c < 2 {
            return Err(SynthError::Config(format!("c = {} must be >= 2", self.c)));
        }
        if self.d < 2 {
            return Err(SynthError::Config(format!("d = {} must be >= 2", self.d)));
        }
        if self.n_per_cluster == 0 {
            return Err(SynthError::Config("n_per_cluster must be >= 1".into()));
        }
        for (name, v) in [("noise_sigma", self.noise_sigma), ("noun_noise", self.noun_noise)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(SynthError::Config(format!("{name} = {v} must be >= 0")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthData {
    pub images: EmbeddingMatrix,
    pub truth: LabelVector,
    pub lexicon: NounLexicon,
    /// Lexicon row of each cluster's true noun.
    pub truth_nouns: Vec<usize>,
    /// Unit direction of each cluster.
    pub directions: Vec<Vec<f64>>,
}

fn gaussian(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    (0..d).map(|_| StandardNormal.sample(rng)).collect()
}

fn unit(v: Vec<f64>) -> Option<Vec<f64>> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    (norm > 1e-12).then(|| v.into_iter().map(|x| x / norm).collect())
}

/// `direction + N(0, σ²)` per coordinate, renormalized.
fn jitter(rng: &mut ChaCha8Rng, direction: &[f64], sigma: f64) -> Vec<f64> {
    loop {
        let v: Vec<f64> = direction
            .iter()
            .zip(gaussian(rng, direction.len()))
            .map(|(x, e)| x + sigma * e)
            .collect();
        if let Some(u) = unit(v) {
            return u;
        }
    }
}

fn to_f32(rows: &[Vec<f64>]) -> Vec<Vec<f32>> {
    rows.iter().map(|r| r.iter().map(|&v| v as f32).collect()).collect()
}

/// Unit matrix from unit f64 rows; the f32 rounding keeps norms within
/// tolerance, so the normalized flag is set explicitly.
fn unit_matrix(rows: &[Vec<f64>]) -> Result<EmbeddingMatrix, StoreError> {
    let d = rows[0].len();
    let data: Vec<f32> = to_f32(rows).concat();
    EmbeddingMatrix::new(rows.len(), d, data, true)
}

pub fn generate(spec: &SynthSpec) -> Result<SynthData, SynthError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let d = spec.d;

    let mut directions: Vec<Vec<f64>> = Vec::with_capacity(spec.c);
    let mut attempts = 0;
    while directions.len() < spec.c {
        attempts += 1;
        if attempts > MAX_ATTEMPTS {
            return Err(SynthError::Config(format!(
                "could not place {} directions in {d} dimensions with pairwise dot <= {MAX_DIRECTION_DOT}",
                spec.c
            )));
        }
        let Some(cand) = unit(gaussian(&mut rng, d)) else { continue };
        let ok = directions
            .iter()
            .all(|e| e.iter().zip(&cand).map(|(a, b)| a * b).sum::<f64>() <= MAX_DIRECTION_DOT);
        if ok {
            directions.push(cand);
        }
    }

    let mut samples: Vec<(Vec<f64>, usize)> = Vec::with_capacity(spec.c * spec.n_per_cluster);
    for (l, dir) in directions.iter().enumerate() {
        for _ in 0..spec.n_per_cluster {
            samples.push((jitter(&mut rng, dir, spec.noise_sigma), l));
        }
    }
    samples.shuffle(&mut rng);
    let (image_rows, labels): (Vec<Vec<f64>>, Vec<usize>) = samples.into_iter().unzip();

    let mut nouns = Vec::new();
    let mut noun_rows = Vec::new();
    for (l, dir) in directions.iter().enumerate() {
        nouns.push(format!("concept_{l}"));
        noun_rows.push(jitter(&mut rng, dir, spec.noun_noise));
    }
    let distractor_sigma = (2.0 * spec.noun_noise).max(MIN_DISTRACTOR_NOISE);
    for (l, dir) in directions.iter().enumerate() {
        for v in 0..spec.distractor_nouns {
            nouns.push(format!("concept_{l}_variant_{v}"));
            noun_rows.push(jitter(&mut rng, dir, distractor_sigma));
        }
    }
    for b in 0..spec.n_nouns {
        nouns.push(format!("background_{b}"));
        noun_rows.push(loop {
            if let Some(u) = unit(gaussian(&mut rng, d)) {
                break u;
            }
        });
    }
    let mut centroid = vec![0.0; d];
    for r in &noun_rows {
        for (c, v) in centroid.iter_mut().zip(r) {
            *c += v;
        }
    }
    let general = unit(centroid).ok_or_else(|| SynthError::Config("noun centroid is zero".into()))?;
    nouns.push(GENERAL_WORD.to_string());
    noun_rows.push(general);

    Ok(SynthData {
        images: unit_matrix(&image_rows)?,
        truth: LabelVector::new(labels, spec.c)?,
        lexicon: NounLexicon::new(nouns, unit_matrix(&noun_rows)?)?,
        truth_nouns: (0..spec.c).collect(),
        directions,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::semspace::{lexicon_centroid, uniqueness_scores};

    #[test]
    fn same_seed_same_bits() {
        let spec = SynthSpec { distractor_nouns: 2, seed: 3, ..SynthSpec::default() };
        assert_eq!(generate(&spec).unwrap(), generate(&spec).unwrap());
        let other = SynthSpec { seed: 4, ..spec.clone() };
        assert_ne!(generate(&spec).unwrap().images, generate(&other).unwrap().images);
    }

    #[test]
    fn zero_noise_images_equal_directions() {
        let spec = SynthSpec { noise_sigma: 0.0, n_per_cluster: 5, ..SynthSpec::default() };
        let data = generate(&spec).unwrap();
        for (i, &l) in data.truth.labels().iter().enumerate() {
            let dir: Vec<f32> = data.directions[l].iter().map(|&v| v as f32).collect();
            assert_eq!(data.images.row(i), dir.as_slice());
        }
    }

    #[test]
    fn directions_are_separated() {
        let data = generate(&SynthSpec { c: 6, d: 8, ..SynthSpec::default() }).unwrap();
        for a in 0..6 {
            for b in a + 1..6 {
                let dot: f64 = data.directions[a].iter().zip(&data.directions[b]).map(|(x, y)| x * y).sum();
                assert!(dot <= MAX_DIRECTION_DOT);
            }
        }
    }

    #[test]
    fn impossible_separation_is_an_error() {
        let spec = SynthSpec { c: 40, d: 2, ..SynthSpec::default() };
        assert!(matches!(generate(&spec), Err(SynthError::Config(_))));
    }

    #[test]
    fn invalid_specs() {
        assert!(generate(&SynthSpec { c: 1, ..SynthSpec::default() }).is_err());
        assert!(generate(&SynthSpec { d: 1, ..SynthSpec::default() }).is_err());
        assert!(generate(&SynthSpec { noise_sigma: -1.0, ..SynthSpec::default() }).is_err());
    }

    #[test]
    fn general_word_has_lowest_uniqueness() {
        for seed in 0..5 {
            let spec = SynthSpec { distractor_nouns: 3, seed, ..SynthSpec::default() };
            let data = generate(&spec).unwrap();
            let scores = uniqueness_scores(&data.lexicon, &lexicon_centroid(&data.lexicon)).unwrap();
            let general = data.lexicon.nouns().iter().position(|s| s == GENERAL_WORD).unwrap();
            let min = scores.iter().copied().fold(f64::INFINITY, f64::min);
            assert_eq!(scores[general], min);
        }
    }

    #[test]
    fn true_nouns_are_nearest_to_directions() {
        for seed in 0..5 {
            let spec = SynthSpec { distractor_nouns: 5, noun_noise: 0.1, seed, ..SynthSpec::default() };
            let data = generate(&spec).unwrap();
            let lex = data.lexicon.embeddings();
            for (l, dir) in data.directions.iter().enumerate() {
                let best = (0..lex.n())
                    .max_by(|&a, &b| {
                        let sa: f64 = lex.row(a).iter().zip(dir).map(|(&x, y)| x as f64 * y).sum();
                        let sb: f64 = lex.row(b).iter().zip(dir).map(|(&x, y)| x as f64 * y).sum();
                        sa.partial_cmp(&sb).unwrap().then(b.cmp(&a))
                    })
                    .unwrap();
                assert_eq!(best, data.truth_nouns[l], "seed {seed} cluster {l}");
            }
        }
    }
}
