//! Semantic space construction: drop overly general nouns by their
//! uniqueness score, then keep the nouns nearest to the image cluster
//! centers.

use std::cmp::Ordering;
use std::collections::HashSet;

use thiserror::Error;

use crate::corealg::{dot_mixed, AlgError, KMeans};
use crate::embedstore::StoreError;
use crate::{EmbeddingMatrix, NounLexicon};

pub const DEFAULT_UNIQUENESS_THRESHOLD: f64 = 0.05;
pub const DEFAULT_PER_CENTER_COUNT: usize = 200;

#[derive(Debug, Error)]
pub enum SemError {
    #[error("zero vector has no direction")]
    ZeroVector,
    #[error("no noun reaches uniqueness threshold {threshold} (max observed {max_score})")]
    EmptyResult { threshold: f64, max_score: f64 },
    #[error("lexicon is empty")]
    EmptyLexicon,
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error(transparent)]
    Alg(#[from] AlgError),
    #[error(transparent)]
    Store(#[from] StoreError),
}

/// The filtered noun set used as candidate cluster semantics.
#[derive(Debug, Clone, PartialEq)]
pub struct SemanticSpace {
    pub lexicon: NounLexicon,
    pub uniqueness_threshold: f64,
    pub per_center_count: usize,
    /// Size of the lexicon before any filtering.
    pub source_size: usize,
}

/// `1 − cos(w, e)`.
pub fn uniqueness_score(w: &[f64], e: &[f64]) -> Result<f64, SemError> {
    if w.len() != e.len() {
        return Err(SemError::DimensionMismatch(w.len(), e.len()));
    }
    let wn = w.iter().map(|v| v * v).sum::<f64>().sqrt();
    let en = e.iter().map(|v| v * v).sum::<f64>().sqrt();
    if wn == 0.0 || en == 0.0 {
        return Err(SemError::ZeroVector);
    }
    let cos = w.iter().zip(e).map(|(a, b)| a * b).sum::<f64>() / (wn * en);
    Ok(1.0 - cos)
}

/// Mean of all lexicon embeddings.
pub fn lexicon_centroid(lex: &NounLexicon) -> Vec<f64> {
    let m = lex.embeddings();
    let mut e = vec![0.0; m.d()];
    for row in m.rows() {
        for (acc, &v) in e.iter_mut().zip(row) {
            *acc += v as f64;
        }
    }
    let n = m.n() as f64;
    e.iter_mut().for_each(|v| *v /= n);
    e
}

/// Uniqueness score of every noun against `centroid`.
pub fn uniqueness_scores(lex: &NounLexicon, centroid: &[f64]) -> Result<Vec<f64>, SemError> {
    let m = lex.embeddings();
    (0..m.n())
        .map(|i| uniqueness_score(&m.row_f64(i), centroid))
        .collect()
}

/// Keeps the nouns whose uniqueness score against the full-lexicon centroid
/// is at least `threshold`, in input order.
pub fn filter_unique(lex: &NounLexicon, threshold: f64) -> Result<NounLexicon, SemError> {
    if lex.is_empty() {
        return Err(SemError::EmptyLexicon);
    }
    let centroid = lexicon_centroid(lex);
    filter_unique_against(lex, threshold, &centroid)
}

/// Same as [`filter_unique`] with a caller-supplied (frozen) centroid.
pub fn filter_unique_against(
    lex: &NounLexicon,
    threshold: f64,
    centroid: &[f64],
) -> Result<NounLexicon, SemError> {
    let scores = uniqueness_scores(lex, centroid)?;
    let keep: Vec<usize> = (0..scores.len()).filter(|&i| scores[i] >= threshold).collect();
    if keep.is_empty() {
        let max_score = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        return Err(SemError::EmptyResult {
            threshold,
            max_score,
        });
    }
    Ok(lex.select(&keep)?)
}

/// Indices of the `count` rows of `candidates` most similar to `query`,
/// most similar first, ties to the lower index.
pub(crate) fn top_similar(query: &[f64], candidates: &EmbeddingMatrix, count: usize) -> Vec<usize> {
    let mut sims: Vec<(f64, usize)> = candidates
        .rows()
        .enumerate()
        .map(|(j, row)| (dot_mixed(row, query), j))
        .collect();
    sims.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap_or(Ordering::Equal).then(a.1.cmp(&b.1)));
    sims.into_iter().take(count).map(|(_, j)| j).collect()
}

/// Clusters the images into `c` groups and keeps, for every center, the
/// `per_center` nouns with the highest dot product. Shared picks are kept
/// once, at their first occurrence.
pub fn filter_relevant(
    lex: &NounLexicon,
    images: &EmbeddingMatrix,
    c: usize,
    per_center: usize,
    seed: u64,
) -> Result<SemanticSpace, SemError> {
    relevant_with(lex, images, c, per_center, seed, &KMeans::default())
}

pub fn relevant_with(
    lex: &NounLexicon,
    images: &EmbeddingMatrix,
    c: usize,
    per_center: usize,
    seed: u64,
    kmeans: &KMeans,
) -> Result<SemanticSpace, SemError> {
    if lex.is_empty() {
        return Err(SemError::EmptyLexicon);
    }
    if lex.embeddings().d() != images.d() {
        return Err(SemError::DimensionMismatch(lex.embeddings().d(), images.d()));
    }
    let km = kmeans.fit(images, c, seed)?;
    let mut seen = HashSet::new();
    let mut keep = Vec::new();
    for l in 0..c {
        let center = km.centers.row_f64(l);
        for j in top_similar(&center, lex.embeddings(), per_center) {
            if seen.insert(j) {
                keep.push(j);
            }
        }
    }
    Ok(SemanticSpace {
        lexicon: lex.select(&keep)?,
        uniqueness_threshold: 0.0,
        per_center_count: per_center,
        source_size: lex.len(),
    })
}

/// Both filters in sequence.
pub fn build_semantic_space(
    lex: &NounLexicon,
    images: &EmbeddingMatrix,
    c: usize,
    uniqueness_threshold: f64,
    per_center: usize,
    seed: u64,
) -> Result<SemanticSpace, SemError> {
    let unique = filter_unique(lex, uniqueness_threshold)?;
    let mut space = filter_relevant(&unique, images, c, per_center, seed)?;
    space.uniqueness_threshold = uniqueness_threshold;
    space.source_size = lex.len();
    Ok(space)
}
