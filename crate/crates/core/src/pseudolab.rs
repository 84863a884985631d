//! Semantic centers and one-hot pseudo-labels.
//!
//! Three ways to pick the `c` semantic centers:
//!
//! * [`Strategy::Direct`]: snap every image to its nearest noun, then run
//!   k-means over those snapped vectors.
//! * [`Strategy::CenterBased`]: average the top-ξ_c images of every cluster
//!   under the current soft assignment and snap each average to its
//!   nearest noun.
//! * [`Strategy::AdjustedCenterBased`]: start from the center-based nouns
//!   and replace each by the mean of its ξ_a nearest nouns.
//!
//! Pseudo-labels then come from the highest dot product between an image
//! and the centers. Ties everywhere go to the lowest index.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use log::warn;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clusterhead::SoftAssignment;
use crate::corealg::{dot_mixed, nearest_row, AlgError, KMeans};
use crate::embedstore::StoreError;
use crate::metrics::{hungarian_accuracy, MetricError};
use crate::semspace::top_similar;
use crate::{EmbeddingMatrix, LabelVector, NounLexicon};

pub const DEFAULT_NEIGHBOR_NOUNS: usize = 20;

#[derive(Debug, Error)]
pub enum PseudoError {
    #[error("top-selection budget {budget} must be in 1..={n}")]
    BudgetTooLarge { budget: usize, n: usize },
    #[error("cluster {0} selected no images")]
    EmptyColumn(usize),
    #[error("need {k} neighbor nouns but only {available} exist")]
    KTooLarge { k: usize, available: usize },
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("size mismatch: {0} vs {1}")]
    SizeMismatch(usize, usize),
    #[error("operation requires center-based centers, got {0}")]
    WrongStrategy(Strategy),
    #[error("semantic set is empty")]
    NoSemantics,
    #[error(transparent)]
    Alg(#[from] AlgError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Metric(#[from] MetricError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Direct,
    #[serde(rename = "center")]
    CenterBased,
    #[serde(rename = "adjusted")]
    AdjustedCenterBased,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [
        Strategy::Direct,
        Strategy::CenterBased,
        Strategy::AdjustedCenterBased,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Direct => "direct",
            Strategy::CenterBased => "center",
            Strategy::AdjustedCenterBased => "adjusted",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "direct" => Ok(Strategy::Direct),
            "center" => Ok(Strategy::CenterBased),
            "adjusted" => Ok(Strategy::AdjustedCenterBased),
            other => Err(format!(
                "unknown strategy {other:?} (expected direct, center or adjusted)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SemanticCenters {
    pub centers: EmbeddingMatrix,
    pub strategy: Strategy,
    /// For center-based centers, the semantic row chosen for each cluster.
    pub provenance: Option<Vec<usize>>,
}

impl SemanticCenters {
    /// Pairs of clusters that were given identical centers.
    pub fn duplicate_pairs(&self) -> Vec<(usize, usize)> {
        let c = self.centers.n();
        let mut out = Vec::new();
        for a in 0..c {
            for b in a + 1..c {
                if self.centers.row(a) == self.centers.row(b) {
                    out.push((a, b));
                }
            }
        }
        out
    }
}

/// Column-wise top-ξ_c selection.
#[derive(Debug, Clone, PartialEq)]
pub struct TopSelection {
    n: usize,
    c: usize,
    /// Selected row indices per column, best first.
    selected: Vec<Vec<usize>>,
    thresholds: Vec<f64>,
    budget: usize,
}

impl TopSelection {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn c(&self) -> usize {
        self.c
    }

    pub fn budget(&self) -> usize {
        self.budget
    }

    /// κ_l per column.
    pub fn thresholds(&self) -> &[f64] {
        &self.thresholds
    }

    pub fn selected(&self, column: usize) -> &[usize] {
        &self.selected[column]
    }

    /// Dense `n × c` 0/1 matrix, row-major.
    pub fn to_matrix(&self) -> Vec<u8> {
        let mut z = vec![0u8; self.n * self.c];
        for (l, rows) in self.selected.iter().enumerate() {
            for &i in rows {
                z[i * self.c + l] = 1;
            }
        }
        z
    }
}

/// One-hot pseudo-labels, stored as class indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PseudoLabelSet {
    pub labels: Vec<usize>,
    pub c: usize,
    pub strategy: Strategy,
    pub epoch: usize,
}

impl PseudoLabelSet {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn onehot(&self, i: usize) -> Vec<f64> {
        let mut v = vec![0.0; self.c];
        v[self.labels[i]] = 1.0;
        v
    }

    pub fn as_label_vector(&self) -> LabelVector {
        LabelVector::new(self.labels.clone(), self.c).expect("pseudo-labels are < c")
    }
}

/// Snaps each image to its nearest semantic row and clusters the snapped
/// multiset. Centers are raw k-means centroids.
pub fn centers_direct(
    images: &EmbeddingMatrix,
    semantics: &EmbeddingMatrix,
    c: usize,
    seed: u64,
) -> Result<SemanticCenters, PseudoError> {
    centers_direct_with(images, semantics, c, seed, &KMeans::default())
}

pub fn centers_direct_with(
    images: &EmbeddingMatrix,
    semantics: &EmbeddingMatrix,
    c: usize,
    seed: u64,
    kmeans: &KMeans,
) -> Result<SemanticCenters, PseudoError> {
    if images.d() != semantics.d() {
        return Err(PseudoError::DimensionMismatch(images.d(), semantics.d()));
    }
    let nearest: Vec<usize> = (0..images.n())
        .map(|i| nearest_row(&images.row_f64(i), semantics))
        .collect();
    let mut distinct = nearest.clone();
    distinct.sort_unstable();
    distinct.dedup();
    if distinct.len() < c {
        warn!(
            "direct mapping hit only {} distinct semantics for {c} clusters; centers will repeat",
            distinct.len()
        );
    }
    let snapped = semantics.select_rows(&nearest)?;
    let km = kmeans.fit(&snapped, c, seed)?;
    Ok(SemanticCenters {
        centers: km.centers,
        strategy: Strategy::Direct,
        provenance: None,
    })
}

/// Per column, selects the `budget` rows with the largest probability.
/// κ_l is the `budget`-th largest value; ties at κ_l go to lower rows.
pub fn select_top(q: &SoftAssignment, budget: usize) -> Result<TopSelection, PseudoError> {
    let (n, c) = (q.n(), q.c());
    if budget == 0 || budget > n {
        return Err(PseudoError::BudgetTooLarge { budget, n });
    }
    let mut selected = Vec::with_capacity(c);
    let mut thresholds = Vec::with_capacity(c);
    for l in 0..c {
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| {
            q.get(b, l)
                .partial_cmp(&q.get(a, l))
                .unwrap_or(Ordering::Equal)
                .then(a.cmp(&b))
        });
        order.truncate(budget);
        thresholds.push(q.get(order[budget - 1], l));
        selected.push(order);
    }
    Ok(TopSelection {
        n,
        c,
        selected,
        thresholds,
        budget,
    })
}

/// Averages the selected images of every cluster and snaps each average to
/// the nearest semantic row.
pub fn centers_from_selection(
    images: &EmbeddingMatrix,
    sel: &TopSelection,
    semantics: &NounLexicon,
) -> Result<SemanticCenters, PseudoError> {
    if sel.n != images.n() {
        return Err(PseudoError::SizeMismatch(sel.n, images.n()));
    }
    let sem = semantics.embeddings();
    if sem.d() != images.d() {
        return Err(PseudoError::DimensionMismatch(images.d(), sem.d()));
    }
    if sem.n() == 0 {
        return Err(PseudoError::NoSemantics);
    }
    let d = images.d();
    let mut chosen = Vec::with_capacity(sel.c);
    for (l, rows) in sel.selected.iter().enumerate() {
        if rows.is_empty() {
            return Err(PseudoError::EmptyColumn(l));
        }
        let mut mean = vec![0.0; d];
        for &i in rows {
            for (m, &v) in mean.iter_mut().zip(images.row(i)) {
                *m += v as f64;
            }
        }
        let count = rows.len() as f64;
        mean.iter_mut().for_each(|m| *m /= count);
        chosen.push(nearest_row(&mean, sem));
    }
    let out = SemanticCenters {
        centers: sem.select_rows(&chosen)?,
        strategy: Strategy::CenterBased,
        provenance: Some(chosen),
    };
    let dups = out.duplicate_pairs();
    if !dups.is_empty() {
        warn!("center-based mapping assigned the same noun to clusters {dups:?}");
    }
    Ok(out)
}

/// Replaces each center-based center by the mean of its `count` nearest
/// semantic rows. The center's own row is always one of them.
pub fn adjust_centers(
    h: &SemanticCenters,
    semantics: &EmbeddingMatrix,
    count: usize,
    renormalize: bool,
) -> Result<SemanticCenters, PseudoError> {
    if h.strategy != Strategy::CenterBased {
        return Err(PseudoError::WrongStrategy(h.strategy));
    }
    if count == 0 || count > semantics.n() {
        return Err(PseudoError::KTooLarge {
            k: count,
            available: semantics.n(),
        });
    }
    if h.centers.d() != semantics.d() {
        return Err(PseudoError::DimensionMismatch(h.centers.d(), semantics.d()));
    }
    let d = semantics.d();
    let own = h.provenance.as_deref();
    let mut rows = Vec::with_capacity(h.centers.n());
    for l in 0..h.centers.n() {
        let center = h.centers.row_f64(l);
        let mut picks = Vec::with_capacity(count);
        if let Some(own) = own {
            picks.push(own[l]);
        }
        for j in top_similar(&center, semantics, count + 1) {
            if picks.len() == count {
                break;
            }
            if !picks.contains(&j) {
                picks.push(j);
            }
        }
        let mut mean = vec![0.0; d];
        for &j in &picks {
            for (m, &v) in mean.iter_mut().zip(semantics.row(j)) {
                *m += v as f64;
            }
        }
        let k = picks.len() as f64;
        mean.iter_mut().for_each(|m| *m /= k);
        if renormalize {
            let norm = mean.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 0.0 {
                mean.iter_mut().for_each(|m| *m /= norm);
            }
        }
        rows.push(mean);
    }
    Ok(SemanticCenters {
        centers: EmbeddingMatrix::from_f64_rows(&rows)?,
        strategy: Strategy::AdjustedCenterBased,
        provenance: None,
    })
}

/// `p_i = one-hot(argmax_l u_iᵀ h_l)`. Softmax is strictly increasing, so
/// the argmax of the raw scores is the argmax of the probabilities.
pub fn assign_pseudo_labels(
    images: &EmbeddingMatrix,
    h: &SemanticCenters,
) -> Result<PseudoLabelSet, PseudoError> {
    if images.d() != h.centers.d() {
        return Err(PseudoError::DimensionMismatch(images.d(), h.centers.d()));
    }
    let centers: Vec<Vec<f64>> = (0..h.centers.n()).map(|l| h.centers.row_f64(l)).collect();
    let labels = images
        .rows()
        .map(|u| {
            let mut best = 0;
            let mut best_score = f64::NEG_INFINITY;
            for (l, hl) in centers.iter().enumerate() {
                let s = dot_mixed(u, hl);
                if s > best_score {
                    best_score = s;
                    best = l;
                }
            }
            best
        })
        .collect();
    Ok(PseudoLabelSet {
        labels,
        c: h.centers.n(),
        strategy: h.strategy,
        epoch: 0,
    })
}

/// Hungarian-matched accuracy of pseudo-labels against ground truth.
pub fn pseudo_label_accuracy(p: &PseudoLabelSet, truth: &LabelVector) -> Result<f64, PseudoError> {
    if p.len() != truth.len() {
        return Err(PseudoError::SizeMismatch(p.len(), truth.len()));
    }
    Ok(hungarian_accuracy(&p.as_label_vector(), truth)?)
}

/// `⌊0.9·n/c⌋`, at least 1.
pub fn default_top_budget(n: usize, c: usize) -> usize {
    ((9 * n) / (10 * c)).max(1)
}

/// Knobs for producing semantic centers during training.
#[derive(Debug, Clone, PartialEq)]
pub struct CenterConfig {
    pub strategy: Strategy,
    /// ξ_c; `None` means `⌊0.9·n/c⌋`.
    pub top_budget: Option<usize>,
    /// ξ_a.
    pub neighbor_nouns: usize,
    pub renormalize_adjusted: bool,
    pub seed: u64,
}

impl Default for CenterConfig {
    fn default() -> Self {
        CenterConfig {
            strategy: Strategy::AdjustedCenterBased,
            top_budget: None,
            neighbor_nouns: DEFAULT_NEIGHBOR_NOUNS,
            renormalize_adjusted: false,
            seed: 0,
        }
    }
}

/// Semantic centers for the configured strategy given the current soft
/// assignment.
pub fn semantic_centers(
    images: &EmbeddingMatrix,
    q: &SoftAssignment,
    semantics: &NounLexicon,
    cfg: &CenterConfig,
) -> Result<SemanticCenters, PseudoError> {
    let c = q.c();
    match cfg.strategy {
        Strategy::Direct => centers_direct(images, semantics.embeddings(), c, cfg.seed),
        Strategy::CenterBased | Strategy::AdjustedCenterBased => {
            let budget = cfg.top_budget.unwrap_or_else(|| default_top_budget(q.n(), c));
            let sel = select_top(q, budget)?;
            let h = centers_from_selection(images, &sel, semantics)?;
            if cfg.strategy == Strategy::CenterBased {
                Ok(h)
            } else {
                adjust_centers(&h, semantics.embeddings(), cfg.neighbor_nouns, cfg.renormalize_adjusted)
            }
        }
    }
}
