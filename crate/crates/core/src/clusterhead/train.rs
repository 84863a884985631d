use std::time::Instant;

use log::{debug, info};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::loss::{batch_objective, sample_partners, Gradient, LossWeights};
use super::{forward, init_kmeansnet_with, ClusterHeadParams, HeadError};
use crate::corealg::{knn_graph, KMeans};
use crate::pseudolab::{
    assign_pseudo_labels, centers_direct_with, pseudo_label_accuracy, semantic_centers, CenterConfig,
    PseudoLabelSet, SemanticCenters, Strategy,
};
use crate::semspace::SemanticSpace;
use crate::{EmbeddingMatrix, LabelVector};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum OptimizerKind {
    Adam { beta1: f64, beta2: f64, eps: f64 },
    Sgd,
}

impl Default for OptimizerKind {
    fn default() -> Self {
        OptimizerKind::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub clusters: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// λ.
    pub balance_weight: f64,
    /// β.
    pub semantic_weight: f64,
    /// Neighbors per image for the consistency loss.
    pub neighbors: usize,
    pub strategy: Strategy,
    /// ξ_c; `None` means `⌊0.9·n/c⌋`.
    pub top_budget: Option<usize>,
    /// ξ_a.
    pub neighbor_nouns: usize,
    pub renormalize_adjusted: bool,
    /// τ_m used by the k-means initialisation.
    pub temperature: f64,
    pub seed: u64,
    pub optimizer: OptimizerKind,
    pub flip_balance_sign: bool,
    pub kmeans: KMeans,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            clusters: 10,
            epochs: 100,
            batch_size: 128,
            learning_rate: 1e-4,
            balance_weight: 5.0,
            semantic_weight: 1.0,
            neighbors: 20,
            strategy: Strategy::AdjustedCenterBased,
            top_budget: None,
            neighbor_nouns: crate::pseudolab::DEFAULT_NEIGHBOR_NOUNS,
            renormalize_adjusted: false,
            temperature: 1.0,
            seed: 0,
            optimizer: OptimizerKind::default(),
            flip_balance_sign: false,
            kmeans: KMeans::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self, n: usize) -> Result<(), HeadError> {
        let fail = |msg: String| Err(HeadError::Config(msg));
        if self.epochs == 0 {
            return fail("epochs must be >= 1".into());
        }
        if self.batch_size < 2 {
            return fail(format!("batch_size {} must be >= 2", self.batch_size));
        }
        if self.clusters == 0 || self.clusters > n {
            return fail(format!("cluster count {} must be in 1..={n}", self.clusters));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return fail(format!("learning rate {} must be > 0", self.learning_rate));
        }
        if !(self.balance_weight >= 0.0 && self.balance_weight.is_finite()) {
            return fail(format!("λ = {} must be >= 0", self.balance_weight));
        }
        if !(self.semantic_weight >= 0.0 && self.semantic_weight.is_finite()) {
            return fail(format!("β = {} must be >= 0", self.semantic_weight));
        }
        if self.neighbors == 0 || self.neighbors >= n {
            return fail(format!("k = {} must be in 1..{n}", self.neighbors));
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return fail(format!("temperature {} must be > 0", self.temperature));
        }
        if let Some(b) = self.top_budget {
            if b == 0 || b > n {
                return fail(format!("ξ_c = {b} must be in 1..={n}"));
            }
        }
        if self.neighbor_nouns == 0 {
            return fail("ξ_a must be >= 1".into());
        }
        Ok(())
    }

    fn center_config(&self) -> CenterConfig {
        CenterConfig {
            strategy: self.strategy,
            top_budget: self.top_budget,
            neighbor_nouns: self.neighbor_nouns,
            renormalize_adjusted: self.renormalize_adjusted,
            seed: self.seed,
        }
    }
}

/// One completed epoch. Losses and gradient norm are means over the
/// epoch's minibatches.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    pub image_consistency: f64,
    pub image_semantic: f64,
    pub balance: f64,
    pub grad_norm: f64,
    pub pseudo_label_accuracy: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainTrace {
    pub records: Vec<EpochRecord>,
    /// Wall-clock seconds per epoch, kept apart so records stay reproducible.
    pub wall_seconds: Vec<f64>,
}

impl TrainTrace {
    pub fn grad_norms(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.grad_norm).collect()
    }

    /// CSV with header `epoch,loss,L_I,L_IS,L_B,grad_norm,pl_acc`. Missing
    /// pseudo-label accuracy is written as an empty field.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,loss,L_I,L_IS,L_B,grad_norm,pl_acc\n");
        for r in &self.records {
            let acc = r.pseudo_label_accuracy.map(|a| a.to_string()).unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                r.epoch, r.loss, r.image_consistency, r.image_semantic, r.balance, r.grad_norm, acc
            ));
        }
        out
    }

    /// Parses the output of [`TrainTrace::to_csv`]. Wall times are not stored.
    pub fn from_csv(text: &str) -> Result<Self, HeadError> {
        let mut records = Vec::new();
        let bad = |line: usize, msg: &str| HeadError::Config(format!("trace CSV line {line}: {msg}"));
        for (lineno, line) in text.lines().enumerate().skip(1) {
            if line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 7 {
                return Err(bad(lineno + 1, "expected 7 fields"));
            }
            let num = |s: &str| s.trim().parse::<f64>().map_err(|_| bad(lineno + 1, "bad number"));
            records.push(EpochRecord {
                epoch: f[0].trim().parse().map_err(|_| bad(lineno + 1, "bad epoch"))?,
                loss: num(f[1])?,
                image_consistency: num(f[2])?,
                image_semantic: num(f[3])?,
                balance: num(f[4])?,
                grad_norm: num(f[5])?,
                pseudo_label_accuracy: if f[6].trim().is_empty() { None } else { Some(num(f[6])?) },
            });
        }
        Ok(TrainTrace {
            records,
            wall_seconds: Vec::new(),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub params: ClusterHeadParams,
    pub trace: TrainTrace,
    /// Pseudo-labels used during the final epoch.
    pub pseudo_labels: PseudoLabelSet,
}

struct Optimizer {
    kind: OptimizerKind,
    lr: f64,
    step: i32,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Optimizer {
    fn new(kind: OptimizerKind, lr: f64, size: usize) -> Self {
        Optimizer {
            kind,
            lr,
            step: 0,
            m: vec![0.0; size],
            v: vec![0.0; size],
        }
    }

    fn apply(&mut self, params: &mut ClusterHeadParams, grad: &Gradient) {
        self.step += 1;
        let values = params.weights.iter_mut().chain(params.bias.iter_mut());
        let grads = grad.weights.iter().chain(&grad.bias);
        match self.kind {
            OptimizerKind::Sgd => {
                for (p, g) in values.zip(grads) {
                    *p -= self.lr * g;
                }
            }
            OptimizerKind::Adam { beta1, beta2, eps } => {
                let bc1 = 1.0 - beta1.powi(self.step);
                let bc2 = 1.0 - beta2.powi(self.step);
                for (((p, g), m), v) in values.zip(grads).zip(&mut self.m).zip(&mut self.v) {
                    *m = beta1 * *m + (1.0 - beta1) * g;
                    *v = beta2 * *v + (1.0 - beta2) * g * g;
                    let m_hat = *m / bc1;
                    let v_hat = *v / bc2;
                    *p -= self.lr * m_hat / (v_hat.sqrt() + eps);
                }
            }
        }
    }
}

/// Trains the head.
///
/// The head starts from k-means centers. Every epoch then recomputes the
/// full soft assignment, regenerates the semantic centers with the
/// configured strategy, relabels every image, and sweeps shuffled
/// minibatches of the combined objective. The first refresh runs on the
/// freshly initialised head and provides the initial pseudo-labels.
pub fn train(
    images: &EmbeddingMatrix,
    space: &SemanticSpace,
    cfg: &TrainConfig,
    truth: Option<&LabelVector>,
) -> Result<TrainOutcome, HeadError> {
    let n = images.n();
    cfg.validate(n)?;
    let semantics = &space.lexicon;
    if semantics.embeddings().d() != images.d() {
        return Err(HeadError::DimensionMismatch {
            expected: images.d(),
            got: semantics.embeddings().d(),
        });
    }
    if cfg.strategy != Strategy::Direct && semantics.len() < cfg.clusters {
        return Err(HeadError::Config(format!(
            "{} semantics cannot cover {} clusters",
            semantics.len(),
            cfg.clusters
        )));
    }
    if cfg.strategy == Strategy::AdjustedCenterBased && cfg.neighbor_nouns > semantics.len() {
        return Err(HeadError::Config(format!(
            "ξ_a = {} exceeds the {} available semantics",
            cfg.neighbor_nouns,
            semantics.len()
        )));
    }
    if let Some(t) = truth {
        if t.len() != n {
            return Err(HeadError::SizeMismatch(t.len(), n));
        }
    }

    let neighbors = knn_graph(images, cfg.neighbors)?;
    let (mut params, _) = init_kmeansnet_with(images, cfg.clusters, cfg.temperature, cfg.seed, &cfg.kmeans)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);
    let weights = LossWeights {
        balance: cfg.balance_weight,
        semantic: cfg.semantic_weight,
        flip_balance_sign: cfg.flip_balance_sign,
    };
    let center_cfg = cfg.center_config();
    // Direct mapping ignores the soft assignment, so its centers never change.
    let direct: Option<SemanticCenters> = match cfg.strategy {
        Strategy::Direct => Some(centers_direct_with(
            images,
            semantics.embeddings(),
            cfg.clusters,
            cfg.seed,
            &cfg.kmeans,
        )?),
        _ => None,
    };
    let mut optimizer = Optimizer::new(cfg.optimizer, cfg.learning_rate, params.weights.len() + params.bias.len());
    let mut trace = TrainTrace::default();
    let mut order: Vec<usize> = (0..n).collect();
    let mut pseudo = None;

    for epoch in 0..cfg.epochs {
        let started = Instant::now();
        let q = forward(&params, images)?;
        let centers = match &direct {
            Some(h) => h.clone(),
            None => semantic_centers(images, &q, semantics, &center_cfg)?,
        };
        let mut labels = assign_pseudo_labels(images, &centers)?;
        labels.epoch = epoch;
        let pl_acc = truth.map(|t| pseudo_label_accuracy(&labels, t)).transpose()?;

        order.shuffle(&mut rng);
        let (mut loss, mut li, mut lis, mut lb, mut gn) = (0.0, 0.0, 0.0, 0.0, 0.0);
        let mut batches = 0usize;
        for batch in order.chunks(cfg.batch_size) {
            let partners = sample_partners(&neighbors, batch, &mut rng);
            let eval = batch_objective(&params, images, batch, &partners, &labels.labels, &weights)?;
            optimizer.apply(&mut params, &eval.grad);
            loss += eval.loss;
            li += eval.image_consistency;
            lis += eval.image_semantic;
            lb += eval.balance;
            gn += eval.grad.norm();
            batches += 1;
        }
        let b = batches as f64;
        if params.weights.iter().chain(&params.bias).any(|v| !v.is_finite()) {
            return Err(HeadError::Numeric(format!("parameters diverged in epoch {epoch}")));
        }
        let record = EpochRecord {
            epoch,
            loss: loss / b,
            image_consistency: li / b,
            image_semantic: lis / b,
            balance: lb / b,
            grad_norm: gn / b,
            pseudo_label_accuracy: pl_acc,
        };
        debug!("epoch {epoch}: {record:?}");
        trace.records.push(record);
        trace.wall_seconds.push(started.elapsed().as_secs_f64());
        pseudo = Some(labels);
    }
    if let Some(last) = trace.records.last() {
        info!("training finished after {} epochs, loss {:.6}", cfg.epochs, last.loss);
    }
    Ok(TrainOutcome {
        params,
        trace,
        pseudo_labels: pseudo.expect("epochs >= 1"),
    })
}
