//! One function per subcommand. Every command reads its inputs from the
//! run config, writes deterministic files into `output_dir`, and echoes the
//! effective config there as `<command>.config.json`.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use log::{info, warn};
use serde::Serialize;
use sic_core::clusterhead::{forward, predict, read_checkpoint, train as train_head, write_checkpoint};
use sic_core::corealg::{knn_graph, KMeans};
use sic_core::embedstore::{
    normalize_rows, read_embeddings, read_labels, read_lexicon, write_embeddings, write_labels, write_lexicon,
    StoreError,
};
use sic_core::metrics::{evaluate as score, MetricsReport};
use sic_core::semspace::{filter_relevant, filter_unique, lexicon_centroid, uniqueness_scores, SemanticSpace};
use sic_core::synthgen::generate;
use sic_core::theory::{bound_report as bound, convergence_report as convergence};
use sic_core::{EmbeddingMatrix, LabelVector, NounLexicon, TrainTrace};

use crate::config::RunConfig;
use crate::error::CliError;

pub const HISTOGRAM_BINS: usize = 20;

fn io_error(path: &Path, source: std::io::Error) -> CliError {
    StoreError::Io { path: path.to_path_buf(), source }.into()
}

fn prepare(cfg: &RunConfig, command: &str) -> Result<PathBuf, CliError> {
    cfg.validate()?;
    let dir = cfg.output_dir.clone();
    std::fs::create_dir_all(&dir).map_err(|e| io_error(&dir, e))?;
    write_text(&dir.join(format!("{command}.config.json")), &cfg.to_json())?;
    Ok(dir)
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| io_error(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).expect("report serializes");
    write_text(path, &(text + "\n"))
}

/// Embeddings are unit-normalized on ingest.
fn load_images(path: &Path) -> Result<EmbeddingMatrix, CliError> {
    let m = read_embeddings(path)?;
    if m.is_normalized() {
        return Ok(m);
    }
    warn!("{} is not unit-normalized; normalizing rows", path.display());
    Ok(normalize_rows(&m)?)
}

fn load_lexicon(path: &Path) -> Result<NounLexicon, CliError> {
    let lex = read_lexicon(path)?;
    if lex.embeddings().is_normalized() {
        return Ok(lex);
    }
    warn!("{} is not unit-normalized; normalizing rows", path.display());
    Ok(lex.with_embeddings(normalize_rows(lex.embeddings())?)?)
}

fn load_truth(path: &Path, n: usize) -> Result<LabelVector, CliError> {
    let truth = read_labels(path)?;
    if truth.len() != n {
        return Err(CliError::Data(format!(
            "{} has {} labels for {n} images",
            path.display(),
            truth.len()
        )));
    }
    Ok(truth)
}

#[derive(Debug, Serialize)]
pub struct Histogram {
    pub lower: f64,
    pub upper: f64,
    pub counts: Vec<usize>,
}

/// Equal-width histogram of uniqueness scores over `[0, 2]`.
pub fn score_histogram(scores: &[f64]) -> Histogram {
    let (lower, upper) = (0.0, 2.0);
    let width = (upper - lower) / HISTOGRAM_BINS as f64;
    let mut counts = vec![0; HISTOGRAM_BINS];
    for &s in scores {
        let bin = (((s - lower) / width).floor().max(0.0) as usize).min(HISTOGRAM_BINS - 1);
        counts[bin] += 1;
    }
    Histogram { lower, upper, counts }
}

#[derive(Debug, Serialize)]
pub struct FilterReport {
    /// |𝒲|
    pub lexicon_size: usize,
    /// |𝒲_u|
    pub unique_size: usize,
    /// |𝒯|
    pub semantic_size: usize,
    pub gamma_u: f64,
    pub gamma_r: usize,
    pub c: usize,
    pub removed: Vec<String>,
    pub score_histogram: Histogram,
}

pub fn filter_nouns(cfg: &RunConfig) -> Result<(), CliError> {
    let out = prepare(cfg, "filter-nouns")?;
    let images = load_images(cfg.require(&cfg.images, "images")?)?;
    let lexicon = load_lexicon(cfg.require(&cfg.lexicon, "lexicon")?)?;
    let scores = uniqueness_scores(&lexicon, &lexicon_centroid(&lexicon))?;
    let unique = filter_unique(&lexicon, cfg.gamma_u)?;
    let space = filter_relevant(&unique, &images, cfg.c, cfg.gamma_r, cfg.seed)?;
    let removed = lexicon
        .nouns()
        .iter()
        .zip(&scores)
        .filter(|(_, &s)| s < cfg.gamma_u)
        .map(|(n, _)| n.clone())
        .collect();
    write_lexicon(&space.lexicon, out.join("semantics.emb"))?;
    let report = FilterReport {
        lexicon_size: lexicon.len(),
        unique_size: unique.len(),
        semantic_size: space.lexicon.len(),
        gamma_u: cfg.gamma_u,
        gamma_r: cfg.gamma_r,
        c: cfg.c,
        removed,
        score_histogram: score_histogram(&scores),
    };
    info!(
        "kept {} of {} nouns ({} unique)",
        report.semantic_size, report.lexicon_size, report.unique_size
    );
    write_json(&out.join("filter_report.json"), &report)
}

fn semantic_space(cfg: &RunConfig, images: &EmbeddingMatrix) -> Result<SemanticSpace, CliError> {
    if let Some(path) = &cfg.semantics {
        let lexicon = load_lexicon(path)?;
        let size = lexicon.len();
        return Ok(SemanticSpace {
            lexicon,
            uniqueness_threshold: cfg.gamma_u,
            per_center_count: cfg.gamma_r,
            source_size: size,
        });
    }
    let Some(path) = &cfg.lexicon else {
        return Err(CliError::Config("training needs `semantics` or `lexicon`".into()));
    };
    let lexicon = load_lexicon(path)?;
    let unique = filter_unique(&lexicon, cfg.gamma_u)?;
    let mut space = filter_relevant(&unique, images, cfg.c, cfg.gamma_r, cfg.seed)?;
    space.uniqueness_threshold = cfg.gamma_u;
    space.source_size = lexicon.len();
    Ok(space)
}

pub fn train(cfg: &RunConfig) -> Result<(), CliError> {
    let out = prepare(cfg, "train")?;
    let images = load_images(cfg.require(&cfg.images, "images")?)?;
    let space = semantic_space(cfg, &images)?;
    let truth = cfg.labels.as_deref().map(|p| load_truth(p, images.n())).transpose()?;
    let outcome = train_head(&images, &space, &cfg.train_config(), truth.as_ref())?;

    write_checkpoint(&outcome.params, cfg.epochs, out.join("head.emb"))?;
    write_text(&out.join("trace.csv"), &outcome.trace.to_csv())?;
    let pred = predict(&outcome.params, &images)?;
    write_labels(&pred, out.join("labels.json"))?;
    write_json(&out.join("pseudo_labels.json"), &outcome.pseudo_labels)?;
    if let Some(truth) = &truth {
        let metrics = score(&pred, truth)?;
        info!("acc {:.4} nmi {:.4} ari {:.4}", metrics.acc, metrics.nmi, metrics.ari);
        write_json(&out.join("metrics.json"), &metrics)?;
    }
    let mut log = String::from("epoch,wall_seconds\n");
    for (r, s) in outcome.trace.records.iter().zip(&outcome.trace.wall_seconds) {
        let _ = writeln!(log, "{},{s}", r.epoch);
    }
    write_text(&out.join("train.log"), &log)
}

pub fn predict_labels(cfg: &RunConfig) -> Result<(), CliError> {
    let out = prepare(cfg, "predict")?;
    let images = load_images(cfg.require(&cfg.images, "images")?)?;
    let (params, _) = read_checkpoint(cfg.require(&cfg.checkpoint, "checkpoint")?)?;
    write_labels(&predict(&params, &images)?, out.join("labels.json"))?;
    Ok(())
}

pub fn evaluate(cfg: &RunConfig) -> Result<(), CliError> {
    let out = prepare(cfg, "evaluate")?;
    let pred = read_labels(cfg.require(&cfg.predictions, "predictions")?)?;
    let truth = load_truth(cfg.require(&cfg.labels, "labels")?, pred.len())?;
    let metrics: MetricsReport = score(&pred, &truth)?;
    write_json(&out.join("metrics.json"), &metrics)
}

pub fn baseline_kmeans(cfg: &RunConfig) -> Result<(), CliError> {
    let out = prepare(cfg, "baseline-kmeans")?;
    let images = load_images(cfg.require(&cfg.images, "images")?)?;
    let km = KMeans::default().fit(&images, cfg.c, cfg.seed)?;
    let pred = LabelVector::new(km.assignment, cfg.c)?;
    write_labels(&pred, out.join("kmeans_labels.json"))?;
    if let Some(path) = &cfg.labels {
        let truth = load_truth(path, images.n())?;
        write_json(&out.join("kmeans_metrics.json"), &score(&pred, &truth)?)?;
    }
    Ok(())
}

pub fn bound_report(cfg: &RunConfig) -> Result<(), CliError> {
    let out = prepare(cfg, "bound-report")?;
    let images = load_images(cfg.require(&cfg.images, "images")?)?;
    let (params, _) = read_checkpoint(cfg.require(&cfg.checkpoint, "checkpoint")?)?;
    let q = forward(&params, &images)?;
    let g = knn_graph(&images, cfg.k)?;
    let report = bound(&q, &g, cfg.lambda, cfg.beta, params.c(), cfg.delta, cfg.lagrange_constant)?;
    if report.mu_n_clamped {
        warn!("some neighbor pairs have disjoint assignments; the bound is vacuous");
    }
    write_json(&out.join("bound_report.json"), &report)
}

pub fn convergence_report(cfg: &RunConfig) -> Result<(), CliError> {
    let out = prepare(cfg, "convergence-report")?;
    let path = cfg.require(&cfg.trace, "trace")?;
    let text = std::fs::read_to_string(path).map_err(|e| io_error(path, e))?;
    let trace = TrainTrace::from_csv(&text)?;
    let summary = convergence(&trace)?;
    write_text(&out.join("convergence.csv"), &summary.to_csv())?;
    write_json(&out.join("convergence.json"), &summary)
}

pub fn synth(cfg: &RunConfig) -> Result<(), CliError> {
    let out = prepare(cfg, "synth")?;
    let data = generate(&cfg.synth)?;
    write_embeddings(&data.images, out.join("images.emb"))?;
    write_lexicon(&data.lexicon, out.join("lexicon.emb"))?;
    write_labels(&data.truth, out.join("labels.json"))?;
    write_json(&out.join("truth_nouns.json"), &data.truth_nouns)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn histogram_edges() {
        let h = score_histogram(&[0.0, 0.05, 0.1, 1.99, 2.0, 2.5]);
        assert_eq!(h.counts.iter().sum::<usize>(), 6);
        assert_eq!(h.counts[0], 2);
        assert_eq!(h.counts[1], 1);
        assert_eq!(h.counts[HISTOGRAM_BINS - 1], 3);
    }
}
