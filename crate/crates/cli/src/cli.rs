use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use sic_core::Strategy;

use crate::commands;
use crate::config::{RunConfig, DEFAULTS_HELP};
use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(
    name = "sic",
    version,
    about = "Semantic-enhanced clustering of precomputed image embeddings",
    after_help = DEFAULTS_HELP
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// JSON run config; flags override its values.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Output directory [default: .]
    #[arg(long, short, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// RNG seed [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct Hyper {
    /// Learning rate of the cluster head [default: 1e-4]
    #[arg(long, allow_negative_numbers = true)]
    pub lr: Option<f64>,
    /// Uniqueness threshold γ_u [default: 0.05]
    #[arg(long, allow_negative_numbers = true)]
    pub gamma_u: Option<f64>,
    /// Nouns kept per image center γ_r [default: 200]
    #[arg(long)]
    pub gamma_r: Option<usize>,
    /// Top images per cluster ξ_c [default: 0.9n/c]
    #[arg(long)]
    pub xi_c: Option<usize>,
    /// Nearest nouns per semantic center ξ_a [default: 20]
    #[arg(long)]
    pub xi_a: Option<usize>,
    /// Neighbors per image k [default: 20]
    #[arg(long)]
    pub k: Option<usize>,
    /// Balance weight λ [default: 5]
    #[arg(long, allow_negative_numbers = true)]
    pub lambda: Option<f64>,
    /// Pseudo-label weight β [default: 1]
    #[arg(long, allow_negative_numbers = true)]
    pub beta: Option<f64>,
    /// Training epochs [default: 100]
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Minibatch size [default: 128]
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Number of clusters c [default: 10]
    #[arg(long, short)]
    pub c: Option<usize>,
    /// Pseudo-label strategy: direct, center or adjusted [default: adjusted]
    #[arg(long)]
    pub strategy: Option<Strategy>,
    /// Temperature of the k-means initialisation τ_m [default: 1]
    #[arg(long, allow_negative_numbers = true)]
    pub tau_m: Option<f64>,
    /// Confidence level δ of the bound report [default: 0.05]
    #[arg(long, allow_negative_numbers = true)]
    pub delta: Option<f64>,
    /// Lagrange constant C of the bound report [default: 1]
    #[arg(long = "lagrange-c", allow_negative_numbers = true)]
    pub lagrange_constant: Option<f64>,
    /// Re-normalize adjusted centers
    #[arg(long)]
    pub renormalize_adjusted: bool,
    /// Flip the sign of the balance term (ablation)
    #[arg(long)]
    pub flip_balance_sign: bool,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Images per cluster [default: 200]
    #[arg(long)]
    pub n_per_cluster: Option<usize>,
    /// Embedding dimension [default: 32]
    #[arg(long)]
    pub d: Option<usize>,
    /// Image noise σ [default: 0.15]
    #[arg(long)]
    pub noise_sigma: Option<f64>,
    /// Background nouns [default: 20]
    #[arg(long)]
    pub n_nouns: Option<usize>,
    /// Noise of the true nouns [default: 0.1]
    #[arg(long)]
    pub noun_noise: Option<f64>,
    /// Distractor nouns per cluster [default: 0]
    #[arg(long)]
    pub distractor_nouns: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Filter a noun lexicon down to unique, image-relevant semantics
    #[command(after_help = DEFAULTS_HELP)]
    FilterNouns {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        hyper: Hyper,
        #[arg(long)]
        images: Option<PathBuf>,
        #[arg(long)]
        lexicon: Option<PathBuf>,
    },
    /// Train the cluster head and write labels, trace and checkpoint
    #[command(after_help = DEFAULTS_HELP)]
    Train {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        hyper: Hyper,
        #[arg(long)]
        images: Option<PathBuf>,
        /// Filtered semantics from filter-nouns
        #[arg(long)]
        semantics: Option<PathBuf>,
        /// Raw lexicon, filtered before training when no semantics are given
        #[arg(long)]
        lexicon: Option<PathBuf>,
        /// Ground-truth labels for metrics and pseudo-label accuracy
        #[arg(long)]
        labels: Option<PathBuf>,
    },
    /// Label images with a trained checkpoint
    #[command(after_help = DEFAULTS_HELP)]
    Predict {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        hyper: Hyper,
        #[arg(long)]
        images: Option<PathBuf>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Score predicted labels against ground truth (ACC, NMI, ARI)
    #[command(after_help = DEFAULTS_HELP)]
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        hyper: Hyper,
        #[arg(long)]
        predictions: Option<PathBuf>,
        #[arg(long)]
        labels: Option<PathBuf>,
    },
    /// k-means on the raw embeddings
    #[command(after_help = DEFAULTS_HELP)]
    BaselineKmeans {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        hyper: Hyper,
        #[arg(long)]
        images: Option<PathBuf>,
        #[arg(long)]
        labels: Option<PathBuf>,
    },
    /// Empirical generalization-bound constants for a checkpoint
    #[command(after_help = DEFAULTS_HELP)]
    BoundReport {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        hyper: Hyper,
        #[arg(long)]
        images: Option<PathBuf>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Generate a synthetic benchmark
    #[command(after_help = DEFAULTS_HELP)]
    Synth {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        hyper: Hyper,
        #[command(flatten)]
        synth: SynthArgs,
    },
    /// Min-so-far gradient norms and their log-log slope from a trace
    #[command(after_help = DEFAULTS_HELP)]
    ConvergenceReport {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        hyper: Hyper,
        #[arg(long)]
        trace: Option<PathBuf>,
    },
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn set_path(slot: &mut Option<PathBuf>, value: Option<PathBuf>) {
    if value.is_some() {
        *slot = value;
    }
}

fn base(common: Common, hyper: Hyper) -> Result<RunConfig, CliError> {
    let mut cfg = RunConfig::load(common.config.as_deref())?;
    set(&mut cfg.output_dir, common.out);
    set(&mut cfg.seed, common.seed);
    set(&mut cfg.lr, hyper.lr);
    set(&mut cfg.gamma_u, hyper.gamma_u);
    set(&mut cfg.gamma_r, hyper.gamma_r);
    if hyper.xi_c.is_some() {
        cfg.xi_c = hyper.xi_c;
    }
    set(&mut cfg.xi_a, hyper.xi_a);
    set(&mut cfg.k, hyper.k);
    set(&mut cfg.lambda, hyper.lambda);
    set(&mut cfg.beta, hyper.beta);
    set(&mut cfg.epochs, hyper.epochs);
    set(&mut cfg.batch_size, hyper.batch_size);
    set(&mut cfg.c, hyper.c);
    set(&mut cfg.strategy, hyper.strategy);
    set(&mut cfg.tau_m, hyper.tau_m);
    set(&mut cfg.delta, hyper.delta);
    set(&mut cfg.lagrange_constant, hyper.lagrange_constant);
    cfg.renormalize_adjusted |= hyper.renormalize_adjusted;
    cfg.flip_balance_sign |= hyper.flip_balance_sign;
    Ok(cfg)
}

/// Resolves the effective config and runs the command.
pub fn dispatch(command: Command) -> Result<(), CliError> {
    match command {
        Command::FilterNouns { common, hyper, images, lexicon } => {
            let mut cfg = base(common, hyper)?;
            set_path(&mut cfg.images, images);
            set_path(&mut cfg.lexicon, lexicon);
            commands::filter_nouns(&cfg)
        }
        Command::Train { common, hyper, images, semantics, lexicon, labels } => {
            let mut cfg = base(common, hyper)?;
            set_path(&mut cfg.images, images);
            set_path(&mut cfg.semantics, semantics);
            set_path(&mut cfg.lexicon, lexicon);
            set_path(&mut cfg.labels, labels);
            commands::train(&cfg)
        }
        Command::Predict { common, hyper, images, checkpoint } => {
            let mut cfg = base(common, hyper)?;
            set_path(&mut cfg.images, images);
            set_path(&mut cfg.checkpoint, checkpoint);
            commands::predict_labels(&cfg)
        }
        Command::Evaluate { common, hyper, predictions, labels } => {
            let mut cfg = base(common, hyper)?;
            set_path(&mut cfg.predictions, predictions);
            set_path(&mut cfg.labels, labels);
            commands::evaluate(&cfg)
        }
        Command::BaselineKmeans { common, hyper, images, labels } => {
            let mut cfg = base(common, hyper)?;
            set_path(&mut cfg.images, images);
            set_path(&mut cfg.labels, labels);
            commands::baseline_kmeans(&cfg)
        }
        Command::BoundReport { common, hyper, images, checkpoint } => {
            let mut cfg = base(common, hyper)?;
            set_path(&mut cfg.images, images);
            set_path(&mut cfg.checkpoint, checkpoint);
            commands::bound_report(&cfg)
        }
        Command::Synth { common, hyper, synth } => {
            let seed = common.seed;
            let c = hyper.c;
            let mut cfg = base(common, hyper)?;
            set(&mut cfg.synth.seed, seed);
            set(&mut cfg.synth.c, c);
            set(&mut cfg.synth.n_per_cluster, synth.n_per_cluster);
            set(&mut cfg.synth.d, synth.d);
            set(&mut cfg.synth.noise_sigma, synth.noise_sigma);
            set(&mut cfg.synth.n_nouns, synth.n_nouns);
            set(&mut cfg.synth.noun_noise, synth.noun_noise);
            set(&mut cfg.synth.distractor_nouns, synth.distractor_nouns);
            commands::synth(&cfg)
        }
        Command::ConvergenceReport { common, hyper, trace } => {
            let mut cfg = base(common, hyper)?;
            set_path(&mut cfg.trace, trace);
            commands::convergence_report(&cfg)
        }
    }
}
