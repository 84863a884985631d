//! Run configuration: built-in defaults, overridden by a JSON file,
//! overridden in turn by command-line flags.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sic_core::clusterhead::TrainConfig;
use sic_core::pseudolab::DEFAULT_NEIGHBOR_NOUNS;
use sic_core::semspace::{DEFAULT_PER_CENTER_COUNT, DEFAULT_UNIQUENESS_THRESHOLD};
use sic_core::synthgen::SynthSpec;
use sic_core::theory::{DEFAULT_DELTA, DEFAULT_LAGRANGE_CONSTANT};
use sic_core::Strategy;

use crate::error::CliError;

/// Hyperparameter defaults as printed by `--help`.
pub const DEFAULTS_HELP: &str = "\
Hyperparameter defaults:
  --lr        learning rate of the head             1e-4
  --gamma-u   uniqueness threshold                  0.05
  --gamma-r   nouns kept per image center           200
  --xi-c      top images per cluster                0.9n/c
  --xi-a      nearest nouns per semantic center     20
  --k         neighbors per image                   20
  --lambda    balance weight                        5
  --beta      pseudo-label weight                   1
Other defaults: epochs 100, batch size 128, strategy adjusted, tau-m 1, delta 0.05, C 1, seed 0.";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub images: Option<PathBuf>,
    /// Raw noun lexicon (EMB1 with a JSON-lines sidecar).
    pub lexicon: Option<PathBuf>,
    /// Filtered semantics used for training.
    pub semantics: Option<PathBuf>,
    /// Ground-truth labels, optional for training.
    pub labels: Option<PathBuf>,
    /// Predicted labels to score.
    pub predictions: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub trace: Option<PathBuf>,
    pub output_dir: PathBuf,

    pub lr: f64,
    pub gamma_u: f64,
    pub gamma_r: usize,
    /// `None` means `⌊0.9·n/c⌋`.
    pub xi_c: Option<usize>,
    pub xi_a: usize,
    pub k: usize,
    pub lambda: f64,
    pub beta: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub c: usize,
    pub strategy: Strategy,
    pub seed: u64,
    pub tau_m: f64,
    pub delta: f64,
    #[serde(rename = "C")]
    pub lagrange_constant: f64,
    pub renormalize_adjusted: bool,
    pub flip_balance_sign: bool,
    pub synth: SynthSpec,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            images: None,
            lexicon: None,
            semantics: None,
            labels: None,
            predictions: None,
            checkpoint: None,
            trace: None,
            output_dir: PathBuf::from("."),
            lr: 1e-4,
            gamma_u: DEFAULT_UNIQUENESS_THRESHOLD,
            gamma_r: DEFAULT_PER_CENTER_COUNT,
            xi_c: None,
            xi_a: DEFAULT_NEIGHBOR_NOUNS,
            k: 20,
            lambda: 5.0,
            beta: 1.0,
            epochs: 100,
            batch_size: 128,
            c: 10,
            strategy: Strategy::AdjustedCenterBased,
            seed: 0,
            tau_m: 1.0,
            delta: DEFAULT_DELTA,
            lagrange_constant: DEFAULT_LAGRANGE_CONSTANT,
            renormalize_adjusted: false,
            flip_balance_sign: false,
            synth: SynthSpec::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(RunConfig::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    /// Range checks that do not depend on the data.
    pub fn validate(&self) -> Result<(), CliError> {
        let fail = |msg: String| Err(CliError::Config(msg));
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return fail(format!("lr = {} must be > 0", self.lr));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return fail(format!("lambda = {} must be >= 0", self.lambda));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return fail(format!("beta = {} must be >= 0", self.beta));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return fail(format!("delta = {} must lie in (0, 1)", self.delta));
        }
        if !(self.lagrange_constant > 0.0 && self.lagrange_constant.is_finite()) {
            return fail(format!("C = {} must be > 0", self.lagrange_constant));
        }
        if !(self.tau_m > 0.0 && self.tau_m.is_finite()) {
            return fail(format!("tau_m = {} must be > 0", self.tau_m));
        }
        if !self.gamma_u.is_finite() {
            return fail(format!("gamma_u = {} must be finite", self.gamma_u));
        }
        for (name, v) in [
            ("gamma_r", self.gamma_r),
            ("xi_a", self.xi_a),
            ("k", self.k),
            ("epochs", self.epochs),
            ("c", self.c),
        ] {
            if v == 0 {
                return fail(format!("{name} must be >= 1"));
            }
        }
        if self.xi_c == Some(0) {
            return fail("xi_c must be >= 1".into());
        }
        if self.batch_size < 2 {
            return fail(format!("batch_size = {} must be >= 2", self.batch_size));
        }
        Ok(())
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            clusters: self.c,
            epochs: self.epochs,
            batch_size: self.batch_size,
            learning_rate: self.lr,
            balance_weight: self.lambda,
            semantic_weight: self.beta,
            neighbors: self.k,
            strategy: self.strategy,
            top_budget: self.xi_c,
            neighbor_nouns: self.xi_a,
            renormalize_adjusted: self.renormalize_adjusted,
            temperature: self.tau_m,
            seed: self.seed,
            flip_balance_sign: self.flip_balance_sign,
            ..TrainConfig::default()
        }
    }

    /// Path field that the command requires.
    pub fn require<'a>(&self, field: &'a Option<PathBuf>, name: &str) -> Result<&'a Path, CliError> {
        field
            .as_deref()
            .ok_or_else(|| CliError::Config(format!("missing required path `{name}`")))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes") + "\n"
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_are_rejected() {
        let err = serde_json::from_str::<RunConfig>(r#"{"lambda": 2, "lamda": 3}"#).unwrap_err();
        assert!(err.to_string().contains("lamda"));
    }

    #[test]
    fn partial_file_keeps_defaults() {
        let cfg: RunConfig = serde_json::from_str(r#"{"lambda": 2, "strategy": "center"}"#).unwrap();
        assert_eq!(cfg.lambda, 2.0);
        assert_eq!(cfg.strategy, Strategy::CenterBased);
        assert_eq!(cfg.lr, 1e-4);
        assert_eq!(cfg.xi_a, 20);
    }

    #[test]
    fn echo_round_trips() {
        let cfg = RunConfig { xi_c: Some(7), ..RunConfig::default() };
        assert_eq!(serde_json::from_str::<RunConfig>(&cfg.to_json()).unwrap(), cfg);
    }

    #[test]
    fn ranges() {
        assert!(RunConfig::default().validate().is_ok());
        assert!(RunConfig { lambda: -1.0, ..RunConfig::default() }.validate().is_err());
        assert!(RunConfig { delta: 1.0, ..RunConfig::default() }.validate().is_err());
        assert!(RunConfig { xi_c: Some(0), ..RunConfig::default() }.validate().is_err());
    }
}
