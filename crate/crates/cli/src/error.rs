use std::io::ErrorKind;

use sic_core::clusterhead::HeadError;
use sic_core::corealg::AlgError;
use sic_core::embedstore::StoreError;
use sic_core::metrics::MetricError;
use sic_core::pseudolab::PseudoError;
use sic_core::semspace::SemError;
use sic_core::synthgen::SynthError;
use sic_core::theory::TheoryError;
use thiserror::Error;

/// Command failure, grouped by exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numeric(_) => 4,
        }
    }
}

impl From<StoreError> for CliError {
    fn from(e: StoreError) -> Self {
        match &e {
            StoreError::Io { source, .. } if source.kind() == ErrorKind::NotFound => CliError::Config(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<AlgError> for CliError {
    fn from(e: AlgError) -> Self {
        match e {
            AlgError::DimensionMismatch(..) => CliError::Data(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

impl From<SemError> for CliError {
    fn from(e: SemError) -> Self {
        match e {
            SemError::Alg(e) => e.into(),
            SemError::Store(e) => e.into(),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<MetricError> for CliError {
    fn from(e: MetricError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<PseudoError> for CliError {
    fn from(e: PseudoError) -> Self {
        match e {
            PseudoError::Alg(e) => e.into(),
            PseudoError::Store(e) => e.into(),
            PseudoError::Metric(e) => e.into(),
            PseudoError::BudgetTooLarge { .. } | PseudoError::KTooLarge { .. } | PseudoError::WrongStrategy(_) => {
                CliError::Config(e.to_string())
            }
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<HeadError> for CliError {
    fn from(e: HeadError) -> Self {
        match e {
            HeadError::Config(_) | HeadError::InvalidParams(_) => CliError::Config(e.to_string()),
            HeadError::Numeric(_) => CliError::Numeric(e.to_string()),
            HeadError::Alg(e) => e.into(),
            HeadError::Pseudo(e) => e.into(),
            HeadError::Sem(e) => e.into(),
            HeadError::Store(e) => e.into(),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<TheoryError> for CliError {
    fn from(e: TheoryError) -> Self {
        match e {
            TheoryError::Config(_) => CliError::Config(e.to_string()),
            TheoryError::NonPositive(_) => CliError::Numeric(e.to_string()),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<SynthError> for CliError {
    fn from(e: SynthError) -> Self {
        match e {
            SynthError::Config(_) => CliError::Config(e.to_string()),
            SynthError::Store(e) => e.into(),
        }
    }
}
