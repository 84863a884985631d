//! Semantic-enhanced clustering of precomputed image embeddings.
//!
//! The pipeline works entirely on embedding matrices produced elsewhere by
//! a vision-language model:
//!
//! 1. [`semspace`] filters a noun lexicon down to nouns that are specific
//!    (far from the lexicon centroid) and relevant (near image cluster
//!    centers).
//! 2. [`pseudolab`] turns the current soft assignment and the filtered
//!    nouns into semantic centers and one-hot pseudo-labels.
//! 3. [`clusterhead`] trains a linear + softmax head with neighbor
//!    consistency, pseudo-label cross-entropy and a balance term.
//!
//! [`metrics`] scores the result, [`theory`] reports the empirical bound
//! constants, and [`synthgen`] generates synthetic inputs for testing.

pub mod clusterhead;
pub mod corealg;
pub mod embedstore;
pub mod metrics;
pub mod pseudolab;
pub mod semspace;
pub mod synthgen;
pub mod theory;

pub use clusterhead::{ClusterHeadParams, SoftAssignment, TrainConfig, TrainTrace};
pub use corealg::{KMeansResult, NeighborGraph};
pub use embedstore::{EmbeddingMatrix, LabelVector, NounLexicon};
pub use pseudolab::{PseudoLabelSet, SemanticCenters, Strategy};
pub use semspace::SemanticSpace;
