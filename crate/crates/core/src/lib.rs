//! Measuring, aligning and evaluating cross-modal embedding spaces.
//!
//! - [`corpus`]: embedding sets, the XEB1 file format, relevance manifests, splits.
//! - [`metrics`]: Euclidean, cosine, Manhattan and chi-square scores, dense score matrices.
//! - [`retrieval`]: per-query rankings, hit rate and precision at K, precision upper bounds.
//! - [`geometry`]: centroid modality gap and exact (batched) Wasserstein-2 distance.
//! - [`scorer`]: an MLP similarity function trained with MSE or a pairwise contrastive loss.
//! - [`stats`]: two-proportion chi-square tests with Holm adjustment.

pub mod corpus;
pub mod error;
pub mod geometry;
pub mod metrics;
pub mod retrieval;
pub mod scorer;
pub mod stats;

pub use corpus::{EmbeddingSet, Modality, PairedCorpus};
pub use error::{Error, Result};
pub use metrics::{Metric, ScoreMatrix};
pub use retrieval::{Direction, RetrievalReport};
pub use scorer::{ScorerModel, TrainConfig};
