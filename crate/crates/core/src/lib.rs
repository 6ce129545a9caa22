//! Taste diversity from co-consumption, plus the supporting pipeline:
//! home-location inference, census enrichment, regression and agreement
//! statistics.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod divcore;
pub mod error;
pub mod geo;
pub mod ingest;
pub mod report;
pub mod stats;
pub mod synth;
mod table;

pub use divcore::{
    classical_mds, cosine_distance_matrix, diversity_batch, rao_stirling, shannon_entropy, volume,
    DistanceMatrix, DiversityReport, MdsEmbedding,
};
pub use error::{Error, Result};
pub use ingest::{ConsumptionMatrix, FilterPolicy, Level};
