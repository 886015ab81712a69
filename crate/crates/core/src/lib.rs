//! Personalized reliability prediction for blockchain peers.
//!
//! The pipeline turns raw block-request probes into four requester × peer
//! factor matrices, completes the sparse ones with item-based collaborative
//! filtering, maps factors to success rate with a linear model, and converts
//! success rate to exponential reliability for ranking. A seeded simulator
//! produces probe campaigns and an evaluation harness compares the hybrid
//! predictor with neighborhood baselines under density masking.

pub mod cli;
pub mod collab_filter;
pub mod error;
pub mod eval;
pub mod hybrid;
pub mod ingestion;
pub mod matrix_gen;
pub mod model;
pub mod seed;
pub mod simulator;

pub use error::{Error, Result};
pub use model::{CanonicalChain, Criteria, FactorSet, ObservationMatrix, ReliabilityParams, TestCase};
