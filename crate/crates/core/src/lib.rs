//! Uncertainty-aware pseudo-labeling (UPL) for class-imbalanced transductive
//! node classification.
//!
//! The crate is organised bottom-up:
//!
//! - [`graph`]: CSR adjacency, the four graph filters and per-class degree statistics.
//! - [`nn`]: dense kernels, sparse-dense products and a two-layer GCN with
//!   hand-written backpropagation and Adam.
//! - [`loss`]: weighted cross-entropy (vanilla, re-weighting, balanced softmax)
//!   and the γ-margin loss.
//! - [`ser`]: selective edge removal and entropy-variance uncertainty.
//! - [`pipeline`]: the outer pseudo-labeling loop and the supervised baselines.
//! - [`bounds`]: numerical evaluation of the population-risk upper bound.
//! - [`data`], [`split`], [`metrics`]: dataset files, imbalanced splits and
//!   evaluation metrics.

pub mod bounds;
pub mod data;
pub mod error;
pub mod graph;
pub mod loss;
pub mod metrics;
pub mod nn;
pub mod pipeline;
pub mod rng;
pub mod ser;
pub mod split;
pub mod synthetic;

pub use error::{Result, UplError};
