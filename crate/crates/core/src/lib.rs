//! Training and evaluation workbench for grounded visual captioning on
//! synthetic scenes.
//!
//! The library builds a small captioning model (two LSTMs with soft attention
//! over region features) and trains it with a cyclical regimen: decode a
//! caption, localize the decoded words back to regions, then reconstruct the
//! caption from the localized regions with the same decoder parameters. The
//! point of the cycle is to improve *grounding* (attending to the region a
//! word actually talks about) without any localization labels.
//!
//! Everything runs on the CPU in `f64` via a small reverse-mode autodiff
//! graph ([`numcore`]). Datasets are generated synthetically ([`synthdata`])
//! with known word-to-region alignments so grounding quality is measurable
//! exactly ([`metrics`]).
//!
//! Determinism contract: every public entry point that consumes a seed
//! produces bitwise-identical results across runs, thread counts, and the
//! `parallel` feature flag. Batch reductions happen in example-index order.

pub mod error;
pub mod metrics;
pub mod model;
pub mod numcore;
pub mod parallel;
pub mod rng;
pub mod synthdata;
pub mod training;

pub use error::{Error, Result};
