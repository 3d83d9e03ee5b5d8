//! Context ablations and ablated-information metrics for language models.
//!
//! A document window is split into a prefix, which an ablation transforms,
//! and a continuation, which is scored. Comparing the held-out likelihood of
//! a model trained on ablated prefixes with models trained on full and on
//! absent prefixes measures how much of the prefix's usable information the
//! ablation destroys.

pub mod ablate;
pub mod corpus;
pub mod lexicon;
pub mod metrics;
pub mod models;
pub mod rng;
pub mod windows;
