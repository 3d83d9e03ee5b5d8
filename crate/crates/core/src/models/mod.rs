//! Predictor classes.
//!
//! Built-in models implement [`ConditionalModel`] and are shared immutably
//! across scoring threads. External models are reached through
//! [`adapter::AdapterModel`], which owns a serial connection.

pub mod adapter;
pub mod cache;
pub mod ngram;

use std::io;
use std::time::Duration;

use thiserror::Error;

use crate::lexicon::{is_reserved, WordId};
use crate::windows::{RealizedWindow, Stratum};

pub use cache::{CacheConfig, CacheModel};
pub use ngram::{NGramConfig, NGramModel, SeparatorPolicy};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("empty training stream")]
    EmptyTraining,
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
    #[error("position {index} targets a reserved token")]
    ReservedTarget { index: usize },
    #[error("position {index} is outside the input")]
    OutOfRange { index: usize },
    #[error("adapter i/o: {0}")]
    Io(#[from] io::Error),
    #[error("adapter did not answer within {0:?}")]
    Timeout(Duration),
    #[error("adapter closed the connection")]
    Closed,
    #[error("malformed adapter message: {0}")]
    Malformed(String),
    #[error("adapter speaks protocol {got}, expected {expected}")]
    VersionMismatch { expected: u32, got: u32 },
    #[error("adapter returned {got} scores for {expected} positions")]
    Alignment { expected: usize, got: usize },
    #[error("adapter returned invalid log-probability {value} at position {index}")]
    InvalidScore { index: usize, value: f64 },
    #[error("adapter error: {0}")]
    Remote(String),
}

/// Anything that assigns natural-log probabilities to scored positions of a
/// realized input.
pub trait LanguageModel {
    fn name(&self) -> String;

    /// `log p(input[i] | input[..i])` for every `i` in `scored`.
    fn score(
        &mut self,
        input: &[WordId],
        separator_index: Option<usize>,
        scored: &[usize],
    ) -> Result<Vec<f64>, ModelError>;
}

/// A trained, immutable model over word ids.
pub trait ConditionalModel: Sync {
    fn name(&self) -> String;

    /// Natural-log probability of `target` after `context`. Targets outside
    /// the training vocabulary share the unknown-word class.
    fn log_prob(&self, context: &[WordId], target: WordId) -> f64;

    /// Training vocabulary, sorted. The unknown-word class is implicit.
    fn vocabulary(&self) -> &[WordId];

    fn score_positions(&self, input: &[WordId], scored: &[usize]) -> Result<Vec<f64>, ModelError> {
        check_positions(input, scored)?;
        Ok(scored
            .iter()
            .map(|&i| self.log_prob(&input[..i], input[i]))
            .collect())
    }
}

impl<T: ConditionalModel> LanguageModel for T {
    fn name(&self) -> String {
        ConditionalModel::name(self)
    }

    fn score(
        &mut self,
        input: &[WordId],
        _separator_index: Option<usize>,
        scored: &[usize],
    ) -> Result<Vec<f64>, ModelError> {
        self.score_positions(input, scored)
    }
}

pub(crate) fn check_positions(input: &[WordId], scored: &[usize]) -> Result<(), ModelError> {
    for &index in scored {
        match input.get(index) {
            None => return Err(ModelError::OutOfRange { index }),
            Some(&id) if is_reserved(id) => return Err(ModelError::ReservedTarget { index }),
            _ => {}
        }
    }
    Ok(())
}

/// Log-probabilities of the positions of `window` in `stratum`.
pub fn score_window<M: LanguageModel + ?Sized>(
    model: &mut M,
    window: &RealizedWindow,
    stratum: &Stratum,
) -> Result<Vec<f64>, ModelError> {
    let scored: Vec<usize> = window.scored_range(stratum).collect();
    model.score(&window.input, window.separator_index, &scored)
}

/// Sum of `exp(log_prob)` over the vocabulary and the unknown-word class.
pub fn total_probability<M: ConditionalModel + ?Sized>(model: &M, context: &[WordId]) -> f64 {
    model
        .vocabulary()
        .iter()
        .map(|&w| model.log_prob(context, w).exp())
        .sum::<f64>()
        + model.log_prob(context, crate::lexicon::UNK).exp()
}
