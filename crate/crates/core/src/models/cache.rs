//! Unigram cache interpolated with an n-gram base.
//!
//! The cache is the bag of non-padding, non-separator words in the context.
//! Its distribution is add-one smoothed over the vocabulary plus the
//! unknown-word class; context words outside the vocabulary count toward
//! the unknown class.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::ngram::{NGramConfig, NGramModel, SeparatorPolicy};
use super::{check_positions, ConditionalModel, ModelError};
use crate::lexicon::{WordId, PAD, SEP, UNK};
use crate::windows::RealizedWindow;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CacheConfig {
    pub base: NGramConfig,
    pub lambda: f64,
}

impl Default for CacheConfig {
    /// The base model treats the separator as a context start, so the
    /// prefix reaches the model only through the cache.
    fn default() -> Self {
        Self {
            base: NGramConfig {
                separator: SeparatorPolicy::Boundary,
                ..NGramConfig::default()
            },
            lambda: 0.2,
        }
    }
}

impl CacheConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if !(self.lambda > 0.0 && self.lambda <= 1.0) {
            return Err(ModelError::InvalidConfig(format!(
                "cache weight {} outside (0, 1]",
                self.lambda
            )));
        }
        self.base.validate()
    }
}

#[derive(Debug, Clone)]
pub struct CacheModel {
    base: NGramModel,
    lambda: f64,
}

impl CacheModel {
    pub fn new(base: NGramModel, lambda: f64) -> Result<Self, ModelError> {
        CacheConfig {
            base: *base.config(),
            lambda,
        }
        .validate()?;
        Ok(Self { base, lambda })
    }

    pub fn train<'a, I>(pairs: I, config: CacheConfig) -> Result<Self, ModelError>
    where
        I: IntoIterator<Item = (&'a [WordId], WordId)>,
    {
        config.validate()?;
        Self::new(NGramModel::train(pairs, config.base)?, config.lambda)
    }

    pub fn train_windows(windows: &[RealizedWindow], config: CacheConfig) -> Result<Self, ModelError> {
        Self::train(windows.iter().flat_map(|w| w.training_pairs()), config)
    }

    pub fn base(&self) -> &NGramModel {
        &self.base
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    fn class_of(&self, w: WordId) -> WordId {
        if self.base.knows(w) {
            w
        } else {
            UNK
        }
    }

    fn mix(&self, hits: u64, bag: u64, base_log_prob: f64) -> f64 {
        let v = self.base.class_count() as f64;
        let cache = (hits as f64 + 1.0) / (bag as f64 + v);
        (self.lambda * cache + (1.0 - self.lambda) * base_log_prob.exp()).ln()
    }
}

fn in_bag(w: WordId) -> bool {
    w != PAD && w != SEP
}

impl ConditionalModel for CacheModel {
    fn name(&self) -> String {
        format!("cache{}", self.base.order())
    }

    fn log_prob(&self, context: &[WordId], target: WordId) -> f64 {
        let class = self.class_of(target);
        let mut bag = 0;
        let mut hits = 0;
        for &w in context.iter().filter(|&&w| in_bag(w)) {
            bag += 1;
            if self.class_of(w) == class {
                hits += 1;
            }
        }
        self.mix(hits, bag, self.base.log_prob(context, target))
    }

    fn vocabulary(&self) -> &[WordId] {
        self.base.vocabulary()
    }

    /// One pass over the input, growing the bag as positions advance.
    fn score_positions(&self, input: &[WordId], scored: &[usize]) -> Result<Vec<f64>, ModelError> {
        check_positions(input, scored)?;
        let mut order: Vec<usize> = (0..scored.len()).collect();
        order.sort_by_key(|&k| scored[k]);
        let base = self.base.score_positions(input, scored)?;
        let mut counts: HashMap<WordId, u64> = HashMap::new();
        let mut bag = 0u64;
        let mut next = 0usize;
        let mut out = vec![0.0; scored.len()];
        for k in order {
            let i = scored[k];
            for &w in &input[next..i] {
                if in_bag(w) {
                    bag += 1;
                    *counts.entry(self.class_of(w)).or_insert(0) += 1;
                }
            }
            next = next.max(i);
            let hits = counts.get(&self.class_of(input[i])).copied().unwrap_or(0);
            out[k] = self.mix(hits, bag, base[k]);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::total_probability;

    fn trained(lambda: f64) -> CacheModel {
        // Vocabulary {2, 3, 4, 5}: five classes with the unknown word.
        let seq: Vec<WordId> = vec![2, 3, 4, 5, 2, 3, 4, 2, 2, 5];
        let config = CacheConfig {
            lambda,
            ..CacheConfig::default()
        };
        CacheModel::train((0..seq.len()).map(|i| (&seq[..i], seq[i])), config).unwrap()
    }

    #[test]
    fn pure_cache_closed_form() {
        let m = trained(1.0);
        assert_eq!(m.base().class_count(), 5);
        // Target 3 appears 3 times among 10 cache words; padding and the
        // separator are not cache words.
        let ctx = [PAD, 3, 2, 3, 4, 5, 3, 2, 2, SEP, 4, 5];
        let expected = (4.0f64 / 15.0).ln();
        assert!((m.log_prob(&ctx, 3) - expected).abs() < 1e-12);
    }

    #[test]
    fn unknown_words_share_a_class() {
        let m = trained(1.0);
        let ctx = [77, 88, 2];
        assert!((m.log_prob(&ctx, 99) - (3.0f64 / 8.0).ln()).abs() < 1e-12);
    }

    #[test]
    fn normalized() {
        let m = trained(0.2);
        for ctx in [&[][..], &[2, 2, 9], &[3, SEP, 4, PAD, 5]] {
            assert!((total_probability(&m, ctx) - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn batched_matches_per_position() {
        let m = trained(0.3);
        let input: Vec<WordId> = vec![PAD, 3, 9, 2, SEP, 4, 2, 2, 5, 3, 11, 4];
        let scored: Vec<usize> = vec![5, 6, 7, 8, 9, 10, 11];
        let batched = m.score_positions(&input, &scored).unwrap();
        for (k, &i) in scored.iter().enumerate() {
            assert!((batched[k] - m.log_prob(&input[..i], input[i])).abs() < 1e-12);
        }
        let rev: Vec<usize> = scored.iter().rev().copied().collect();
        let back = m.score_positions(&input, &rev).unwrap();
        assert_eq!(back.iter().rev().copied().collect::<Vec<_>>(), batched);
    }

    #[test]
    fn prefix_order_is_irrelevant() {
        let m = trained(0.2);
        let a = [2, 3, 4, 5, SEP, 2, 4];
        let b = [5, 4, 3, 2, SEP, 2, 4];
        let sa = m.score_positions(&a, &[5, 6]).unwrap();
        let sb = m.score_positions(&b, &[5, 6]).unwrap();
        assert_eq!(sa, sb);
    }

    #[test]
    fn rejects_bad_weight() {
        let base = trained(0.2).base().clone();
        assert!(CacheModel::new(base.clone(), 0.0).is_err());
        assert!(CacheModel::new(base, 1.5).is_err());
    }
}
