//! Interpolated Kneser-Ney n-gram model.
//!
//! The highest order uses raw counts; lower orders use continuation counts
//! (the number of distinct words seen to the left). The unigram level is
//! interpolated with a uniform distribution over the vocabulary plus the
//! unknown-word class, so every word gets nonzero mass.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use super::{ConditionalModel, ModelError};
use crate::lexicon::{is_reserved, WordId, PAD, SEP};
use crate::windows::RealizedWindow;

/// History filler before the first word of a context.
pub const BOS: WordId = u32::MAX - 1;

/// How the separator between ablated prefix and continuation is read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SeparatorPolicy {
    /// Skipped: histories run across it into the prefix.
    #[default]
    Transparent,
    /// Acts as the start of the context.
    Boundary,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NGramConfig {
    pub order: usize,
    pub discount: f64,
    #[serde(default)]
    pub separator: SeparatorPolicy,
}

impl Default for NGramConfig {
    fn default() -> Self {
        Self {
            order: 3,
            discount: 0.75,
            separator: SeparatorPolicy::Transparent,
        }
    }
}

impl NGramConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.order == 0 {
            return Err(ModelError::InvalidConfig("order must be at least 1".into()));
        }
        if !(self.discount > 0.0 && self.discount < 1.0) {
            return Err(ModelError::InvalidConfig(format!(
                "discount {} outside (0, 1)",
                self.discount
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default)]
struct Level {
    counts: HashMap<Box<[WordId]>, u64>,
    /// Per history: (total count, distinct followers).
    contexts: HashMap<Box<[WordId]>, (u64, u64)>,
}

impl Level {
    fn from_counts(counts: HashMap<Box<[WordId]>, u64>) -> Self {
        let mut contexts: HashMap<Box<[WordId]>, (u64, u64)> = HashMap::new();
        for (gram, &c) in &counts {
            let entry = contexts.entry(gram[..gram.len() - 1].into()).or_default();
            entry.0 += c;
            entry.1 += 1;
        }
        Self { counts, contexts }
    }
}

#[derive(Debug, Clone)]
pub struct NGramModel {
    config: NGramConfig,
    vocab: Vec<WordId>,
    /// `levels[k - 1]` holds order-`k` statistics.
    levels: Vec<Level>,
}

/// Serializable form of a trained model. Lower orders are rebuilt on load.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NGramSnapshot {
    pub config: NGramConfig,
    pub vocab: Vec<WordId>,
    pub grams: Vec<(Vec<WordId>, u64)>,
}

impl NGramModel {
    /// Train on (context, target) pairs. Counting is deterministic and
    /// independent of pair order.
    pub fn train<'a, I>(pairs: I, config: NGramConfig) -> Result<Self, ModelError>
    where
        I: IntoIterator<Item = (&'a [WordId], WordId)>,
    {
        config.validate()?;
        let order = config.order;
        let mut vocab = BTreeSet::new();
        let mut top: HashMap<Box<[WordId]>, u64> = HashMap::new();
        let mut key = Vec::with_capacity(order);
        for (index, (context, target)) in pairs.into_iter().enumerate() {
            if is_reserved(target) {
                return Err(ModelError::ReservedTarget { index });
            }
            history(context, order - 1, config.separator, &mut key);
            key.push(target);
            vocab.insert(target);
            *top.entry(key.as_slice().into()).or_insert(0) += 1;
        }
        if top.is_empty() {
            return Err(ModelError::EmptyTraining);
        }
        Ok(Self::assemble(config, vocab.into_iter().collect(), top))
    }

    pub fn train_windows(windows: &[RealizedWindow], config: NGramConfig) -> Result<Self, ModelError> {
        Self::train(windows.iter().flat_map(|w| w.training_pairs()), config)
    }

    fn assemble(config: NGramConfig, vocab: Vec<WordId>, top: HashMap<Box<[WordId]>, u64>) -> Self {
        let order = config.order;
        let mut levels = vec![Level::default(); order];
        let mut upper = top;
        for k in (1..order).rev() {
            let mut lower: HashMap<Box<[WordId]>, u64> = HashMap::new();
            for gram in upper.keys() {
                *lower.entry(gram[1..].into()).or_insert(0) += 1;
            }
            levels[k] = Level::from_counts(upper);
            upper = lower;
        }
        levels[0] = Level::from_counts(upper);
        Self {
            config,
            vocab,
            levels,
        }
    }

    pub fn config(&self) -> &NGramConfig {
        &self.config
    }

    pub fn order(&self) -> usize {
        self.config.order
    }

    /// Vocabulary size including the unknown-word class.
    pub fn class_count(&self) -> usize {
        self.vocab.len() + 1
    }

    pub fn knows(&self, word: WordId) -> bool {
        self.vocab.binary_search(&word).is_ok()
    }

    /// Probability of `target` given an already extracted history of
    /// exactly `order - 1` words.
    fn prob_with_history(&self, key: &mut Vec<WordId>, target: WordId) -> f64 {
        let d = self.config.discount;
        let n = self.config.order;
        key.push(target);
        let mut p = 1.0 / self.class_count() as f64;
        for k in 1..=n {
            let gram = &key[n - k..];
            let level = &self.levels[k - 1];
            if let Some(&(total, types)) = level.contexts.get(&gram[..k - 1]) {
                let c = level.counts.get(gram).copied().unwrap_or(0) as f64;
                p = ((c - d).max(0.0) + d * types as f64 * p) / total as f64;
            }
        }
        key.pop();
        p
    }

    pub fn snapshot(&self) -> NGramSnapshot {
        let mut grams: Vec<(Vec<WordId>, u64)> = self.levels[self.config.order - 1]
            .counts
            .iter()
            .map(|(g, &c)| (g.to_vec(), c))
            .collect();
        grams.sort_unstable();
        NGramSnapshot {
            config: self.config,
            vocab: self.vocab.clone(),
            grams,
        }
    }

    pub fn from_snapshot(snapshot: NGramSnapshot) -> Result<Self, ModelError> {
        snapshot.config.validate()?;
        if snapshot.grams.is_empty() {
            return Err(ModelError::EmptyTraining);
        }
        let order = snapshot.config.order;
        let mut top = HashMap::with_capacity(snapshot.grams.len());
        for (gram, c) in snapshot.grams {
            if gram.len() != order {
                return Err(ModelError::InvalidConfig(format!(
                    "{}-gram in an order-{order} snapshot",
                    gram.len()
                )));
            }
            top.insert(gram.into_boxed_slice(), c);
        }
        let mut vocab = snapshot.vocab;
        vocab.sort_unstable();
        vocab.dedup();
        Ok(Self::assemble(snapshot.config, vocab, top))
    }
}

/// The last `len` words of `context` that precede any boundary, left-padded
/// with [`BOS`]. Padding is always a boundary.
fn history(context: &[WordId], len: usize, separator: SeparatorPolicy, out: &mut Vec<WordId>) {
    out.clear();
    for &w in context.iter().rev() {
        if out.len() == len {
            break;
        }
        match w {
            PAD => break,
            SEP if separator == SeparatorPolicy::Transparent => continue,
            SEP => break,
            w => out.push(w),
        }
    }
    out.resize(len, BOS);
    out.reverse();
}

impl ConditionalModel for NGramModel {
    fn name(&self) -> String {
        format!("ngram{}", self.config.order)
    }

    fn log_prob(&self, context: &[WordId], target: WordId) -> f64 {
        let mut key = Vec::with_capacity(self.config.order);
        history(context, self.config.order - 1, self.config.separator, &mut key);
        self.prob_with_history(&mut key, target).ln()
    }

    fn vocabulary(&self) -> &[WordId] {
        &self.vocab
    }

    fn score_positions(&self, input: &[WordId], scored: &[usize]) -> Result<Vec<f64>, ModelError> {
        super::check_positions(input, scored)?;
        let mut key = Vec::with_capacity(self.config.order);
        Ok(scored
            .iter()
            .map(|&i| {
                history(&input[..i], self.config.order - 1, self.config.separator, &mut key);
                self.prob_with_history(&mut key, input[i]).ln()
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lexicon::UNK;
    use crate::models::total_probability;

    fn train_seq(seq: &[WordId], config: NGramConfig) -> NGramModel {
        NGramModel::train((0..seq.len()).map(|i| (&seq[..i], seq[i])), config).unwrap()
    }

    fn order(n: usize) -> NGramConfig {
        NGramConfig {
            order: n,
            ..NGramConfig::default()
        }
    }

    #[test]
    fn bigram_by_hand() {
        // a=2, b=3 over "a b a b a".
        // Continuation counts: a has left contexts {BOS, b}, b has {a}.
        // p1(b) = (1 - .75)/3 + .75 * 2/3 * 1/3 = 0.25
        // p2(b|a) = (2 - .75)/2 + .75 * 1/2 * p1(b) = 0.71875
        let m = train_seq(&[2, 3, 2, 3, 2], order(2));
        assert!((m.log_prob(&[2], 3).exp() - 0.71875).abs() < 1e-12);
        let p1_b: f64 = (1.0 - 0.75) / 3.0 + 0.75 * 2.0 / 3.0 / 3.0;
        assert!((p1_b - 0.25).abs() < 1e-15);
    }

    #[test]
    fn unigram_follows_counts() {
        let m = train_seq(&[2, 2, 3], order(1));
        assert!(m.log_prob(&[], 2) > m.log_prob(&[], 3));
        assert!(m.log_prob(&[], 3) > m.log_prob(&[], UNK));
    }

    #[test]
    fn normalized_everywhere() {
        let seq: Vec<WordId> = (0..400u32).map(|i| 2 + (i * 7 + i / 3) % 13).collect();
        let m = train_seq(&seq, order(3));
        for ctx in [&[][..], &[2], &[5, 9], &[4, SEP, 7], &[4, PAD, 7], &[99, 98]] {
            let total = total_probability(&m, ctx);
            assert!((total - 1.0).abs() < 1e-9, "{ctx:?}: {total}");
        }
    }

    #[test]
    fn separator_and_padding() {
        let mut h = Vec::new();
        history(&[5, 6, SEP, 7], 2, SeparatorPolicy::Transparent, &mut h);
        assert_eq!(h, vec![6, 7]);
        history(&[5, 6, SEP, 7], 2, SeparatorPolicy::Boundary, &mut h);
        assert_eq!(h, vec![BOS, 7]);
        history(&[5, PAD, SEP], 2, SeparatorPolicy::Transparent, &mut h);
        assert_eq!(h, vec![BOS, BOS]);
        history(&[], 0, SeparatorPolicy::Transparent, &mut h);
        assert!(h.is_empty());
    }

    #[test]
    fn locality() {
        let seq: Vec<WordId> = (0..300u32).map(|i| 2 + (i * i) % 17).collect();
        let m = train_seq(&seq, order(3));
        let a = m.log_prob(&[9, 9, 9, 4, 5], 6);
        let b = m.log_prob(&[3, 4, 5], 6);
        assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn errors() {
        assert!(matches!(
            NGramModel::train(std::iter::empty(), order(3)),
            Err(ModelError::EmptyTraining)
        ));
        assert!(NGramModel::train(std::iter::empty(), order(0)).is_err());
        let bad = NGramConfig {
            discount: 1.0,
            ..NGramConfig::default()
        };
        assert!(bad.validate().is_err());
        let m = train_seq(&[2, 3], order(2));
        assert!(matches!(
            m.score_positions(&[2, SEP, 3], &[1]),
            Err(ModelError::ReservedTarget { index: 1 })
        ));
        assert!(matches!(
            m.score_positions(&[2], &[4]),
            Err(ModelError::OutOfRange { index: 4 })
        ));
    }

    #[test]
    fn deterministic_and_snapshot_round_trip() {
        let seq: Vec<WordId> = (0..500u32).map(|i| 2 + (i * 31 + 7) % 23).collect();
        let a = train_seq(&seq, order(3));
        let b = train_seq(&seq, order(3));
        let restored = NGramModel::from_snapshot(
            serde_json::from_str(&serde_json::to_string(&a.snapshot()).unwrap()).unwrap(),
        )
        .unwrap();
        let scored: Vec<usize> = (0..seq.len()).collect();
        let sa = a.score_positions(&seq, &scored).unwrap();
        let sb = b.score_positions(&seq, &scored).unwrap();
        let sr = restored.score_positions(&seq, &scored).unwrap();
        for ((x, y), z) in sa.iter().zip(&sb).zip(&sr) {
            assert_eq!(x.to_bits(), y.to_bits());
            assert_eq!(x.to_bits(), z.to_bits());
            assert!(*x <= 0.0 && x.is_finite());
        }
    }
}
