//! Synthetic annotated corpora with document-level word recurrence.
//!
//! Sentences are drawn from a handful of part-of-speech templates. Content
//! words come from Zipf-distributed global pools, except that a share of
//! noun slots is filled from a small per-document topic set drawn out of a
//! large pool. Topic nouns are individually rare in the corpus but recur
//! within their document, which is what a cache can exploit.

use std::fmt::Write as _;

use rand::distributions::WeightedIndex;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthConfig {
    pub words: usize,
    pub seed: u64,
    pub min_doc_len: usize,
    pub max_doc_len: usize,
    pub nouns: usize,
    pub verbs: usize,
    pub adjectives: usize,
    pub adverbs: usize,
    pub topic_pool: usize,
    pub topic_size: usize,
    /// Probability that a noun slot takes a topic noun.
    pub topic_rate: f64,
    pub zipf_exponent: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            words: 100_000,
            seed: 0,
            min_doc_len: 1200,
            max_doc_len: 3000,
            nouns: 3000,
            verbs: 800,
            adjectives: 600,
            adverbs: 200,
            topic_pool: 30_000,
            topic_size: 24,
            topic_rate: 0.35,
            zipf_exponent: 1.05,
        }
    }
}

#[derive(Clone, Copy)]
enum Slot {
    Det,
    Adj,
    Noun,
    Verb,
    Adv,
    Adp,
    Aux,
    Pron,
    Cconj,
    Comma,
    Entity,
    Number,
}

use Slot::*;

const TEMPLATES: &[&[Slot]] = &[
    &[Det, Adj, Noun, Verb, Det, Noun],
    &[Entity, Aux, Verb, Adp, Det, Noun],
    &[Det, Noun, Adp, Det, Adj, Noun, Verb, Adv],
    &[Pron, Verb, Number, Noun, Adp, Det, Noun, Cconj, Det, Noun, Verb],
    &[Adv, Comma, Det, Noun, Aux, Verb, Det, Adj, Noun, Adp, Entity],
    &[Entity, Comma, Det, Adj, Noun, Comma, Verb, Det, Noun],
];

const DET: &[&str] = &["the", "a", "this", "that", "every"];
const ADP: &[&str] = &["of", "in", "on", "with", "for", "to"];
const AUX: &[&str] = &["will", "can", "has"];
const PRON: &[&str] = &["it", "they", "she", "we"];
const CCONJ: &[&str] = &["and", "but"];

struct Zipf(WeightedIndex<f64>);

impl Zipf {
    fn new(n: usize, s: f64) -> Self {
        Self(WeightedIndex::new((1..=n).map(|k| (k as f64).powf(-s))).expect("nonempty pool"))
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> usize {
        self.0.sample(rng)
    }
}

struct Doc<'a> {
    out: &'a mut String,
    sentence: usize,
    span: usize,
    words: usize,
}

impl Doc<'_> {
    fn token(&mut self, surface: &str, pos: &str, span: Option<usize>) {
        let ent = span.map_or_else(|| "-".to_string(), |s| format!("ENT{s}"));
        let _ = writeln!(self.out, "{surface}\t{pos}\t{ent}\ts{}", self.sentence);
        self.words += 1;
    }
}

/// Sidecar text with about `config.words` tokens (whole sentences).
pub fn generate(config: &SynthConfig) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let nouns = Zipf::new(config.nouns, config.zipf_exponent);
    let verbs = Zipf::new(config.verbs, config.zipf_exponent);
    let adjs = Zipf::new(config.adjectives, config.zipf_exponent);
    let advs = Zipf::new(config.adverbs, config.zipf_exponent);
    let mut out = String::new();
    let mut total = 0;
    let mut doc_index = 0;
    while total < config.words {
        if doc_index > 0 {
            out.push('\n');
        }
        let _ = writeln!(out, "# doc_id = synth{}-{doc_index}", config.seed);
        let len = rng
            .gen_range(config.min_doc_len..=config.max_doc_len)
            .min(config.words - total)
            .max(1);
        let topics: Vec<usize> = (0..config.topic_size)
            .map(|_| rng.gen_range(0..config.topic_pool))
            .collect();
        let entities: Vec<(usize, usize)> = (0..6)
            .map(|_| (rng.gen_range(0..5000), rng.gen_range(0..5000)))
            .collect();
        let mut doc = Doc {
            out: &mut out,
            sentence: 0,
            span: 0,
            words: 0,
        };
        while doc.words < len {
            let template = TEMPLATES[rng.gen_range(0..TEMPLATES.len())];
            for &slot in template {
                match slot {
                    Det => doc.token(DET[rng.gen_range(0..DET.len())], "DET", None),
                    Adp => doc.token(ADP[rng.gen_range(0..ADP.len())], "ADP", None),
                    Aux => doc.token(AUX[rng.gen_range(0..AUX.len())], "AUX", None),
                    Pron => doc.token(PRON[rng.gen_range(0..PRON.len())], "PRON", None),
                    Cconj => doc.token(CCONJ[rng.gen_range(0..CCONJ.len())], "CCONJ", None),
                    Comma => doc.token(",", "PUNCT", None),
                    Adj => doc.token(&format!("j{}", adjs.sample(&mut rng)), "ADJ", None),
                    Verb => doc.token(&format!("v{}", verbs.sample(&mut rng)), "VERB", None),
                    Adv => doc.token(&format!("r{}", advs.sample(&mut rng)), "ADV", None),
                    Noun => {
                        let w = if rng.gen_bool(config.topic_rate) {
                            format!("t{}", topics[rng.gen_range(0..topics.len())])
                        } else {
                            format!("n{}", nouns.sample(&mut rng))
                        };
                        doc.token(&w, "NOUN", None)
                    }
                    Entity => {
                        let (first, last) = entities[rng.gen_range(0..entities.len())];
                        let span = Some(doc.span);
                        doc.token(&format!("F{first}"), "PROPN", span);
                        if rng.gen_bool(0.5) {
                            doc.token(&format!("L{last}"), "PROPN", span);
                        }
                        doc.span += 1;
                    }
                    Number => {
                        let span = Some(doc.span);
                        doc.token(&rng.gen_range(2..100).to_string(), "NUM", span);
                        doc.span += 1;
                    }
                }
            }
            doc.token(".", "PUNCT", None);
            doc.sentence += 1;
        }
        total += doc.words;
        doc_index += 1;
    }
    out
}
