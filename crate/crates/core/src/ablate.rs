//! Context ablations.
//!
//! Every ablation is a pure function of a document slice (plus, for the
//! shuffles, a seeded generator). Outputs reference document positions
//! rather than copying words, so an [`AblatedSegment`] is cheap to build and
//! can be rendered as text or mapped to word ids.
//!
//! Shuffles preserve length and the word multiset. Deletion ablations keep
//! an order-preserving subsequence and restore the original length with
//! padding at the *beginning* of the segment.

use std::collections::BTreeSet;
use std::fmt;
use std::ops::Range;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{AnnotatedDocument, FrequencyClass, FrequencyPartition, PosClass};
use crate::rng;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AblationError {
    #[error("invalid shuffle mode: unit `{unit}` with scope `{scope}`")]
    InvalidShuffle {
        unit: ShuffleUnit,
        scope: ShuffleScope,
    },
    #[error("ablation `{0}` needs a non-empty POS set")]
    EmptyPosSet(String),
    #[error("ablation `{0}` needs a frequency partition")]
    MissingPartition(String),
    #[error("ablation `{spec}` needs POS/entity annotations, document `{doc_id}` has none")]
    MissingAnnotations { spec: String, doc_id: String },
    #[error("unknown ablation preset `{0}`")]
    UnknownPreset(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShuffleUnit {
    Word,
    TrigramBlock,
    Sentence,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShuffleScope {
    Context,
    Sentence,
    TrigramBlock,
}

impl fmt::Display for ShuffleUnit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ShuffleUnit::Word => "word",
            ShuffleUnit::TrigramBlock => "trigram_block",
            ShuffleUnit::Sentence => "sentence",
        })
    }
}

impl fmt::Display for ShuffleScope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ShuffleScope::Context => "context",
            ShuffleScope::Sentence => "sentence",
            ShuffleScope::TrigramBlock => "trigram_block",
        })
    }
}

/// The six supported (unit, scope) shuffle modes.
pub const SHUFFLE_MODES: [(ShuffleUnit, ShuffleScope); 6] = [
    (ShuffleUnit::Word, ShuffleScope::Context),
    (ShuffleUnit::TrigramBlock, ShuffleScope::Context),
    (ShuffleUnit::Word, ShuffleScope::Sentence),
    (ShuffleUnit::Word, ShuffleScope::TrigramBlock),
    (ShuffleUnit::TrigramBlock, ShuffleScope::Sentence),
    (ShuffleUnit::Sentence, ShuffleScope::Context),
];

pub fn is_valid_shuffle(unit: ShuffleUnit, scope: ShuffleScope) -> bool {
    SHUFFLE_MODES.contains(&(unit, scope))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Ablation {
    Identity,
    Shuffle {
        unit: ShuffleUnit,
        scope: ShuffleScope,
    },
    ReplaceWithOld,
    PosFilter {
        pos_set: BTreeSet<PosClass>,
    },
    EntityFilter,
    FrequencyFilter {
        keep: FrequencyClass,
    },
    EraseAll,
    /// Nouns-and-verbs style filter whose padding is refilled with matching
    /// words from before the window.
    ExtendWithPriorContent {
        pos_set: BTreeSet<PosClass>,
    },
}

impl Ablation {
    pub fn is_order_ablation(&self) -> bool {
        matches!(self, Ablation::Shuffle { .. })
    }

    pub fn needs_annotations(&self) -> bool {
        matches!(
            self,
            Ablation::PosFilter { .. }
                | Ablation::EntityFilter
                | Ablation::ExtendWithPriorContent { .. }
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AblationSpec {
    pub name: String,
    #[serde(flatten)]
    pub ablation: Ablation,
    #[serde(default)]
    pub seed: u64,
}

fn classes(set: &[PosClass]) -> BTreeSet<PosClass> {
    set.iter().copied().collect()
}

/// Canonical preset names, in report order.
pub const PRESET_NAMES: [&str; 18] = [
    "identity",
    "shuffle-all",
    "shuf-trigrams-globally",
    "shuf-within-sent",
    "shuf-within-trigrams",
    "shuf-trigrams-within-sent",
    "shuf-sent",
    "replace-w-old",
    "nouns",
    "nouns-verbs",
    "nouns-verbs-adj",
    "content-words",
    "func-words",
    "named-entities",
    "common",
    "rare",
    "nouns-verbs-extended",
    "erase-all",
];

impl AblationSpec {
    pub fn new(name: impl Into<String>, ablation: Ablation) -> Self {
        Self {
            name: name.into(),
            ablation,
            seed: 0,
        }
    }

    pub fn preset(name: &str) -> Result<Self, AblationError> {
        use PosClass::*;
        use ShuffleScope as Sc;
        use ShuffleUnit as U;
        let shuffle = |unit, scope| Ablation::Shuffle { unit, scope };
        let ablation = match name {
            "identity" => Ablation::Identity,
            "shuffle-all" => shuffle(U::Word, Sc::Context),
            "shuf-trigrams-globally" => shuffle(U::TrigramBlock, Sc::Context),
            "shuf-within-sent" => shuffle(U::Word, Sc::Sentence),
            "shuf-within-trigrams" => shuffle(U::Word, Sc::TrigramBlock),
            "shuf-trigrams-within-sent" => shuffle(U::TrigramBlock, Sc::Sentence),
            "shuf-sent" => shuffle(U::Sentence, Sc::Context),
            "replace-w-old" => Ablation::ReplaceWithOld,
            "nouns" => Ablation::PosFilter {
                pos_set: classes(&[Noun]),
            },
            "nouns-verbs" => Ablation::PosFilter {
                pos_set: classes(&[Noun, Verb]),
            },
            "nouns-verbs-adj" => Ablation::PosFilter {
                pos_set: classes(&[Noun, Verb, Adjective]),
            },
            "content-words" => Ablation::PosFilter {
                pos_set: classes(&PosClass::CONTENT),
            },
            "func-words" => Ablation::PosFilter {
                pos_set: classes(&[Function]),
            },
            "named-entities" => Ablation::EntityFilter,
            "common" => Ablation::FrequencyFilter {
                keep: FrequencyClass::Common,
            },
            "rare" => Ablation::FrequencyFilter {
                keep: FrequencyClass::Rare,
            },
            "nouns-verbs-extended" => Ablation::ExtendWithPriorContent {
                pos_set: classes(&[Noun, Verb]),
            },
            "erase-all" => Ablation::EraseAll,
            other => return Err(AblationError::UnknownPreset(other.to_string())),
        };
        Ok(Self::new(name, ablation))
    }

    pub fn validate(&self) -> Result<(), AblationError> {
        match &self.ablation {
            Ablation::Shuffle { unit, scope } if !is_valid_shuffle(*unit, *scope) => {
                Err(AblationError::InvalidShuffle {
                    unit: *unit,
                    scope: *scope,
                })
            }
            Ablation::PosFilter { pos_set } | Ablation::ExtendWithPriorContent { pos_set }
                if pos_set.is_empty() =>
            {
                Err(AblationError::EmptyPosSet(self.name.clone()))
            }
            _ => Ok(()),
        }
    }
}

/// One position of an ablated segment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Slot {
    Pad,
    /// A word, by its position in the source document.
    Word(usize),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AblatedSegment {
    pub slots: Vec<Slot>,
    /// For deletion ablations: which input positions survived.
    pub kept_mask: Option<Vec<bool>>,
    pub original_length: usize,
    /// Padding added because the document did not hold enough words
    /// (`replace_with_old` near a document start).
    pub shortfall: usize,
}

impl AblatedSegment {
    fn unchanged(range: Range<usize>) -> Self {
        let len = range.len();
        Self {
            slots: range.map(Slot::Word).collect(),
            kept_mask: None,
            original_length: len,
            shortfall: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn padding_count(&self) -> usize {
        self.slots.iter().filter(|s| **s == Slot::Pad).count()
    }

    pub fn words<'a>(&self, doc: &'a AnnotatedDocument, padding: &'a str) -> Vec<&'a str> {
        self.slots
            .iter()
            .map(|s| match s {
                Slot::Pad => padding,
                Slot::Word(p) => doc.tokens[*p].surface.as_str(),
            })
            .collect()
    }

    /// Non-padding words joined by single spaces.
    pub fn kept_text(&self, doc: &AnnotatedDocument) -> String {
        let words: Vec<&str> = self
            .slots
            .iter()
            .filter_map(|s| match s {
                Slot::Pad => None,
                Slot::Word(p) => Some(doc.tokens[*p].surface.as_str()),
            })
            .collect();
        words.join(" ")
    }
}

/// Contiguous runs of positions sharing a sentence index. Partial sentences
/// at the edges of the range count as sentences.
fn sentence_runs(doc: &AnnotatedDocument, range: Range<usize>) -> Vec<Vec<usize>> {
    let mut runs: Vec<Vec<usize>> = Vec::new();
    let mut last = None;
    for p in range {
        let s = doc.tokens[p].sentence_index;
        if last != Some(s) {
            runs.push(Vec::new());
            last = Some(s);
        }
        runs.last_mut().unwrap().push(p);
    }
    runs
}

/// Non-overlapping blocks of three formed left to right; a final block of
/// one or two words stands alone.
fn trigram_blocks(positions: &[usize]) -> Vec<Vec<usize>> {
    positions.chunks(3).map(<[usize]>::to_vec).collect()
}

fn shuffle_blocks<R: Rng + ?Sized>(mut blocks: Vec<Vec<usize>>, rng: &mut R) -> Vec<usize> {
    blocks.shuffle(rng);
    blocks.into_iter().flatten().collect()
}

pub fn shuffle<R: Rng + ?Sized>(
    doc: &AnnotatedDocument,
    range: Range<usize>,
    unit: ShuffleUnit,
    scope: ShuffleScope,
    rng: &mut R,
) -> Result<AblatedSegment, AblationError> {
    use ShuffleScope as Sc;
    use ShuffleUnit as U;
    let positions: Vec<usize> = range.clone().collect();
    let order: Vec<usize> = match (unit, scope) {
        (U::Word, Sc::Context) => {
            let mut p = positions;
            p.shuffle(rng);
            p
        }
        (U::TrigramBlock, Sc::Context) => shuffle_blocks(trigram_blocks(&positions), rng),
        (U::Word, Sc::Sentence) => sentence_runs(doc, range.clone())
            .into_iter()
            .flat_map(|mut s| {
                s.shuffle(rng);
                s
            })
            .collect(),
        (U::Word, Sc::TrigramBlock) => trigram_blocks(&positions)
            .into_iter()
            .flat_map(|mut b| {
                b.shuffle(rng);
                b
            })
            .collect(),
        (U::TrigramBlock, Sc::Sentence) => sentence_runs(doc, range.clone())
            .into_iter()
            .flat_map(|s| shuffle_blocks(trigram_blocks(&s), rng))
            .collect(),
        (U::Sentence, Sc::Context) => shuffle_blocks(sentence_runs(doc, range.clone()), rng),
        (unit, scope) => return Err(AblationError::InvalidShuffle { unit, scope }),
    };
    Ok(AblatedSegment {
        slots: order.into_iter().map(Slot::Word).collect(),
        kept_mask: None,
        original_length: range.len(),
        shortfall: 0,
    })
}

/// The `length` words immediately before `window_start`, left-padded when
/// the document does not reach back that far.
pub fn replace_with_old(window_start: usize, length: usize) -> AblatedSegment {
    let available = window_start.min(length);
    let shortfall = length - available;
    if available == 0 && length > 0 {
        log::warn!("replace_with_old at document start: segment fully padded");
    }
    let mut slots = vec![Slot::Pad; shortfall];
    slots.extend((window_start - available..window_start).map(Slot::Word));
    AblatedSegment {
        slots,
        kept_mask: None,
        original_length: length,
        shortfall,
    }
}

/// Keep the positions matching `keep`, in order, left-padded to the
/// original length.
fn filter_by<F>(range: Range<usize>, keep: F) -> AblatedSegment
where
    F: Fn(usize) -> bool,
{
    let mask: Vec<bool> = range.clone().map(&keep).collect();
    let kept: Vec<usize> = range.clone().filter(|&p| keep(p)).collect();
    let mut slots = vec![Slot::Pad; range.len() - kept.len()];
    slots.extend(kept.into_iter().map(Slot::Word));
    AblatedSegment {
        slots,
        kept_mask: Some(mask),
        original_length: range.len(),
        shortfall: 0,
    }
}

pub fn pos_filter(
    doc: &AnnotatedDocument,
    range: Range<usize>,
    pos_set: &BTreeSet<PosClass>,
) -> AblatedSegment {
    filter_by(range, |p| pos_set.contains(&doc.tokens[p].pos.class()))
}

pub fn entity_filter(doc: &AnnotatedDocument, range: Range<usize>) -> AblatedSegment {
    filter_by(range, |p| doc.tokens[p].entity_span.is_some())
}

pub fn frequency_filter(
    doc: &AnnotatedDocument,
    range: Range<usize>,
    partition: &FrequencyPartition,
    keep: FrequencyClass,
) -> AblatedSegment {
    filter_by(range, |p| {
        partition.class_of(&doc.tokens[p].surface) == keep
    })
}

/// Refill the padding prefix of a filtered segment with `pos_set` words from
/// before `window_start`, nearest first. The inserted words keep document
/// order; slots that cannot be filled stay padding.
pub fn extend_with_prior_content(
    segment: &AblatedSegment,
    doc: &AnnotatedDocument,
    window_start: usize,
    pos_set: &BTreeSet<PosClass>,
) -> AblatedSegment {
    let padding = segment
        .slots
        .iter()
        .take_while(|s| **s == Slot::Pad)
        .count();
    let mut prior: Vec<usize> = (0..window_start.min(doc.len()))
        .rev()
        .filter(|&p| pos_set.contains(&doc.tokens[p].pos.class()))
        .take(padding)
        .collect();
    prior.reverse();

    let mut slots = vec![Slot::Pad; padding - prior.len()];
    slots.extend(prior.into_iter().map(Slot::Word));
    slots.extend_from_slice(&segment.slots[padding..]);
    AblatedSegment {
        slots,
        kept_mask: segment.kept_mask.clone(),
        original_length: segment.original_length,
        shortfall: segment.shortfall,
    }
}

pub fn erase_all(length: usize) -> AblatedSegment {
    AblatedSegment {
        slots: vec![Slot::Pad; length],
        kept_mask: Some(vec![false; length]),
        original_length: length,
        shortfall: 0,
    }
}

/// Inputs shared by every window of a run.
#[derive(Debug, Clone, Copy, Default)]
pub struct AblationEnv<'a> {
    pub partition: Option<&'a FrequencyPartition>,
    /// Experiment seed, mixed with the ablation's own seed and the window identity.
    pub seed: u64,
}

/// Apply `spec` to `doc[range]`.
pub fn apply(
    spec: &AblationSpec,
    doc: &AnnotatedDocument,
    range: Range<usize>,
    env: &AblationEnv<'_>,
) -> Result<AblatedSegment, AblationError> {
    spec.validate()?;
    if spec.ablation.needs_annotations() && !doc.annotated {
        return Err(AblationError::MissingAnnotations {
            spec: spec.name.clone(),
            doc_id: doc.doc_id.clone(),
        });
    }
    Ok(match &spec.ablation {
        Ablation::Identity => AblatedSegment::unchanged(range),
        Ablation::Shuffle { unit, scope } => {
            let mut rng = rng::window_rng(rng::mix(&[env.seed, spec.seed]), &doc.doc_id, range.start);
            shuffle(doc, range, *unit, *scope, &mut rng)?
        }
        Ablation::ReplaceWithOld => replace_with_old(range.start, range.len()),
        Ablation::PosFilter { pos_set } => pos_filter(doc, range, pos_set),
        Ablation::EntityFilter => entity_filter(doc, range),
        Ablation::FrequencyFilter { keep } => {
            let partition = env
                .partition
                .ok_or_else(|| AblationError::MissingPartition(spec.name.clone()))?;
            frequency_filter(doc, range, partition, *keep)
        }
        Ablation::EraseAll => erase_all(range.len()),
        Ablation::ExtendWithPriorContent { pos_set } => {
            let start = range.start;
            let filtered = pos_filter(doc, range, pos_set);
            extend_with_prior_content(&filtered, doc, start, pos_set)
        }
    })
}
