//! Evaluation and training windows.
//!
//! A window over a document is laid out as
//!
//! ```text
//! [ f(X[s .. s+ℓ]) | SEP | X[s+ℓ .. s+ℓ+n] ]
//! ```
//!
//! The separator sits outside both budgets and is never scored. Scored
//! positions are grouped into strata `[m, n)` counted from the first
//! continuation word, so every arm of an experiment scores exactly the same
//! document positions.

use std::ops::Range;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ablate::{self, AblationEnv, AblationError, AblationSpec, Slot};
use crate::lexicon::{IndexedCorpus, WordId, PAD, SEP};
use crate::rng;

#[derive(Debug, Error)]
pub enum WindowError {
    #[error("invalid window config: {0}")]
    InvalidConfig(String),
    #[error("window {doc_id}@{start}: {source}")]
    Ablation {
        doc_id: String,
        start: usize,
        #[source]
        source: AblationError,
    },
    #[error("ablated windows need an ablation spec")]
    MissingSpec,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stratum {
    pub name: String,
    /// First scored continuation offset (`m`).
    pub start: usize,
    /// One past the last scored continuation offset (`n`).
    pub end: usize,
}

impl Stratum {
    pub fn new(name: impl Into<String>, start: usize, end: usize) -> Self {
        Self {
            name: name.into(),
            start,
            end,
        }
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end == self.start
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct WindowConfig {
    /// Ablated prefix length `ℓ`, in words.
    pub prefix_len: usize,
    pub strata: Vec<Stratum>,
    /// Distance between evaluation window starts; defaults to `ℓ + n`.
    pub stride: Option<usize>,
    /// Distance between training window starts; defaults to `n`.
    pub train_stride: Option<usize>,
}

impl Default for WindowConfig {
    /// 512 ablated words, then mid-range `[0, 256)` and long-range
    /// `[256, 512)` strata.
    fn default() -> Self {
        Self {
            prefix_len: 512,
            strata: vec![
                Stratum::new("mid_range", 0, 256),
                Stratum::new("long_range", 256, 512),
            ],
            stride: None,
            train_stride: None,
        }
    }
}

impl WindowConfig {
    /// The 1024-word prefix variant.
    pub fn long_prefix() -> Self {
        Self {
            prefix_len: 1024,
            ..Self::default()
        }
    }

    /// Continuation length `n`: the end of the furthest stratum.
    pub fn continuation_len(&self) -> usize {
        self.strata.iter().map(|s| s.end).max().unwrap_or(0)
    }

    pub fn eval_stride(&self) -> usize {
        self.stride
            .unwrap_or(self.prefix_len + self.continuation_len())
    }

    pub fn training_stride(&self) -> usize {
        self.train_stride.unwrap_or(self.continuation_len())
    }

    pub fn validate(&self) -> Result<(), WindowError> {
        let bad = |msg: String| Err(WindowError::InvalidConfig(msg));
        if self.strata.is_empty() {
            return bad("at least one stratum is required".into());
        }
        for s in &self.strata {
            if s.start >= s.end {
                return bad(format!("stratum `{}` needs start < end", s.name));
            }
        }
        let mut sorted: Vec<&Stratum> = self.strata.iter().collect();
        sorted.sort_by_key(|s| s.start);
        for pair in sorted.windows(2) {
            if pair[0].end > pair[1].start {
                return bad(format!(
                    "strata `{}` and `{}` overlap",
                    pair[0].name, pair[1].name
                ));
            }
            if pair[0].name == pair[1].name {
                return bad(format!("duplicate stratum `{}`", pair[0].name));
            }
        }
        if self.stride == Some(0) || self.train_stride == Some(0) {
            return bad("strides must be at least 1".into());
        }
        Ok(())
    }
}

/// How a window's prefix is realized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowMode {
    /// The prefix is transformed by the arm's ablation.
    Ablated,
    /// Unablated prefix; same layout as every ablated arm.
    FullInformation,
    /// No prefix and no separator: the input is the continuation alone.
    NoInformation,
    /// Training for the evaluation-only paradigm: the first `t ~ U{0..ℓ}`
    /// prefix words are replaced by padding.
    EvalOnly,
}

/// A window before realization.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowDescriptor {
    pub doc_index: usize,
    pub doc_id: String,
    /// Document position of the first prefix word.
    pub start: usize,
    /// Prefix words available in the document; below `ℓ` only for short
    /// training documents.
    pub prefix_len: usize,
    pub continuation_len: usize,
}

impl WindowDescriptor {
    pub fn record(&self, config_hash: &str, spec: &str) -> WindowRecord {
        WindowRecord {
            doc_id: self.doc_id.clone(),
            start: self.start,
            config_hash: config_hash.to_string(),
            spec: spec.to_string(),
        }
    }
}

/// JSON-lines record identifying a window of a run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowRecord {
    pub doc_id: String,
    pub start: usize,
    pub config_hash: String,
    pub spec: String,
}

/// Evaluation windows: every start `s = k * stride` with `s + ℓ + n` inside
/// the document. Shorter documents contribute nothing.
pub fn enumerate_windows(corpus: &IndexedCorpus, config: &WindowConfig) -> Vec<WindowDescriptor> {
    let ell = config.prefix_len;
    let n = config.continuation_len();
    let stride = config.eval_stride();
    let mut out = Vec::new();
    for (doc_index, doc) in corpus.corpus.documents.iter().enumerate() {
        let mut start = 0;
        while start + ell + n <= doc.len() {
            out.push(WindowDescriptor {
                doc_index,
                doc_id: doc.doc_id.clone(),
                start,
                prefix_len: ell,
                continuation_len: n,
            });
            start += stride;
        }
    }
    out
}

/// Training windows. Long documents are cut like evaluation windows (with
/// the training stride); a document shorter than `ℓ + n` yields one window
/// holding whatever prefix precedes its last `n` words.
pub fn enumerate_training_windows(
    corpus: &IndexedCorpus,
    config: &WindowConfig,
) -> (Vec<WindowDescriptor>, usize) {
    let ell = config.prefix_len;
    let n = config.continuation_len();
    let stride = config.training_stride();
    let mut out = Vec::new();
    let mut short_docs = 0;
    for (doc_index, doc) in corpus.corpus.documents.iter().enumerate() {
        let len = doc.len();
        if len >= ell + n {
            let mut start = 0;
            while start + ell + n <= len {
                out.push(WindowDescriptor {
                    doc_index,
                    doc_id: doc.doc_id.clone(),
                    start,
                    prefix_len: ell,
                    continuation_len: n,
                });
                start += stride;
            }
        } else if len > 0 {
            short_docs += 1;
            let prefix_len = len.saturating_sub(n).min(ell);
            out.push(WindowDescriptor {
                doc_index,
                doc_id: doc.doc_id.clone(),
                start: 0,
                prefix_len,
                continuation_len: len - prefix_len,
            });
        }
    }
    (out, short_docs)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RealizedWindow {
    pub doc_id: String,
    pub start: usize,
    pub input: Vec<WordId>,
    pub separator_index: Option<usize>,
    /// Index into `input` of the first continuation word.
    pub continuation_start: usize,
    /// Document position of the first continuation word.
    pub continuation_doc_start: usize,
    pub shortfall: usize,
}

impl RealizedWindow {
    pub fn continuation_len(&self) -> usize {
        self.input.len() - self.continuation_start
    }

    /// Input indices scored in `stratum`.
    pub fn scored_range(&self, stratum: &Stratum) -> Range<usize> {
        let end = (self.continuation_start + stratum.end).min(self.input.len());
        let start = (self.continuation_start + stratum.start).min(end);
        start..end
    }

    /// Document positions scored in `stratum`.
    pub fn scored_positions(&self, stratum: &Stratum) -> Range<usize> {
        let r = self.scored_range(stratum);
        let shift = self.continuation_doc_start;
        (r.start - self.continuation_start + shift)..(r.end - self.continuation_start + shift)
    }

    /// Every continuation position as a (context, target) pair.
    pub fn training_pairs(&self) -> impl Iterator<Item = (&[WordId], WordId)> {
        (self.continuation_start..self.input.len()).map(|i| (&self.input[..i], self.input[i]))
    }
}

/// Truncation length for an evaluation-only training window, uniform on
/// `{0, …, ℓ}`.
pub fn draw_truncation(seed: u64, doc_id: &str, start: usize, prefix_len: usize) -> usize {
    let mut rng = rng::window_rng(rng::mix(&[seed, 0xE7A1]), doc_id, start);
    rng.gen_range(0..=prefix_len)
}

/// Build the input sequence of a window.
///
/// `prefix_target` is `ℓ`: prefixes shorter than that (short training
/// documents) are left-padded so every window shares one layout.
pub fn realize_window(
    desc: &WindowDescriptor,
    mode: WindowMode,
    spec: Option<&AblationSpec>,
    corpus: &IndexedCorpus,
    prefix_target: usize,
    env: &AblationEnv<'_>,
) -> Result<RealizedWindow, WindowError> {
    let doc = &corpus.corpus.documents[desc.doc_index];
    let ids = &corpus.ids[desc.doc_index];
    let prefix_range = desc.start..desc.start + desc.prefix_len;
    let cont_start = prefix_range.end;
    let continuation = &ids[cont_start..cont_start + desc.continuation_len];

    let to_ids = |slots: &[Slot]| -> Vec<WordId> {
        slots
            .iter()
            .map(|s| match s {
                Slot::Pad => PAD,
                Slot::Word(p) => ids[*p],
            })
            .collect()
    };

    let (prefix, shortfall) = match mode {
        WindowMode::NoInformation => {
            return Ok(RealizedWindow {
                doc_id: desc.doc_id.clone(),
                start: desc.start,
                input: continuation.to_vec(),
                separator_index: None,
                continuation_start: 0,
                continuation_doc_start: cont_start,
                shortfall: 0,
            })
        }
        WindowMode::FullInformation | WindowMode::EvalOnly => {
            (ids[prefix_range.clone()].to_vec(), 0)
        }
        WindowMode::Ablated => {
            let spec = spec.ok_or(WindowError::MissingSpec)?;
            let seg = ablate::apply(spec, doc, prefix_range.clone(), env).map_err(|source| {
                WindowError::Ablation {
                    doc_id: desc.doc_id.clone(),
                    start: desc.start,
                    source,
                }
            })?;
            (to_ids(&seg.slots), seg.shortfall)
        }
    };

    let mut input = Vec::with_capacity(prefix_target + 1 + continuation.len());
    input.resize(prefix_target.saturating_sub(prefix.len()), PAD);
    input.extend_from_slice(&prefix);
    if mode == WindowMode::EvalOnly {
        let t = draw_truncation(env.seed, &desc.doc_id, desc.start, prefix_target);
        input[..t].fill(PAD);
    }
    let separator_index = input.len();
    input.push(SEP);
    input.extend_from_slice(continuation);
    Ok(RealizedWindow {
        doc_id: desc.doc_id.clone(),
        start: desc.start,
        input,
        separator_index: Some(separator_index),
        continuation_start: separator_index + 1,
        continuation_doc_start: cont_start,
        shortfall,
    })
}

/// Realized training windows for one arm. Each window stands for the
/// (context, target) pairs of its continuation, see
/// [`RealizedWindow::training_pairs`].
pub fn training_views(
    corpus: &IndexedCorpus,
    config: &WindowConfig,
    mode: WindowMode,
    spec: Option<&AblationSpec>,
    env: &AblationEnv<'_>,
) -> Result<Vec<RealizedWindow>, WindowError> {
    let (descs, _) = enumerate_training_windows(corpus, config);
    descs
        .iter()
        .map(|d| realize_window(d, mode, spec, corpus, config.prefix_len, env))
        .collect()
}
