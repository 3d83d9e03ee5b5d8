//! Annotated word-level corpora.
//!
//! Corpora are ingested from a tab-separated sidecar format, one token per
//! line:
//!
//! ```text
//! surface<TAB>pos<TAB>entity_span_or_-<TAB>sentence_id
//! ```
//!
//! A blank line separates documents. A document may open with a
//! `# doc_id = <id>` line; otherwise it is named by its ordinal. Annotations
//! are produced by an external tagger, nothing here tags text.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::io::BufRead;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

const DOC_ID_PREFIX: &str = "# doc_id = ";

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: malformed row: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("line {line}: unknown POS tag `{tag}`")]
    UnknownPos { line: usize, tag: String },
    #[error("line {line}: reserved token `{surface}` in corpus text")]
    ReservedToken { line: usize, surface: String },
    #[error("line {line}: entity span `{span}` overlaps or is not contiguous")]
    EntityOverlap { line: usize, span: String },
    #[error("line {line}: sentence `{sentence}` is not contiguous")]
    SentenceOrder { line: usize, sentence: String },
    #[error("vocabulary is empty")]
    EmptyVocabulary,
    #[error("token mass threshold must lie in (0, 1), got {0}")]
    InvalidThreshold(f64),
}

/// Coarse part-of-speech tags (Universal Dependencies style, plus `OTHER`
/// for untagged text).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Pos {
    Noun,
    Propn,
    Verb,
    Aux,
    Adj,
    Adv,
    Num,
    Punct,
    Adp,
    Cconj,
    Det,
    Intj,
    Part,
    Pron,
    Sconj,
    Sym,
    X,
    Other,
}

impl Pos {
    pub const ALL: [Pos; 18] = [
        Pos::Noun,
        Pos::Propn,
        Pos::Verb,
        Pos::Aux,
        Pos::Adj,
        Pos::Adv,
        Pos::Num,
        Pos::Punct,
        Pos::Adp,
        Pos::Cconj,
        Pos::Det,
        Pos::Intj,
        Pos::Part,
        Pos::Pron,
        Pos::Sconj,
        Pos::Sym,
        Pos::X,
        Pos::Other,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Pos::Noun => "NOUN",
            Pos::Propn => "PROPN",
            Pos::Verb => "VERB",
            Pos::Aux => "AUX",
            Pos::Adj => "ADJ",
            Pos::Adv => "ADV",
            Pos::Num => "NUM",
            Pos::Punct => "PUNCT",
            Pos::Adp => "ADP",
            Pos::Cconj => "CCONJ",
            Pos::Det => "DET",
            Pos::Intj => "INTJ",
            Pos::Part => "PART",
            Pos::Pron => "PRON",
            Pos::Sconj => "SCONJ",
            Pos::Sym => "SYM",
            Pos::X => "X",
            Pos::Other => "OTHER",
        }
    }

    /// The word class used by part-of-speech ablations. Nouns include proper
    /// nouns and verbs include auxiliaries; numerals, punctuation and every
    /// remaining tag fall into the function class.
    pub fn class(self) -> PosClass {
        match self {
            Pos::Noun | Pos::Propn => PosClass::Noun,
            Pos::Verb | Pos::Aux => PosClass::Verb,
            Pos::Adj => PosClass::Adjective,
            Pos::Adv => PosClass::Adverb,
            _ => PosClass::Function,
        }
    }
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Pos {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Pos::ALL
            .iter()
            .copied()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| s.to_string())
    }
}

/// Word classes retained or removed by part-of-speech ablations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PosClass {
    Noun,
    Verb,
    Adjective,
    Adverb,
    Function,
}

impl PosClass {
    pub const CONTENT: [PosClass; 4] = [
        PosClass::Noun,
        PosClass::Verb,
        PosClass::Adjective,
        PosClass::Adverb,
    ];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Validation,
}

/// Strings standing for padding and the prefix/continuation separator.
/// Neither may occur in corpus text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReservedTokens {
    pub padding: String,
    pub separator: String,
}

impl Default for ReservedTokens {
    fn default() -> Self {
        Self {
            padding: "<pad>".to_string(),
            separator: "<sep>".to_string(),
        }
    }
}

impl ReservedTokens {
    pub fn is_reserved(&self, surface: &str) -> bool {
        surface == self.padding || surface == self.separator
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WordToken {
    pub surface: String,
    pub pos: Pos,
    /// Named-entity or quantity span this token belongs to.
    pub entity_span: Option<String>,
    /// Ordinal of the sentence within its document.
    pub sentence_index: u32,
    /// Sentence label as written in the source file.
    pub sentence_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnnotatedDocument {
    pub doc_id: String,
    /// Whether `doc_id` came from a `# doc_id` line (and is written back).
    pub explicit_id: bool,
    /// False for plain-text input, where every tag is `OTHER`.
    pub annotated: bool,
    pub tokens: Vec<WordToken>,
}

impl AnnotatedDocument {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn sentence_count(&self) -> usize {
        self.tokens
            .last()
            .map_or(0, |t| t.sentence_index as usize + 1)
    }

    pub fn surfaces(&self) -> impl Iterator<Item = &str> {
        self.tokens.iter().map(|t| t.surface.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnnotatedCorpus {
    pub split: Split,
    pub documents: Vec<AnnotatedDocument>,
}

impl AnnotatedCorpus {
    pub fn token_count(&self) -> usize {
        self.documents.iter().map(|d| d.len()).sum()
    }

    /// Serialize to the sidecar format. For canonical input (single blank
    /// line between documents, `\n` line endings) this reproduces the input
    /// byte for byte.
    pub fn to_sidecar(&self) -> String {
        let mut out = String::new();
        for (i, doc) in self.documents.iter().enumerate() {
            if i > 0 {
                out.push('\n');
            }
            if doc.explicit_id {
                out.push_str(DOC_ID_PREFIX);
                out.push_str(&doc.doc_id);
                out.push('\n');
            }
            for tok in &doc.tokens {
                out.push_str(&tok.surface);
                out.push('\t');
                out.push_str(tok.pos.as_str());
                out.push('\t');
                out.push_str(tok.entity_span.as_deref().unwrap_or("-"));
                out.push('\t');
                out.push_str(&tok.sentence_id);
                out.push('\n');
            }
        }
        out
    }
}

/// Accumulates rows of one document and checks span/sentence contiguity.
struct DocBuilder {
    doc_id: Option<String>,
    tokens: Vec<WordToken>,
    closed_sentences: HashSet<String>,
    closed_spans: HashSet<String>,
}

impl DocBuilder {
    fn new() -> Self {
        Self {
            doc_id: None,
            tokens: Vec::new(),
            closed_sentences: HashSet::new(),
            closed_spans: HashSet::new(),
        }
    }

    fn is_empty(&self) -> bool {
        self.tokens.is_empty() && self.doc_id.is_none()
    }

    fn push(
        &mut self,
        line: usize,
        surface: &str,
        pos: Pos,
        entity: Option<&str>,
        sentence_id: &str,
    ) -> Result<(), CorpusError> {
        let sentence_index = match self.tokens.last() {
            None => 0,
            Some(prev) if prev.sentence_id == sentence_id => prev.sentence_index,
            Some(prev) => {
                if self.closed_sentences.contains(sentence_id) {
                    return Err(CorpusError::SentenceOrder {
                        line,
                        sentence: sentence_id.to_string(),
                    });
                }
                self.closed_sentences.insert(prev.sentence_id.clone());
                prev.sentence_index + 1
            }
        };
        let prev_span = self.tokens.last().and_then(|t| t.entity_span.as_deref());
        if prev_span != entity {
            if let Some(span) = entity {
                if self.closed_spans.contains(span) {
                    return Err(CorpusError::EntityOverlap {
                        line,
                        span: span.to_string(),
                    });
                }
            }
            if let Some(prev) = prev_span {
                self.closed_spans.insert(prev.to_string());
            }
        }
        self.tokens.push(WordToken {
            surface: surface.to_string(),
            pos,
            entity_span: entity.map(str::to_string),
            sentence_index,
            sentence_id: sentence_id.to_string(),
        });
        Ok(())
    }

    fn finish(self, ordinal: usize, annotated: bool) -> AnnotatedDocument {
        let explicit_id = self.doc_id.is_some();
        AnnotatedDocument {
            doc_id: self.doc_id.unwrap_or_else(|| format!("doc{ordinal}")),
            explicit_id,
            annotated,
            tokens: self.tokens,
        }
    }
}

/// Parse a sidecar-format stream into a corpus.
pub fn ingest_corpus<R: BufRead>(
    reader: R,
    split: Split,
    reserved: &ReservedTokens,
) -> Result<AnnotatedCorpus, CorpusError> {
    let mut documents = Vec::new();
    let mut current = DocBuilder::new();

    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        let line = line.strip_suffix('\r').unwrap_or(&line);

        if line.is_empty() {
            if !current.is_empty() {
                let done = std::mem::replace(&mut current, DocBuilder::new());
                documents.push(done.finish(documents.len(), true));
            }
            continue;
        }
        if let Some(id) = line.strip_prefix(DOC_ID_PREFIX) {
            if !current.is_empty() {
                return Err(CorpusError::Malformed {
                    line: line_no,
                    reason: "doc_id line must open a document".into(),
                });
            }
            current.doc_id = Some(id.to_string());
            continue;
        }

        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 4 {
            return Err(CorpusError::Malformed {
                line: line_no,
                reason: format!("expected 4 tab-separated fields, found {}", fields.len()),
            });
        }
        let (surface, tag, entity, sentence) = (fields[0], fields[1], fields[2], fields[3]);
        if surface.is_empty() {
            return Err(CorpusError::Malformed {
                line: line_no,
                reason: "empty surface form".into(),
            });
        }
        if sentence.is_empty() {
            return Err(CorpusError::Malformed {
                line: line_no,
                reason: "empty sentence id".into(),
            });
        }
        if reserved.is_reserved(surface) {
            return Err(CorpusError::ReservedToken {
                line: line_no,
                surface: surface.to_string(),
            });
        }
        let pos = tag.parse::<Pos>().map_err(|tag| CorpusError::UnknownPos {
            line: line_no,
            tag,
        })?;
        let entity = match entity {
            "-" => None,
            "" => {
                return Err(CorpusError::Malformed {
                    line: line_no,
                    reason: "empty entity field (use `-`)".into(),
                })
            }
            e => Some(e),
        };
        current.push(line_no, surface, pos, entity, sentence)?;
    }
    if !current.is_empty() {
        documents.push(current.finish(documents.len(), true));
    }
    Ok(AnnotatedCorpus { split, documents })
}

/// Parse whitespace-tokenized text. Each non-blank line is a sentence, blank
/// lines separate documents, and every token is tagged `OTHER`.
pub fn ingest_plain_text<R: BufRead>(
    reader: R,
    split: Split,
    reserved: &ReservedTokens,
) -> Result<AnnotatedCorpus, CorpusError> {
    let mut documents = Vec::new();
    let mut current = DocBuilder::new();
    let mut sentence = 0usize;

    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            if !current.is_empty() {
                let done = std::mem::replace(&mut current, DocBuilder::new());
                documents.push(done.finish(documents.len(), false));
                sentence = 0;
            }
            continue;
        }
        let label = format!("s{sentence}");
        for word in line.split_whitespace() {
            if reserved.is_reserved(word) {
                return Err(CorpusError::ReservedToken {
                    line: line_no,
                    surface: word.to_string(),
                });
            }
            current.push(line_no, word, Pos::Other, None, &label)?;
        }
        sentence += 1;
    }
    if !current.is_empty() {
        documents.push(current.finish(documents.len(), false));
    }
    Ok(AnnotatedCorpus { split, documents })
}

/// Type counts over a (training) corpus.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocabulary {
    pub type_counts: HashMap<String, u64>,
    pub total_tokens: u64,
}

impl Vocabulary {
    pub fn len(&self) -> usize {
        self.type_counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.type_counts.is_empty()
    }

    pub fn count(&self, surface: &str) -> u64 {
        self.type_counts.get(surface).copied().unwrap_or(0)
    }

    /// Types by descending count, ties broken lexicographically.
    pub fn ranked(&self) -> Vec<(&str, u64)> {
        let mut ranked: Vec<(&str, u64)> = self
            .type_counts
            .iter()
            .map(|(s, &c)| (s.as_str(), c))
            .collect();
        ranked.sort_unstable_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        ranked
    }
}

pub fn build_vocabulary(corpus: &AnnotatedCorpus) -> Vocabulary {
    let mut vocab = Vocabulary::default();
    for tok in corpus.documents.iter().flat_map(|d| &d.tokens) {
        *vocab.type_counts.entry(tok.surface.clone()).or_insert(0) += 1;
        vocab.total_tokens += 1;
    }
    vocab
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrequencyClass {
    Common,
    Rare,
}

/// Split of the vocabulary into frequent and rare types.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyPartition {
    pub common: HashSet<String>,
    pub rare: HashSet<String>,
    pub token_mass_threshold: f64,
}

impl FrequencyPartition {
    /// Out-of-vocabulary forms are rare.
    pub fn class_of(&self, surface: &str) -> FrequencyClass {
        if self.common.contains(surface) {
            FrequencyClass::Common
        } else {
            FrequencyClass::Rare
        }
    }
}

/// The common set is the shortest prefix of the ranked types whose summed
/// counts reach `threshold * total_tokens`.
pub fn partition_frequency(
    vocab: &Vocabulary,
    token_mass_threshold: f64,
) -> Result<FrequencyPartition, CorpusError> {
    if !(token_mass_threshold > 0.0 && token_mass_threshold < 1.0) {
        return Err(CorpusError::InvalidThreshold(token_mass_threshold));
    }
    if vocab.is_empty() {
        return Err(CorpusError::EmptyVocabulary);
    }
    let target = token_mass_threshold * vocab.total_tokens as f64;
    let mut common = HashSet::new();
    let mut rare = HashSet::new();
    let mut mass = 0u64;
    for (surface, count) in vocab.ranked() {
        if (mass as f64) < target {
            mass += count;
            common.insert(surface.to_string());
        } else {
            rare.insert(surface.to_string());
        }
    }
    Ok(FrequencyPartition {
        common,
        rare,
        token_mass_threshold,
    })
}
