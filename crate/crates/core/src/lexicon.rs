//! Interning of surface forms into dense word ids.

use std::collections::HashMap;

use crate::corpus::{AnnotatedCorpus, ReservedTokens};

pub type WordId = u32;

/// Padding inserted by deletion ablations and truncation.
pub const PAD: WordId = 0;
/// Boundary between the ablated prefix and the unablated continuation.
pub const SEP: WordId = 1;
/// Unknown-word class. Never assigned to a surface form.
pub const UNK: WordId = u32::MAX;

pub fn is_reserved(id: WordId) -> bool {
    id == PAD || id == SEP
}

#[derive(Debug, Clone)]
pub struct Lexicon {
    strings: Vec<String>,
    index: HashMap<String, WordId>,
}

impl Lexicon {
    pub fn new(reserved: &ReservedTokens) -> Self {
        let mut lex = Self {
            strings: Vec::new(),
            index: HashMap::new(),
        };
        lex.intern(&reserved.padding);
        lex.intern(&reserved.separator);
        lex
    }

    pub fn intern(&mut self, surface: &str) -> WordId {
        if let Some(&id) = self.index.get(surface) {
            return id;
        }
        let id = self.strings.len() as WordId;
        self.strings.push(surface.to_string());
        self.index.insert(surface.to_string(), id);
        id
    }

    pub fn get(&self, surface: &str) -> Option<WordId> {
        self.index.get(surface).copied()
    }

    pub fn resolve(&self, id: WordId) -> &str {
        if id == UNK {
            return "<unk>";
        }
        &self.strings[id as usize]
    }

    pub fn len(&self) -> usize {
        self.strings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.strings.is_empty()
    }

    pub fn padding(&self) -> &str {
        &self.strings[PAD as usize]
    }

    /// Ids for every document, in corpus order.
    pub fn encode(&mut self, corpus: &AnnotatedCorpus) -> Vec<Vec<WordId>> {
        corpus
            .documents
            .iter()
            .map(|d| d.surfaces().map(|s| self.intern(s)).collect())
            .collect()
    }
}

/// A corpus together with its interned ids.
#[derive(Debug, Clone)]
pub struct IndexedCorpus {
    pub corpus: AnnotatedCorpus,
    pub ids: Vec<Vec<WordId>>,
}

impl IndexedCorpus {
    pub fn new(corpus: AnnotatedCorpus, lexicon: &mut Lexicon) -> Self {
        let ids = lexicon.encode(&corpus);
        Self { corpus, ids }
    }
}
