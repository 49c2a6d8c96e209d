//! Instances, corpus files, vocabularies, pretrained vectors and the entity KB.

mod io;
mod kb;
mod pairify;
mod stats;
mod synthetic;
mod vocab;

use serde::{Deserialize, Serialize};

pub use io::{load_corpus, parse_instances, save_corpus, CorpusFormat};
pub use kb::{link_entities, EntityKb, DEFAULT_TYPE_MAP};
pub use pairify::{pairify, EntityMention, GoldRelation, SentenceRecord};
pub use stats::{corpus_stats, CorpusStats};
pub use synthetic::{
    generate_sentences, generate_synthetic, relation_label, synthetic_entity_kb, SyntheticConfig,
};
pub use vocab::{build_vocab, load_pretrained_vectors, read_vectors, EmbeddingTable, Vocabulary};

use crate::depfeat::DependencyTree;
use crate::error::{Error, Result};

/// Label of pairs without an annotated relation.
pub const NIL_LABEL: &str = "no_relation";

/// Half-open token range `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "[usize; 2]", into = "[usize; 2]")]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        Span { start, end }
    }

    pub fn len(&self) -> usize {
        self.end.saturating_sub(self.start)
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    pub fn contains(&self, i: usize) -> bool {
        self.start <= i && i < self.end
    }

    pub fn overlaps(&self, other: &Span) -> bool {
        self.start < other.end && other.start < self.end
    }

    pub fn indices(&self) -> std::ops::Range<usize> {
        self.start..self.end
    }
}

impl From<[usize; 2]> for Span {
    fn from(v: [usize; 2]) -> Self {
        Span::new(v[0], v[1])
    }
}

impl From<Span> for [usize; 2] {
    fn from(s: Span) -> Self {
        [s.start, s.end]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub form: String,
    pub pos: String,
    pub ner: String,
}

/// One classification example: a sentence with two query entities.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub id: String,
    pub tokens: Vec<Token>,
    pub dep_head: Vec<i64>,
    pub subj: Span,
    pub obj: Span,
    pub subj_type: String,
    pub obj_type: String,
    pub relation: Option<String>,
    pub subj_kb_id: Option<String>,
    pub obj_kb_id: Option<String>,
    /// Every entity span of the source sentence, when it came from all-pairs data.
    pub entities: Option<Vec<Span>>,
}

impl Instance {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn forms(&self) -> Vec<&str> {
        self.tokens.iter().map(|t| t.form.as_str()).collect()
    }

    /// Gold label with absent relations read as nil.
    pub fn label(&self) -> &str {
        self.relation.as_deref().unwrap_or(NIL_LABEL)
    }

    pub fn tree(&self) -> Result<DependencyTree> {
        DependencyTree::new(&self.dep_head).map_err(|e| Error::invalid(&self.id, e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.tokens.len();
        if n == 0 {
            return Err(Error::invalid(&self.id, "no tokens"));
        }
        if let Some(i) = self.tokens.iter().position(|t| t.form.is_empty()) {
            return Err(Error::invalid(&self.id, format!("empty form at token {i}")));
        }
        if self.dep_head.len() != n {
            return Err(Error::invalid(
                &self.id,
                format!("{} heads for {} tokens", self.dep_head.len(), n),
            ));
        }
        for (name, span) in [("subj", self.subj), ("obj", self.obj)] {
            if span.is_empty() || span.end > n {
                return Err(Error::invalid(
                    &self.id,
                    format!("{name} span [{}, {}) outside 0..{n}", span.start, span.end),
                ));
            }
        }
        if let Some(ents) = &self.entities {
            if let Some(bad) = ents.iter().find(|s| s.is_empty() || s.end > n) {
                return Err(Error::invalid(
                    &self.id,
                    format!("entity span [{}, {}) outside 0..{n}", bad.start, bad.end),
                ));
            }
        }
        self.tree()?;
        Ok(())
    }

    /// Tokens strictly between the two query spans.
    pub fn pair_distance(&self) -> usize {
        let (a, b) = if self.subj.start <= self.obj.start {
            (self.subj, self.obj)
        } else {
            (self.obj, self.subj)
        };
        b.start.saturating_sub(a.end)
    }
}
