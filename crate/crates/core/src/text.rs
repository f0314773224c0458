//! Vocabulary construction and token encoding.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::treebank::Sentence;

/// What `encode` does with tokens missing from the vocabulary.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OovPolicy {
    /// Drop unknown tokens.
    #[default]
    Omit,
    /// Map unknown tokens to a reserved index 0.
    Unk,
}

pub const UNK_TOKEN: &str = "<unk>";

/// Bijection between words and `0..len()`, in first-occurrence order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "VocabRepr", into = "VocabRepr")]
pub struct Vocab {
    words: Vec<String>,
    index: HashMap<String, usize>,
    policy: OovPolicy,
}

#[derive(Serialize, Deserialize)]
struct VocabRepr {
    oov_policy: OovPolicy,
    words: Vec<String>,
}

impl From<VocabRepr> for Vocab {
    fn from(r: VocabRepr) -> Self {
        Vocab::from_words(r.words, r.oov_policy)
    }
}

impl From<Vocab> for VocabRepr {
    fn from(v: Vocab) -> Self {
        VocabRepr {
            oov_policy: v.policy,
            words: v.words,
        }
    }
}

impl Vocab {
    fn from_words(words: Vec<String>, policy: OovPolicy) -> Self {
        let index = words.iter().enumerate().map(|(i, w)| (w.clone(), i)).collect();
        Vocab { words, index, policy }
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn policy(&self) -> OovPolicy {
        self.policy
    }

    pub fn get(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    pub fn word(&self, index: usize) -> Option<&str> {
        self.words.get(index).map(String::as_str)
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    /// Map tokens to indices in order, applying the vocabulary's OOV policy.
    pub fn encode<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<usize> {
        tokens
            .iter()
            .filter_map(|t| match (self.get(t.as_ref()), self.policy) {
                (Some(i), _) => Some(i),
                (None, OovPolicy::Omit) => None,
                (None, OovPolicy::Unk) => Some(0),
            })
            .collect()
    }

    pub fn decode(&self, indices: &[usize]) -> Vec<&str> {
        indices.iter().filter_map(|&i| self.word(i)).collect()
    }
}

/// Build a vocabulary over the tokens of `sentences`, omitting OOV tokens at
/// encode time.
pub fn build_vocab(sentences: &[Sentence]) -> Result<Vocab> {
    build_vocab_with(sentences, OovPolicy::Omit)
}

pub fn build_vocab_with(sentences: &[Sentence], policy: OovPolicy) -> Result<Vocab> {
    if sentences.is_empty() {
        return Err(Error::EmptyInput("cannot build a vocabulary from zero sentences"));
    }
    let mut words = Vec::new();
    let mut index = HashMap::new();
    if policy == OovPolicy::Unk {
        words.push(UNK_TOKEN.to_string());
        index.insert(UNK_TOKEN.to_string(), 0);
    }
    for tok in sentences.iter().flat_map(|s| &s.tokens) {
        if !index.contains_key(tok) {
            index.insert(tok.clone(), words.len());
            words.push(tok.clone());
        }
    }
    Ok(Vocab { words, index, policy })
}
