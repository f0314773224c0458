//! User simulation: polar words are dealt out to users, then every sentence
//! of every split goes to exactly one user according to the polar words it
//! contains.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::polarity::PolarLexicon;
use crate::rng::Rng;
use crate::treebank::{Corpus, Sentence, Split};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WordPartition {
    /// Each word independently uniform over users.
    #[default]
    Iid,
    /// Shuffle, then deal round-robin so user sizes differ by at most one.
    Balanced,
}

/// Which test sentences count as a user's own.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PureTestRule {
    /// No polar word owned by another user. Sentences without polar words
    /// qualify.
    #[default]
    NoForeign,
    /// No foreign polar word and at least one owned polar word.
    RequireOwned,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WordOwnership {
    owner: HashMap<String, usize>,
    n_users: usize,
}

impl WordOwnership {
    pub fn n_users(&self) -> usize {
        self.n_users
    }

    pub fn owner(&self, word: &str) -> Option<usize> {
        self.owner.get(word).copied()
    }

    pub fn len(&self) -> usize {
        self.owner.len()
    }

    pub fn is_empty(&self) -> bool {
        self.owner.is_empty()
    }

    /// Sorted words owned by `user`.
    pub fn words_of(&self, user: usize) -> Vec<&str> {
        let mut w: Vec<&str> = self
            .owner
            .iter()
            .filter(|(_, &u)| u == user)
            .map(|(w, _)| w.as_str())
            .collect();
        w.sort_unstable();
        w
    }

    /// Distinct owners of the polar words in `tokens`.
    pub fn owners_in<S: AsRef<str>>(&self, tokens: &[S]) -> BTreeSet<usize> {
        tokens.iter().filter_map(|t| self.owner(t.as_ref())).collect()
    }
}

pub fn assign_words(
    lexicon: &PolarLexicon,
    n_users: usize,
    scheme: WordPartition,
    rng: &mut Rng,
) -> Result<WordOwnership> {
    if n_users == 0 {
        return Err(Error::InvalidArgument("n_users must be at least 1".into()));
    }
    let words: Vec<&str> = lexicon.words().collect();
    let owner = match scheme {
        WordPartition::Iid => words.iter().map(|w| (w.to_string(), rng.index(n_users))).collect(),
        WordPartition::Balanced => {
            let mut order: Vec<usize> = (0..words.len()).collect();
            rng.shuffle(&mut order);
            order
                .iter()
                .enumerate()
                .map(|(slot, &wi)| (words[wi].to_string(), slot % n_users))
                .collect()
        }
    };
    Ok(WordOwnership { owner, n_users })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserShard {
    pub user: usize,
    pub train: Vec<Sentence>,
    pub dev: Vec<Sentence>,
    pub test: Vec<Sentence>,
    pub pure_test: Vec<Sentence>,
}

impl UserShard {
    pub fn split(&self, split: Split) -> &[Sentence] {
        match split {
            Split::Train => &self.train,
            Split::Dev => &self.dev,
            Split::Test => &self.test,
        }
    }

    fn split_mut(&mut self, split: Split) -> &mut Vec<Sentence> {
        match split {
            Split::Train => &mut self.train,
            Split::Dev => &mut self.dev,
            Split::Test => &mut self.test,
        }
    }
}

/// Pick the user a sentence belongs to: the sole owner of its polar words,
/// a uniform choice among several owners, or a uniform choice among all
/// users when it has none.
pub fn assign_sentence<S: AsRef<str>>(tokens: &[S], ownership: &WordOwnership, rng: &mut Rng) -> usize {
    let owners: Vec<usize> = ownership.owners_in(tokens).into_iter().collect();
    match owners.len() {
        0 => rng.index(ownership.n_users),
        1 => owners[0],
        n => owners[rng.index(n)],
    }
}

/// Distribute every sentence of every split to one user and derive each
/// user's pure test set.
pub fn assign_sentences(
    corpus: &Corpus,
    ownership: &WordOwnership,
    rule: PureTestRule,
    rng: &mut Rng,
) -> Vec<UserShard> {
    let mut shards: Vec<UserShard> = (0..ownership.n_users)
        .map(|user| UserShard {
            user,
            train: Vec::new(),
            dev: Vec::new(),
            test: Vec::new(),
            pure_test: Vec::new(),
        })
        .collect();
    for split in Split::ALL {
        for s in corpus.split(split) {
            let user = assign_sentence(&s.tokens, ownership, rng);
            shards[user].split_mut(split).push(s.clone());
        }
    }
    for shard in &mut shards {
        shard.pure_test = pure_user_test(shard, ownership, rule);
    }
    shards
}

/// Test sentences of `shard` containing no polar word owned by another user.
pub fn pure_user_test(shard: &UserShard, ownership: &WordOwnership, rule: PureTestRule) -> Vec<Sentence> {
    shard
        .test
        .iter()
        .filter(|s| {
            let owners = ownership.owners_in(&s.tokens);
            let no_foreign = owners.iter().all(|&u| u == shard.user);
            match rule {
                PureTestRule::NoForeign => no_foreign,
                PureTestRule::RequireOwned => no_foreign && owners.contains(&shard.user),
            }
        })
        .cloned()
        .collect()
}

/// Sentence ids held by one user, per split.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShardIds {
    pub user: usize,
    pub train: Vec<usize>,
    pub dev: Vec<usize>,
    pub test: Vec<usize>,
    pub pure_test: Vec<usize>,
    pub owned_words: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShardManifest {
    pub n_users: usize,
    pub users: Vec<ShardIds>,
}

impl ShardManifest {
    pub fn new(shards: &[UserShard], ownership: &WordOwnership) -> Self {
        let ids = |v: &[Sentence]| v.iter().map(|s| s.id).collect();
        ShardManifest {
            n_users: ownership.n_users,
            users: shards
                .iter()
                .map(|s| ShardIds {
                    user: s.user,
                    train: ids(&s.train),
                    dev: ids(&s.dev),
                    test: ids(&s.test),
                    pure_test: ids(&s.pure_test),
                    owned_words: ownership.words_of(s.user).into_iter().map(String::from).collect(),
                })
                .collect(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}
