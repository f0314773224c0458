//! Synthetic treebanks in the standard one-tree-per-line format.
//!
//! Sentences mix neutral filler with a few polar words whose polarity mostly
//! agrees with the root label, which is enough structure for the polarity
//! model, the partition, and the classifier to behave like on real data.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::treebank::{Corpus, Granularity, SentimentTree, Split, SplitCounts};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub train: usize,
    pub dev: usize,
    pub test: usize,
    /// Polar words per side.
    pub polar_words: usize,
    pub neutral_words: usize,
    /// Fraction of sentences with a neutral root, dropped on loading.
    pub neutral_fraction: f64,
    /// Chance that a polar word disagrees with the root.
    pub noise: f64,
    pub min_len: usize,
    pub max_len: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            train: 400,
            dev: 60,
            test: 120,
            polar_words: 40,
            neutral_words: 150,
            neutral_fraction: 0.1,
            noise: 0.1,
            min_len: 4,
            max_len: 12,
            seed: 17,
        }
    }
}

fn leaf(label: u8, token: String) -> SentimentTree {
    SentimentTree::leaf(label, token).expect("generated labels are valid")
}

fn node(label: u8, children: Vec<SentimentTree>) -> SentimentTree {
    SentimentTree::node(label, children).expect("generated nodes are nonempty")
}

/// Fold leaves into a right-branching binary tree.
fn right_branching(mut leaves: Vec<SentimentTree>, root: u8) -> SentimentTree {
    let mut acc = leaves.pop().expect("at least one leaf");
    while let Some(l) = leaves.pop() {
        let label = if leaves.is_empty() { root } else { 2 };
        acc = node(label, vec![l, acc]);
    }
    if acc.children().is_empty() {
        node(root, vec![acc])
    } else {
        acc
    }
}

/// One synthetic labeled sentence tree.
pub fn synthetic_tree(config: &SynthConfig, rng: &mut Rng) -> SentimentTree {
    let root: u8 = if rng.next_uniform() < config.neutral_fraction {
        2
    } else {
        [0, 1, 3, 4][rng.index(4)]
    };
    let positive = root > 2;
    let len = config.min_len + rng.index(config.max_len - config.min_len + 1);
    let n_polar = if root == 2 { 0 } else { 1 + rng.index(2) };
    let mut tokens: Vec<SentimentTree> = (0..len)
        .map(|_| leaf(2, format!("w{}", rng.index(config.neutral_words))))
        .collect();
    for _ in 0..n_polar.min(len) {
        let agree = rng.next_uniform() >= config.noise;
        let pos = positive == agree;
        let word = rng.index(config.polar_words);
        let slot = rng.index(len);
        tokens[slot] = if pos {
            leaf(3, format!("good{word}"))
        } else {
            leaf(1, format!("bad{word}"))
        };
    }
    right_branching(tokens, root)
}

pub fn synthetic_trees(n: usize, config: &SynthConfig, rng: &mut Rng) -> Vec<SentimentTree> {
    (0..n).map(|_| synthetic_tree(config, rng)).collect()
}

fn splits(config: &SynthConfig) -> [(Split, Vec<SentimentTree>); 3] {
    let rng = Rng::seed_from_u64(config.seed);
    [
        (Split::Train, synthetic_trees(config.train, config, &mut rng.split("train"))),
        (Split::Dev, synthetic_trees(config.dev, config, &mut rng.split("dev"))),
        (Split::Test, synthetic_trees(config.test, config, &mut rng.split("test"))),
    ]
}

/// Build a corpus in memory.
pub fn synthetic_corpus(config: &SynthConfig) -> Corpus {
    let [(_, train), (_, dev), (_, test)] = splits(config);
    Corpus::from_trees(&train, &dev, &test, Granularity::Sentence).expect("synthetic splits are non-empty")
}

/// Write `train.txt`, `dev.txt` and `test.txt` into `dir`.
pub fn write_synthetic(dir: &Path, config: &SynthConfig) -> Result<SplitCounts> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut counts = SplitCounts::default();
    for (split, trees) in splits(config) {
        let path = dir.join(format!("{}.txt", split.name()));
        let mut text = String::new();
        for t in &trees {
            text.push_str(&t.to_string());
            text.push('\n');
        }
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        match split {
            Split::Train => counts.train = trees.len(),
            Split::Dev => counts.dev = trees.len(),
            Split::Test => counts.test = trees.len(),
        }
    }
    Ok(counts)
}

const TOKEN_CHARS: &[u8] = b"abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789'.,!?-:;&$`";

/// An arbitrary well-formed tree with up to `max_depth` levels, for
/// round-trip testing.
pub fn random_tree(rng: &mut Rng, max_depth: usize) -> SentimentTree {
    let label = rng.index(5) as u8;
    if max_depth == 0 || rng.next_uniform() < 0.3 {
        let len = 1 + rng.index(8);
        let token: String = (0..len).map(|_| TOKEN_CHARS[rng.index(TOKEN_CHARS.len())] as char).collect();
        return leaf(label, token);
    }
    let n = 1 + rng.index(3);
    node(label, (0..n).map(|_| random_tree(rng, max_depth - 1)).collect())
}
