//! Sentiment treebank reader.
//!
//! One tree per line, each node written as `(label child...)` or
//! `(label token)` with labels in `0..=4`. Trees are flattened into
//! binary-labeled sentences: labels 0 and 1 are negative, 3 and 4 positive,
//! and 2 (neutral) is dropped.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TreeBody {
    Leaf(String),
    Children(Vec<SentimentTree>),
}

/// A labeled constituency tree. Leaves carry a token, internal nodes carry
/// at least one child.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SentimentTree {
    label: u8,
    body: TreeBody,
}

impl SentimentTree {
    pub fn leaf(label: u8, token: impl Into<String>) -> Result<Self> {
        check_label(i64::from(label))?;
        let token = token.into();
        if token.is_empty() || token.chars().any(|c| c.is_whitespace() || c == '(' || c == ')') {
            return Err(Error::InvalidArgument(format!("invalid token {token:?}")));
        }
        Ok(SentimentTree {
            label,
            body: TreeBody::Leaf(token),
        })
    }

    pub fn node(label: u8, children: Vec<SentimentTree>) -> Result<Self> {
        check_label(i64::from(label))?;
        if children.is_empty() {
            return Err(Error::InvalidArgument("internal node without children".into()));
        }
        Ok(SentimentTree {
            label,
            body: TreeBody::Children(children),
        })
    }

    pub fn label(&self) -> u8 {
        self.label
    }

    pub fn body(&self) -> &TreeBody {
        &self.body
    }

    pub fn token(&self) -> Option<&str> {
        match &self.body {
            TreeBody::Leaf(t) => Some(t),
            TreeBody::Children(_) => None,
        }
    }

    pub fn children(&self) -> &[SentimentTree] {
        match &self.body {
            TreeBody::Leaf(_) => &[],
            TreeBody::Children(c) => c,
        }
    }

    /// Leaf tokens in left-to-right order, unnormalized.
    pub fn leaves(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.collect_leaves(&mut out);
        out
    }

    fn collect_leaves<'a>(&'a self, out: &mut Vec<&'a str>) {
        match &self.body {
            TreeBody::Leaf(t) => out.push(t),
            TreeBody::Children(c) => c.iter().for_each(|ch| ch.collect_leaves(out)),
        }
    }

    /// Pre-order traversal over every node, root first.
    pub fn subtrees(&self) -> Vec<&SentimentTree> {
        let mut out = Vec::new();
        let mut stack = vec![self];
        while let Some(t) = stack.pop() {
            out.push(t);
            stack.extend(t.children().iter().rev());
        }
        out
    }
}

impl fmt::Display for SentimentTree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.body {
            TreeBody::Leaf(t) => write!(f, "({} {})", self.label, t),
            TreeBody::Children(c) => {
                write!(f, "({}", self.label)?;
                for ch in c {
                    write!(f, " {ch}")?;
                }
                write!(f, ")")
            }
        }
    }
}

fn check_label(label: i64) -> Result<u8> {
    if (0..=4).contains(&label) {
        Ok(label as u8)
    } else {
        Err(Error::InvalidLabel(label))
    }
}

struct LineParser {
    chars: Vec<char>,
    pos: usize,
    line: usize,
}

impl LineParser {
    fn new(src: &str, line: usize) -> Self {
        LineParser {
            chars: src.chars().collect(),
            pos: 0,
            line,
        }
    }

    fn err(&self, message: impl Into<String>) -> Error {
        Error::Parse {
            line: self.line,
            offset: self.pos,
            message: message.into(),
        }
    }

    fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).copied()
    }

    fn skip_ws(&mut self) -> bool {
        let start = self.pos;
        while self.peek().is_some_and(char::is_whitespace) {
            self.pos += 1;
        }
        self.pos > start
    }

    fn expect(&mut self, c: char) -> Result<()> {
        match self.peek() {
            Some(got) if got == c => {
                self.pos += 1;
                Ok(())
            }
            Some(got) => Err(self.err(format!("expected '{c}', found '{got}'"))),
            None => Err(self.err(format!("expected '{c}', found end of line"))),
        }
    }

    fn node(&mut self) -> Result<SentimentTree> {
        self.expect('(')?;
        let label_start = self.pos;
        while self.peek().is_some_and(|c| c.is_ascii_digit()) {
            self.pos += 1;
        }
        if self.pos == label_start {
            return Err(match self.peek() {
                Some(')') => self.err("empty node"),
                _ => self.err("expected a numeric label"),
            });
        }
        let digits: String = self.chars[label_start..self.pos].iter().collect();
        let value: i64 = digits.parse().unwrap_or(i64::MAX);
        if !(0..=4).contains(&value) {
            self.pos = label_start;
            return Err(self.err(format!("label {digits} outside 0..4")));
        }
        let label = value as u8;
        if !self.skip_ws() {
            return Err(match self.peek() {
                Some(')') => self.err("empty node"),
                None => self.err("unexpected end of line"),
                Some(c) => self.err(format!("expected whitespace after label, found '{c}'")),
            });
        }
        match self.peek() {
            None => Err(self.err("unexpected end of line")),
            Some(')') => Err(self.err("empty node")),
            Some('(') => {
                let mut children = Vec::new();
                loop {
                    children.push(self.node()?);
                    self.skip_ws();
                    match self.peek() {
                        Some(')') => {
                            self.pos += 1;
                            break;
                        }
                        Some('(') => continue,
                        Some(c) => return Err(self.err(format!("token '{c}...' mixed with child nodes"))),
                        None => return Err(self.err("unbalanced parentheses")),
                    }
                }
                Ok(SentimentTree {
                    label,
                    body: TreeBody::Children(children),
                })
            }
            Some(_) => {
                let start = self.pos;
                while self
                    .peek()
                    .is_some_and(|c| !c.is_whitespace() && c != '(' && c != ')')
                {
                    self.pos += 1;
                }
                let token: String = self.chars[start..self.pos].iter().collect();
                self.skip_ws();
                match self.peek() {
                    Some(')') => {
                        self.pos += 1;
                        Ok(SentimentTree {
                            label,
                            body: TreeBody::Leaf(token),
                        })
                    }
                    Some('(') => Err(self.err("child node after a token")),
                    Some(_) => Err(self.err("leaf holds more than one token")),
                    None => Err(self.err("unbalanced parentheses")),
                }
            }
        }
    }

    fn tree(mut self) -> Result<SentimentTree> {
        self.skip_ws();
        let t = self.node()?;
        self.skip_ws();
        if let Some(c) = self.peek() {
            return Err(self.err(format!("trailing content starting with '{c}'")));
        }
        Ok(t)
    }
}

/// Parse one tree from a single line. `line` is used for error positions.
pub fn parse_tree(src: &str, line: usize) -> Result<SentimentTree> {
    LineParser::new(src, line).tree()
}

/// Parse every nonempty line of `text` as one tree, in order.
pub fn parse_trees(text: &str) -> Result<Vec<SentimentTree>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| parse_tree(l, i + 1))
        .collect()
}

/// Token normalization: lowercasing only.
pub fn normalize(token: &str) -> String {
    token.to_lowercase()
}

/// Flatten a tree to its normalized leaf tokens and its root label.
pub fn sentence_of(tree: &SentimentTree) -> (Vec<String>, u8) {
    let tokens = tree.leaves().into_iter().map(normalize).collect();
    (tokens, tree.label)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Polarity {
    Negative,
    Positive,
}

impl Polarity {
    pub fn target(self) -> f64 {
        match self {
            Polarity::Negative => 0.0,
            Polarity::Positive => 1.0,
        }
    }
}

/// Map a fine-grained label to a binary one; `None` means the sentence is
/// neutral and dropped.
pub fn binarize(label: u8) -> Result<Option<Polarity>> {
    match label {
        0 | 1 => Ok(Some(Polarity::Negative)),
        3 | 4 => Ok(Some(Polarity::Positive)),
        2 => Ok(None),
        other => Err(Error::InvalidLabel(i64::from(other))),
    }
}

/// Description of the binary mapping, echoed into report metadata.
pub const BINARY_MAPPING: &str = "{0,1} -> negative, {3,4} -> positive, 2 dropped";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sentence {
    pub id: usize,
    pub tokens: Vec<String>,
    pub label: Polarity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Dev, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        }
    }
}

/// Which labeled units of the train split become training examples.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Granularity {
    /// Root labels only.
    #[default]
    Sentence,
    /// Every labeled subtree, root included.
    Phrase,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusFiles {
    pub train: String,
    pub dev: String,
    pub test: String,
}

impl Default for CorpusFiles {
    fn default() -> Self {
        CorpusFiles {
            train: "train.txt".into(),
            dev: "dev.txt".into(),
            test: "test.txt".into(),
        }
    }
}

impl CorpusFiles {
    pub fn name(&self, split: Split) -> &str {
        match split {
            Split::Train => &self.train,
            Split::Dev => &self.dev,
            Split::Test => &self.test,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub train: usize,
    pub dev: usize,
    pub test: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corpus {
    pub train: Vec<Sentence>,
    pub dev: Vec<Sentence>,
    pub test: Vec<Sentence>,
    /// Number of trees parsed per split, before neutral filtering.
    pub tree_counts: SplitCounts,
}

impl Corpus {
    pub fn split(&self, split: Split) -> &[Sentence] {
        match split {
            Split::Train => &self.train,
            Split::Dev => &self.dev,
            Split::Test => &self.test,
        }
    }

    /// Build a corpus from already-parsed trees.
    pub fn from_trees(
        train: &[SentimentTree],
        dev: &[SentimentTree],
        test: &[SentimentTree],
        train_granularity: Granularity,
    ) -> Result<Self> {
        let corpus = Corpus {
            train: sentences(train, train_granularity)?,
            dev: sentences(dev, Granularity::Sentence)?,
            test: sentences(test, Granularity::Sentence)?,
            tree_counts: SplitCounts {
                train: train.len(),
                dev: dev.len(),
                test: test.len(),
            },
        };
        for split in Split::ALL {
            if corpus.split(split).is_empty() {
                return Err(Error::EmptySplit(split.name().into()));
            }
        }
        Ok(corpus)
    }
}

fn sentences(trees: &[SentimentTree], granularity: Granularity) -> Result<Vec<Sentence>> {
    let mut out = Vec::new();
    for tree in trees {
        let units: Vec<&SentimentTree> = match granularity {
            Granularity::Sentence => vec![tree],
            Granularity::Phrase => tree.subtrees(),
        };
        for unit in units {
            let (tokens, root) = sentence_of(unit);
            if let Some(label) = binarize(root)? {
                out.push(Sentence {
                    id: out.len(),
                    tokens,
                    label,
                });
            }
        }
    }
    Ok(out)
}

fn read_split(dir: &Path, name: &str) -> Result<Vec<SentimentTree>> {
    let path: PathBuf = dir.join(name);
    if !path.is_file() {
        return Err(Error::MissingFile(path));
    }
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    parse_trees(&text).map_err(|e| Error::InFile {
        file: path,
        source: Box::new(e),
    })
}

/// Read the three split files from `dir`, drop neutral sentences and assign
/// sequential ids per split.
pub fn load_corpus(dir: &Path, files: &CorpusFiles, train_granularity: Granularity) -> Result<Corpus> {
    let train = read_split(dir, &files.train)?;
    let dev = read_split(dir, &files.dev)?;
    let test = read_split(dir, &files.test)?;
    Corpus::from_trees(&train, &dev, &test, train_granularity)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_small_tree() {
        let trees = parse_trees("(3 (2 A) (4 B))").unwrap();
        assert_eq!(trees.len(), 1);
        let t = &trees[0];
        assert_eq!(t.label(), 3);
        assert_eq!(t.children().len(), 2);
        assert_eq!(t.children()[0].label(), 2);
        assert_eq!(t.children()[0].token(), Some("A"));
        assert_eq!(t.children()[1].label(), 4);
        assert_eq!(t.children()[1].token(), Some("B"));
    }

    #[test]
    fn empty_input_gives_no_trees() {
        assert!(parse_trees("").unwrap().is_empty());
        assert!(parse_trees("\n  \n").unwrap().is_empty());
    }

    #[test]
    fn sentence_of_lowercases_in_leaf_order() {
        let t = parse_tree("(3 (2 A) (4 B))", 1).unwrap();
        assert_eq!(sentence_of(&t), (vec!["a".to_string(), "b".to_string()], 3));
        let t = parse_tree("(1 bad)", 1).unwrap();
        assert_eq!(sentence_of(&t), (vec!["bad".to_string()], 1));
    }

    #[test]
    fn binarize_mapping() {
        assert_eq!(binarize(0).unwrap(), Some(Polarity::Negative));
        assert_eq!(binarize(1).unwrap(), Some(Polarity::Negative));
        assert_eq!(binarize(2).unwrap(), None);
        assert_eq!(binarize(3).unwrap(), Some(Polarity::Positive));
        assert_eq!(binarize(4).unwrap(), Some(Polarity::Positive));
        assert!(binarize(5).is_err());
    }

    fn parse_err(src: &str) -> (usize, usize) {
        match parse_trees(src) {
            Err(Error::Parse { line, offset, .. }) => (line, offset),
            other => panic!("expected parse error for {src:?}, got {other:?}"),
        }
    }

    #[test]
    fn errors_carry_line_and_offset() {
        assert_eq!(parse_err("(2 a)\n\n(3 (2 a) (7 b))"), (3, 10));
        assert_eq!(parse_err("(2 a"), (1, 4));
    }

    #[test]
    fn malformed_inputs_are_rejected() {
        for bad in [
            "(2 a",
            "(2 a))",
            "()",
            "(2 )",
            "(2)",
            "(9 a)",
            "(2 a b)",
            "(2 (1 a) b)",
            "(x a)",
            "2 a",
            "(2 a) (3 b)",
        ] {
            assert!(
                matches!(parse_trees(bad), Err(Error::Parse { .. })),
                "accepted {bad:?}"
            );
        }
    }

    #[test]
    fn round_trip_on_real_looking_line() {
        let line = "(3 (2 It) (4 (4 (2 's) (4 (3 (2 a) (4 (3 lovely) (2 film))) (3 (2 with) (4 (3 (3 lovely) (2 performances)) (2 (2 by) (2 (2 (2 Buy) (2 and)) (2 Accorsi))))))) (2 .)))";
        let t = parse_tree(line, 1).unwrap();
        assert_eq!(t.to_string(), line);
        assert_eq!(t.leaves().len(), 13);
    }

    #[test]
    fn phrase_granularity_uses_every_non_neutral_subtree() {
        let t = parse_trees("(3 (2 A) (4 B))").unwrap();
        let c = Corpus::from_trees(&t, &t, &t, Granularity::Phrase).unwrap();
        assert_eq!(c.train.len(), 2);
        assert_eq!(c.dev.len(), 1);
        assert_eq!(c.train[1].tokens, vec!["b".to_string()]);
    }

    #[test]
    fn all_neutral_split_is_an_error() {
        let neutral = parse_trees("(2 (2 a) (2 b))").unwrap();
        let pos = parse_trees("(4 good)").unwrap();
        let err = Corpus::from_trees(&pos, &neutral, &pos, Granularity::Sentence).unwrap_err();
        assert!(matches!(err, Error::EmptySplit(ref s) if s == "dev"));
        assert!(err.to_string().contains("empty split after neutral filtering"));
    }

    #[test]
    fn missing_file_names_the_file() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("train.txt"), "(4 good)\n").unwrap();
        fs::write(dir.path().join("dev.txt"), "(4 good)\n").unwrap();
        let err = load_corpus(dir.path(), &CorpusFiles::default(), Granularity::Sentence).unwrap_err();
        assert!(err.to_string().contains("test.txt"), "{err}");
    }

    #[test]
    fn parse_error_in_file_names_the_file() {
        let dir = tempfile::tempdir().unwrap();
        for f in ["train.txt", "test.txt"] {
            fs::write(dir.path().join(f), "(4 good)\n").unwrap();
        }
        fs::write(dir.path().join("dev.txt"), "(4 good)\n(1 (0 bad)\n").unwrap();
        let err = load_corpus(dir.path(), &CorpusFiles::default(), Granularity::Sentence).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("dev.txt") && msg.contains("line 2"), "{msg}");
    }

    #[test]
    fn load_assigns_sequential_ids_after_filtering() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("train.txt"), "(4 good)\n(2 meh)\n(0 awful)\n").unwrap();
        fs::write(dir.path().join("dev.txt"), "(3 fine)\n").unwrap();
        fs::write(dir.path().join("test.txt"), "(1 poor)\n").unwrap();
        let c = load_corpus(dir.path(), &CorpusFiles::default(), Granularity::Sentence).unwrap();
        assert_eq!(c.tree_counts, SplitCounts { train: 3, dev: 1, test: 1 });
        let ids: Vec<usize> = c.train.iter().map(|s| s.id).collect();
        assert_eq!(ids, vec![0, 1]);
        assert_eq!(c.train[1].tokens, vec!["awful".to_string()]);
    }
}
