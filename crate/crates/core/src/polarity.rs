//! Polar word extraction.
//!
//! A bag-of-words logistic regression over binary word-presence features is
//! fit on the global train split; the words with the largest and smallest
//! weights form the lexicon that later defines the simulated users. This
//! model belongs to the experimenter, not to any user, so it may see the
//! whole train split.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::text::Vocab;
use crate::treebank::{Polarity, Sentence};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRegConfig {
    pub l2: f64,
    pub lr: f64,
    pub epochs: usize,
    /// Half-width of the uniform weight initialization. Zero makes the fit
    /// independent of the seed.
    pub init_scale: f64,
}

impl Default for LogRegConfig {
    fn default() -> Self {
        LogRegConfig {
            l2: 1e-4,
            lr: 0.1,
            epochs: 100,
            init_scale: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRegModel {
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl LogRegModel {
    pub fn weight(&self, vocab: &Vocab, word: &str) -> Option<f64> {
        vocab.get(word).map(|i| self.weights[i])
    }
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Deduplicated, sorted feature indices of a sentence.
fn presence(vocab: &Vocab, s: &Sentence) -> Vec<usize> {
    let mut idx = vocab.encode(&s.tokens);
    idx.sort_unstable();
    idx.dedup();
    idx
}

/// Full-batch gradient descent on mean binary cross-entropy plus
/// `l2 / 2 * |w|^2` (the bias is not penalized).
pub fn train_logreg(train: &[Sentence], vocab: &Vocab, config: &LogRegConfig, seed: u64) -> Result<LogRegModel> {
    if train.is_empty() {
        return Err(Error::EmptyInput("logistic regression needs training sentences"));
    }
    let positives = train.iter().filter(|s| s.label == Polarity::Positive).count();
    if positives == 0 || positives == train.len() {
        return Err(Error::Degenerate("train split holds a single class".into()));
    }
    if config.l2 < 0.0 || !config.l2.is_finite() {
        return Err(Error::InvalidArgument(format!("l2 must be nonnegative, got {}", config.l2)));
    }

    let features: Vec<Vec<usize>> = train.iter().map(|s| presence(vocab, s)).collect();
    let targets: Vec<f64> = train.iter().map(|s| s.label.target()).collect();
    let n = train.len() as f64;

    let mut rng = Rng::seed_from_u64(seed);
    let mut weights: Vec<f64> = (0..vocab.len())
        .map(|_| {
            if config.init_scale > 0.0 {
                rng.uniform_in(-config.init_scale, config.init_scale)
            } else {
                0.0
            }
        })
        .collect();
    let mut bias = 0.0;
    let mut grad = vec![0.0; vocab.len()];

    for _ in 0..config.epochs {
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut grad_bias = 0.0;
        for (feats, &y) in features.iter().zip(&targets) {
            let z = bias + feats.iter().map(|&i| weights[i]).sum::<f64>();
            let residual = sigmoid(z) - y;
            grad_bias += residual;
            for &i in feats {
                grad[i] += residual;
            }
        }
        for (w, g) in weights.iter_mut().zip(&grad) {
            *w -= config.lr * (g / n + config.l2 * *w);
        }
        bias -= config.lr * grad_bias / n;
    }

    if weights.iter().any(|w| !w.is_finite()) || !bias.is_finite() {
        return Err(Error::Degenerate("logistic regression diverged".into()));
    }
    Ok(LogRegModel { weights, bias })
}

/// The most positive and most negative words of a polarity model.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolarLexicon {
    /// Descending weight order.
    pub positive: Vec<String>,
    /// Ascending weight order.
    pub negative: Vec<String>,
}

impl PolarLexicon {
    pub fn new(positive: Vec<String>, negative: Vec<String>) -> Result<Self> {
        if positive.len() != negative.len() {
            return Err(Error::InvalidArgument(format!(
                "lexicon sides differ in size: {} positive, {} negative",
                positive.len(),
                negative.len()
            )));
        }
        let mut seen = HashSet::new();
        for w in positive.iter().chain(&negative) {
            if !seen.insert(w.as_str()) {
                return Err(Error::InvalidArgument(format!("word {w:?} listed twice in lexicon")));
            }
        }
        Ok(PolarLexicon { positive, negative })
    }

    pub fn k(&self) -> usize {
        self.positive.len()
    }

    /// Positive words then negative words.
    pub fn words(&self) -> impl Iterator<Item = &str> {
        self.positive.iter().chain(&self.negative).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.positive.len() + self.negative.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Plain-text form: one word per line prefixed by `+ ` or `- `.
    pub fn to_text(&self) -> String {
        let mut out = format!("# polar lexicon, k={}\n", self.k());
        for w in &self.positive {
            let _ = writeln!(out, "+ {w}");
        }
        for w in &self.negative {
            let _ = writeln!(out, "- {w}");
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut positive = Vec::new();
        let mut negative = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim_end();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = || Error::Parse {
                line: i + 1,
                offset: 0,
                message: "expected '+ word' or '- word'".into(),
            };
            let (sign, word) = line.split_once(' ').ok_or_else(bad)?;
            if word.is_empty() || word.contains(char::is_whitespace) {
                return Err(bad());
            }
            match sign {
                "+" => positive.push(word.to_string()),
                "-" => negative.push(word.to_string()),
                _ => return Err(bad()),
            }
        }
        PolarLexicon::new(positive, negative)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        PolarLexicon::from_text(&text).map_err(|e| Error::InFile {
            file: path.to_path_buf(),
            source: Box::new(e),
        })
    }
}

/// The `k` largest-weight and `k` smallest-weight words. Ties go to the
/// lower vocabulary index.
pub fn top_polar_words(model: &LogRegModel, vocab: &Vocab, k: usize) -> Result<PolarLexicon> {
    if model.weights.len() != vocab.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} weights for a vocabulary of {}",
            model.weights.len(),
            vocab.len()
        )));
    }
    if vocab.len() < 2 * k {
        return Err(Error::VocabTooSmall {
            size: vocab.len(),
            needed: 2 * k,
        });
    }
    let w = &model.weights;
    let mut order: Vec<usize> = (0..vocab.len()).collect();
    order.sort_by(|&a, &b| w[b].total_cmp(&w[a]).then(a.cmp(&b)));
    let positive_idx: Vec<usize> = order[..k].to_vec();
    let taken: HashSet<usize> = positive_idx.iter().copied().collect();

    order.sort_by(|&a, &b| w[a].total_cmp(&w[b]).then(a.cmp(&b)));
    let negative_idx: Vec<usize> = order.into_iter().filter(|i| !taken.contains(i)).take(k).collect();

    let name = |i: usize| vocab.word(i).expect("index in range").to_string();
    PolarLexicon::new(
        positive_idx.into_iter().map(name).collect(),
        negative_idx.into_iter().map(name).collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::text::build_vocab;

    fn sent(id: usize, toks: &[&str], label: Polarity) -> Sentence {
        Sentence {
            id,
            tokens: toks.iter().map(|t| t.to_string()).collect(),
            label,
        }
    }

    #[test]
    fn separable_pair_gets_opposite_signs() {
        let train = vec![
            sent(0, &["good"], Polarity::Positive),
            sent(1, &["bad"], Polarity::Negative),
        ];
        let vocab = build_vocab(&train).unwrap();
        let m = train_logreg(&train, &vocab, &LogRegConfig::default(), 0).unwrap();
        assert!(m.weight(&vocab, "good").unwrap() > 0.0);
        assert!(m.weight(&vocab, "bad").unwrap() < 0.0);
    }

    #[test]
    fn balanced_word_stays_near_zero() {
        let train = vec![
            sent(0, &["good", "the"], Polarity::Positive),
            sent(1, &["bad", "the"], Polarity::Negative),
        ];
        let vocab = build_vocab(&train).unwrap();
        let m = train_logreg(&train, &vocab, &LogRegConfig::default(), 0).unwrap();
        let the = m.weight(&vocab, "the").unwrap();
        assert!(the.abs() < 1e-9, "{the}");
        assert!(m.weight(&vocab, "good").unwrap() > 0.1);
    }

    #[test]
    fn single_class_is_degenerate() {
        let train = vec![sent(0, &["a"], Polarity::Positive), sent(1, &["b"], Polarity::Positive)];
        let vocab = build_vocab(&train).unwrap();
        assert!(matches!(
            train_logreg(&train, &vocab, &LogRegConfig::default(), 0),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn seeded_init_is_deterministic() {
        let train = vec![
            sent(0, &["good", "x"], Polarity::Positive),
            sent(1, &["bad", "y"], Polarity::Negative),
        ];
        let vocab = build_vocab(&train).unwrap();
        let cfg = LogRegConfig {
            init_scale: 0.01,
            ..LogRegConfig::default()
        };
        let a = train_logreg(&train, &vocab, &cfg, 3).unwrap();
        let b = train_logreg(&train, &vocab, &cfg, 3).unwrap();
        let c = train_logreg(&train, &vocab, &cfg, 4).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    fn abcd() -> (LogRegModel, Vocab) {
        let vocab = build_vocab(&[sent(0, &["a", "b", "c", "d"], Polarity::Positive)]).unwrap();
        let m = LogRegModel {
            weights: vec![2.0, 1.0, -1.0, -3.0],
            bias: 0.0,
        };
        (m, vocab)
    }

    #[test]
    fn top_words_by_weight() {
        let (m, v) = abcd();
        let lex = top_polar_words(&m, &v, 1).unwrap();
        assert_eq!(lex.positive, ["a"]);
        assert_eq!(lex.negative, ["d"]);
        let lex = top_polar_words(&m, &v, 2).unwrap();
        assert_eq!(lex.positive, ["a", "b"]);
        assert_eq!(lex.negative, ["d", "c"]);
        assert_eq!(top_polar_words(&m, &v, 2).unwrap(), lex);
    }

    #[test]
    fn ties_go_to_lower_index() {
        let vocab = build_vocab(&[sent(0, &["a", "b"], Polarity::Positive)]).unwrap();
        let m = LogRegModel {
            weights: vec![1.0, 1.0],
            bias: 0.0,
        };
        let lex = top_polar_words(&m, &vocab, 1).unwrap();
        assert_eq!(lex.positive, ["a"]);
        assert_eq!(lex.negative, ["b"]);
    }

    #[test]
    fn small_vocab_is_rejected() {
        let (m, v) = abcd();
        assert!(matches!(top_polar_words(&m, &v, 3), Err(Error::VocabTooSmall { size: 4, needed: 6 })));
    }

    #[test]
    fn lexicon_text_round_trip() {
        let lex = PolarLexicon::new(vec!["great".into(), "fun".into()], vec!["dull".into(), "bad".into()]).unwrap();
        let text = lex.to_text();
        assert!(text.contains("+ great\n") && text.contains("- bad\n"));
        assert_eq!(PolarLexicon::from_text(&text).unwrap(), lex);
        assert!(PolarLexicon::from_text("* odd\n").is_err());
        assert!(PolarLexicon::from_text("+ a\n- a\n").is_err());
        assert!(PolarLexicon::from_text("+ a\n").is_err());
    }
}
