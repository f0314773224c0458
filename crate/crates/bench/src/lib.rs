//! Shared fixtures for the criterion benches.

use personabench_core::neural::{Hyperparams, ModelParams};
use personabench_core::polarity::PolarLexicon;
use personabench_core::synth::{synthetic_corpus, SynthConfig};
use personabench_core::text::build_vocab;
use personabench_core::treebank::Corpus;
use personabench_core::Rng;

/// A corpus shaped roughly like the standard treebank splits.
pub fn corpus() -> Corpus {
    synthetic_corpus(&SynthConfig {
        train: 8544,
        dev: 1101,
        test: 2210,
        polar_words: 300,
        neutral_words: 15_000,
        ..SynthConfig::default()
    })
}

/// A freshly initialized model with default hyperparameters over the
/// corpus train vocabulary.
pub fn model(corpus: &Corpus) -> ModelParams {
    let vocab = build_vocab(&corpus.train).expect("nonempty train split");
    ModelParams::init(vocab, &Hyperparams::default(), &mut Rng::seed_from_u64(0))
}

pub fn lexicon(k: usize) -> PolarLexicon {
    PolarLexicon::new(
        (0..k).map(|i| format!("good{i}")).collect(),
        (0..k).map(|i| format!("bad{i}")).collect(),
    )
    .expect("disjoint sides")
}
