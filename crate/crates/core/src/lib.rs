//! Personalization benchmark on binarized sentiment treebanks.
//!
//! Users are simulated by splitting a polar lexicon between them and routing
//! each sentence to a user that owns one of its polar words. Each user trains
//! a private classifier; models are compared by accuracy on the user's own
//! data and by accuracy over everyone's data, computed without moving data
//! off the simulated nodes.

pub mod config;
pub mod diagnostics;
pub mod ensemble;
pub mod error;
pub mod fedeval;
pub mod metric;
pub mod neural;
pub mod partition;
pub mod polarity;
pub mod report;
pub mod rng;
pub mod runner;
pub mod synth;
pub mod text;
pub mod treebank;

pub use error::{Error, Result};
pub use config::{ExperimentConfig, Strategy, UserWeighting};
pub use metric::{breakeven_alpha, personalization_score, AlphaCutoff, Orientation, PerfPair, Preference};
pub use neural::{Hyperparams, ModelParams};
pub use report::{ExperimentReport, Format};
pub use rng::Rng;
pub use runner::{Prepared, TrialResult};
pub use treebank::{Corpus, Granularity, Polarity, Sentence, Split};
