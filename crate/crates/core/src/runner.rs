//! Seeded trials over the user-count grid.

use std::path::{Path, PathBuf};

use log::{debug, info};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, Strategy, UserWeighting};
use crate::ensemble::{average, Ensemble};
use crate::error::{Error, Result};
use crate::fedeval::{EvalSplit, Federation, ShardSizes};
use crate::neural::{EvalSummary, TrainLog};
use crate::partition::{assign_sentences, assign_words, WordOwnership};
use crate::polarity::{top_polar_words, train_logreg, PolarLexicon};
use crate::report::{report_from_trials, ExperimentReport};
use crate::rng::{derive_seed, Rng};
use crate::text::build_vocab;
use crate::treebank::{load_corpus, Corpus, CorpusFiles, Granularity};

/// Where the lexicon for `(granularity, k)` is cached inside a data directory.
pub fn lexicon_cache_path(data_dir: &Path, granularity: Granularity, k: usize) -> PathBuf {
    let g = match granularity {
        Granularity::Sentence => "sentence",
        Granularity::Phrase => "phrase",
    };
    data_dir.join(format!("lexicon-{g}-k{k}.txt"))
}

/// Fit the polarity model on the global train split and keep the top `k`
/// words per side.
pub fn build_lexicon(corpus: &Corpus, config: &ExperimentConfig) -> Result<PolarLexicon> {
    let vocab = build_vocab(&corpus.train)?;
    let model = train_logreg(&corpus.train, &vocab, &config.logreg, config.seed)?;
    top_polar_words(&model, &vocab, config.k)
}

/// Read the cached lexicon, or build and cache it.
pub fn load_or_build_lexicon(corpus: &Corpus, config: &ExperimentConfig) -> Result<PolarLexicon> {
    let path = lexicon_cache_path(&config.data_dir, config.train_granularity, config.k);
    if path.exists() {
        let lex = PolarLexicon::load(&path)?;
        if lex.k() == config.k {
            debug!("using cached lexicon {}", path.display());
            return Ok(lex);
        }
    }
    let lex = build_lexicon(corpus, config)?;
    lex.save(&path)?;
    info!("wrote lexicon {}", path.display());
    Ok(lex)
}

/// Corpus and lexicon shared read-only by every trial.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub corpus: Corpus,
    pub lexicon: PolarLexicon,
}

impl Prepared {
    pub fn load(config: &ExperimentConfig) -> Result<Self> {
        let corpus = load_corpus(&config.data_dir, &CorpusFiles::default(), config.train_granularity)?;
        let lexicon = load_or_build_lexicon(&corpus, config)?;
        Ok(Prepared { corpus, lexicon })
    }
}

/// Accuracy counts of one strategy for one user.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StrategyCells {
    pub strategy: Strategy,
    /// On the user's pure test set.
    pub user: EvalSummary,
    /// On the whole test set.
    pub global: EvalSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserResult {
    pub user: usize,
    pub owned_words: usize,
    pub sizes: ShardSizes,
    pub train_log: TrainLog,
    pub cells: Vec<StrategyCells>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub n_users: usize,
    pub trial: usize,
    pub seed: u64,
    pub users: Vec<UserResult>,
}

/// Which test set a cell is measured on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scope {
    User,
    Global,
}

impl Scope {
    pub const ALL: [Scope; 2] = [Scope::User, Scope::Global];
}

/// A within-trial cell: accuracy aggregated over users.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialCell {
    /// `None` when every user's set was empty.
    pub accuracy: Option<f64>,
    pub counts: EvalSummary,
    /// Users whose set was empty and who were left out.
    pub empty_users: usize,
}

impl TrialResult {
    pub fn cell(&self, strategy: Strategy, scope: Scope, weighting: UserWeighting) -> TrialCell {
        let summaries: Vec<EvalSummary> = self
            .users
            .iter()
            .filter_map(|u| u.cells.iter().find(|c| c.strategy == strategy))
            .map(|c| match scope {
                Scope::User => c.user,
                Scope::Global => c.global,
            })
            .collect();
        let counts: EvalSummary = summaries.iter().copied().sum();
        let accs: Vec<f64> = summaries.iter().filter_map(EvalSummary::accuracy).collect();
        let accuracy = match weighting {
            UserWeighting::ByCount => counts.accuracy(),
            UserWeighting::Uniform if accs.is_empty() => None,
            UserWeighting::Uniform => Some(average(accs.iter().copied())),
        };
        TrialCell {
            accuracy,
            counts,
            empty_users: summaries.len() - accs.len(),
        }
    }
}

/// Seed of one `(n_users, trial)` cell; independent of the other cells.
pub fn trial_seed(base: u64, n_users: usize, trial: usize) -> u64 {
    derive_seed(&[base, n_users as u64, trial as u64])
}

/// Partition, train every user's model, and evaluate every strategy through
/// the simulated nodes.
pub fn run_trial(prepared: &Prepared, config: &ExperimentConfig, n_users: usize, trial: usize) -> Result<TrialResult> {
    let wrap = |e: Error| Error::Trial {
        n_users,
        trial,
        source: Box::new(e),
    };
    trial_inner(prepared, config, n_users, trial).map_err(wrap)
}

fn trial_inner(prepared: &Prepared, config: &ExperimentConfig, n_users: usize, trial: usize) -> Result<TrialResult> {
    let seed = trial_seed(config.seed, n_users, trial);
    let rng = Rng::seed_from_u64(seed);
    let ownership: WordOwnership = assign_words(&prepared.lexicon, n_users, config.word_partition, &mut rng.split("words"))?;
    let shards = assign_sentences(&prepared.corpus, &ownership, config.pure_rule, &mut rng.split("sentences"));
    let mut fed = Federation::from_shards(shards)?;

    let mut hyper = config.hyper.clone();
    hyper.patience_batches = config.patience_for(prepared.corpus.train.len());
    let logs = fed
        .nodes_mut()
        .par_iter_mut()
        .map(|node| {
            let mut h = hyper.clone();
            h.seed = rng.split(&format!("user-{}", node.user())).next_u64();
            node.train_local(&h)
        })
        .collect::<Result<Vec<TrainLog>>>()?;

    let models: Vec<_> = fed
        .nodes()
        .iter()
        .map(|n| n.local_model().cloned().ok_or(Error::UninitializedNode(n.user())))
        .collect::<Result<_>>()?;
    let single_artifacts = models.iter().map(|m| m.to_artifact()).collect::<Result<Vec<_>>>()?;

    let mut per_user: Vec<Vec<StrategyCells>> = vec![Vec::new(); n_users];
    for &strategy in &config.strategies {
        match strategy.combine() {
            None => {
                for (u, bytes) in single_artifacts.iter().enumerate() {
                    let user = fed.evaluate(u, bytes, EvalSplit::PureTest)?;
                    let global = fed.global(bytes, EvalSplit::Test)?.aggregate;
                    per_user[u].push(StrategyCells { strategy, user, global });
                }
            }
            Some(combine) => {
                let bytes = Ensemble::new(models.clone(), combine)?.to_artifact()?;
                let global = fed.global(&bytes, EvalSplit::Test)?.aggregate;
                for (u, cells) in per_user.iter_mut().enumerate() {
                    let user = fed.evaluate(u, &bytes, EvalSplit::PureTest)?;
                    cells.push(StrategyCells { strategy, user, global });
                }
            }
        }
    }

    let users = fed
        .nodes()
        .iter()
        .zip(logs)
        .zip(per_user)
        .map(|((node, train_log), cells)| {
            Ok(UserResult {
                user: node.user(),
                owned_words: ownership.words_of(node.user()).len(),
                sizes: node.sizes()?,
                train_log,
                cells,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    debug!("trial {trial} with {n_users} users done");
    Ok(TrialResult {
        n_users,
        trial,
        seed,
        users,
    })
}

/// Outcome of a grid run: every successful trial in grid order, and the
/// first failure if any.
#[derive(Debug)]
pub struct GridRun {
    pub trials: Vec<TrialResult>,
    pub failure: Option<Error>,
}

/// Run every `(n_users, trial)` cell, in parallel, and assemble the results
/// in grid order.
pub fn run_grid(prepared: &Prepared, config: &ExperimentConfig) -> Result<GridRun> {
    config.validate()?;
    let cells: Vec<(usize, usize)> = config
        .users
        .iter()
        .flat_map(|&n| (0..config.trials).map(move |t| (n, t)))
        .collect();
    let outcomes: Vec<Result<TrialResult>> = cells
        .par_iter()
        .map(|&(n, t)| run_trial(prepared, config, n, t))
        .collect();
    let mut trials = Vec::new();
    let mut failure = None;
    for o in outcomes {
        match o {
            Ok(t) => trials.push(t),
            Err(e) if failure.is_none() => failure = Some(e),
            Err(_) => {}
        }
    }
    Ok(GridRun { trials, failure })
}

/// Run the whole grid and build the report.
pub fn run_experiment(prepared: &Prepared, config: &ExperimentConfig) -> Result<(Vec<TrialResult>, ExperimentReport)> {
    let run = run_grid(prepared, config)?;
    if let Some(e) = run.failure {
        return Err(e);
    }
    let report = report_from_trials(config, &run.trials)?;
    Ok((run.trials, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{synthetic_corpus, SynthConfig};

    fn small() -> (Prepared, ExperimentConfig) {
        let corpus = synthetic_corpus(&SynthConfig {
            train: 300,
            dev: 80,
            test: 80,
            ..SynthConfig::default()
        });
        let mut config = ExperimentConfig {
            users: vec![1, 2],
            trials: 2,
            k: 10,
            ..ExperimentConfig::default()
        };
        config.hyper.eval_every_batches = 5;
        config.patience_batches = Some(20);
        let lexicon = build_lexicon(&corpus, &config).unwrap();
        (Prepared { corpus, lexicon }, config)
    }

    #[test]
    fn trials_are_deterministic() {
        let (p, c) = small();
        assert_eq!(run_trial(&p, &c, 2, 1).unwrap(), run_trial(&p, &c, 2, 1).unwrap());
    }

    #[test]
    fn one_user_ensembles_equal_the_single_model() {
        let (p, c) = small();
        let t = run_trial(&p, &c, 1, 0).unwrap();
        let cells = &t.users[0].cells;
        assert_eq!(cells.len(), 3);
        for c in &cells[1..] {
            assert_eq!(c.user, cells[0].user);
            assert_eq!(c.global, cells[0].global);
        }
        // With one user the pure test is the whole test split.
        assert_eq!(cells[0].user, cells[0].global);
        assert_eq!(cells[0].global.total, p.corpus.test.len() as u64);
    }

    #[test]
    fn every_cell_is_populated() {
        let (p, c) = small();
        let run = run_grid(&p, &c).unwrap();
        assert!(run.failure.is_none());
        assert_eq!(run.trials.len(), 4);
        for t in &run.trials {
            for s in Strategy::ALL {
                for scope in Scope::ALL {
                    let cell = t.cell(s, scope, UserWeighting::Uniform);
                    let a = cell.accuracy.unwrap();
                    assert!((0.0..=1.0).contains(&a));
                }
            }
        }
    }

    #[test]
    fn trial_seeds_do_not_depend_on_other_cells() {
        assert_eq!(trial_seed(7, 2, 0), trial_seed(7, 2, 0));
        assert_ne!(trial_seed(7, 2, 0), trial_seed(7, 3, 0));
        assert_ne!(trial_seed(7, 2, 0), trial_seed(7, 2, 1));
    }

    #[test]
    fn weighting_modes() {
        let s = |c, t| EvalSummary::new(c, t);
        let user = |u, pure| UserResult {
            user: u,
            owned_words: 0,
            sizes: ShardSizes::default(),
            train_log: TrainLog {
                batches: 0,
                best_batch: 0,
                best_dev_accuracy: 0.0,
                final_lr: 0.0,
                evaluations: 0,
                stop: crate::neural::StopReason::Patience,
            },
            cells: vec![StrategyCells {
                strategy: Strategy::Single,
                user: pure,
                global: s(1, 2),
            }],
        };
        let t = TrialResult {
            n_users: 3,
            trial: 0,
            seed: 0,
            users: vec![user(0, s(1, 1)), user(1, s(0, 3)), user(2, s(0, 0))],
        };
        let uni = t.cell(Strategy::Single, Scope::User, UserWeighting::Uniform);
        assert_eq!(uni.accuracy, Some(0.5));
        assert_eq!(uni.empty_users, 1);
        let pooled = t.cell(Strategy::Single, Scope::User, UserWeighting::ByCount);
        assert_eq!(pooled.accuracy, Some(0.25));
        assert_eq!(pooled.counts, s(1, 4));
    }
}
