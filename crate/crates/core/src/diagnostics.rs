//! Self-checks: analytic gradients against finite differences, and
//! node-side evaluation against centralized evaluation.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::fedeval::{EvalSplit, Federation};
use crate::neural::{self, grad, loss, Hyperparams, ModelParams};
use crate::partition::UserShard;
use crate::rng::Rng;
use crate::synth::{synthetic_corpus, SynthConfig};
use crate::text::Vocab;
use crate::treebank::{Polarity, Sentence};

pub const FD_STEP: f64 = 1e-5;

/// `|a - n| / max(|a|, |n|, floor)`.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

pub const REL_ERROR_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradCheck {
    pub configs: usize,
    pub parameters: usize,
    pub max_rel_error: f64,
}

/// A random model with dropout disabled, plus a random input and label.
fn random_case(rng: &mut Rng) -> (ModelParams, Vec<usize>, f64) {
    let v = 2 + rng.index(12);
    let words: Vec<Sentence> = vec![Sentence {
        id: 0,
        tokens: (0..v).map(|i| format!("t{i}")).collect(),
        label: Polarity::Positive,
    }];
    let vocab: Vocab = crate::text::build_vocab(&words).expect("nonempty");
    let hyper = Hyperparams {
        embedding_dim: 1 + rng.index(8),
        hidden: 1 + rng.index(8),
        dropout_keep: 1.0,
        embedding_init: 0.2 + rng.next_uniform(),
        ..Hyperparams::default()
    };
    let mut params = ModelParams::init(vocab, &hyper, rng);
    params.weights.b1.mapv_inplace(|_| rng.uniform_in(-0.5, 0.5));
    params.weights.b2 = rng.uniform_in(-0.5, 0.5);
    let len = 1 + rng.index(6);
    let indices = (0..len).map(|_| rng.index(v)).collect();
    let target = if rng.next_uniform() < 0.5 { 0.0 } else { 1.0 };
    (params, indices, target)
}

fn central<F: FnMut(&mut ModelParams, f64)>(params: &ModelParams, indices: &[usize], target: f64, mut nudge: F) -> Result<f64> {
    let mut p = params.clone();
    nudge(&mut p, FD_STEP);
    let up = loss(&p, indices, target)?;
    let mut p = params.clone();
    nudge(&mut p, -FD_STEP);
    let down = loss(&p, indices, target)?;
    Ok((up - down) / (2.0 * FD_STEP))
}

/// Compare every analytic partial derivative with a central difference over
/// `configs` random cases.
pub fn gradient_check(configs: usize, seed: u64) -> Result<GradCheck> {
    let mut rng = Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    let mut parameters = 0;
    for _ in 0..configs {
        let (params, idx, target) = random_case(&mut rng);
        let g = grad(&params, &idx, target, None)?;
        let mut check = |a: f64, n: f64| {
            worst = worst.max(relative_error(a, n, REL_ERROR_FLOOR));
            parameters += 1;
        };
        let w = &params.weights;
        for ((r, c), _) in w.embeddings.indexed_iter() {
            let a = g.embedding_row(r).map_or(0.0, |row| row[c]);
            check(a, central(&params, &idx, target, |p, h| p.weights.embeddings[(r, c)] += h)?);
        }
        for ((r, c), _) in w.w1.indexed_iter() {
            check(g.w1[(r, c)], central(&params, &idx, target, |p, h| p.weights.w1[(r, c)] += h)?);
        }
        for j in 0..w.b1.len() {
            check(g.b1[j], central(&params, &idx, target, |p, h| p.weights.b1[j] += h)?);
            check(g.w2[j], central(&params, &idx, target, |p, h| p.weights.w2[j] += h)?);
        }
        check(g.b2, central(&params, &idx, target, |p, h| p.weights.b2 += h)?);
    }
    Ok(GradCheck {
        configs,
        parameters,
        max_rel_error: worst,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FedCheck {
    pub cases: usize,
    pub mismatches: usize,
}

/// Shard a synthetic corpus of `sentences` test sentences randomly over 2 to
/// 8 nodes and compare aggregated node counts with evaluating the whole test
/// split centrally, `cases` times.
pub fn fedeval_check(cases: usize, sentences: usize, seed: u64) -> Result<FedCheck> {
    let corpus = synthetic_corpus(&SynthConfig {
        train: 200,
        dev: 20,
        test: sentences,
        neutral_fraction: 0.0,
        seed,
        ..SynthConfig::default()
    });
    let mut rng = Rng::seed_from_u64(seed);
    let vocab = crate::text::build_vocab(&corpus.train)?;
    let mut mismatches = 0;
    for _ in 0..cases {
        let hyper = Hyperparams {
            embedding_init: 1.0,
            ..Hyperparams::default()
        };
        let model = ModelParams::init(vocab.clone(), &hyper, &mut rng);
        let n = 2 + rng.index(7);
        let mut shards: Vec<UserShard> = (0..n)
            .map(|user| UserShard {
                user,
                train: Vec::new(),
                dev: Vec::new(),
                test: Vec::new(),
                pure_test: Vec::new(),
            })
            .collect();
        for s in &corpus.test {
            shards[rng.index(n)].test.push(s.clone());
        }
        let fed = Federation::from_shards(shards)?;
        let remote = fed.global(&model.to_artifact()?, EvalSplit::Test)?.aggregate;
        let central = neural::evaluate(&model, &corpus.test);
        if remote != central {
            mismatches += 1;
        }
    }
    Ok(FedCheck { cases, mismatches })
}
