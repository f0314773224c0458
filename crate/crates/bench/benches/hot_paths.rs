use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use personabench_bench::{corpus, lexicon, model};
use personabench_core::ensemble::{Combine, Ensemble};
use personabench_core::neural::{adam_step, evaluate, forward, grad, AdamState, Mode};
use personabench_core::partition::{assign_sentences, assign_words, PureTestRule, WordPartition};
use personabench_core::synth::random_tree;
use personabench_core::treebank::parse_trees;
use personabench_core::Rng;

fn network(c: &mut Criterion) {
    let corpus = corpus();
    let m = model(&corpus);
    let idx = m.encode(&corpus.train[0].tokens);
    c.bench_function("forward", |b| b.iter(|| forward(&m, black_box(&idx), Mode::Infer).unwrap()));
    c.bench_function("grad with dropout", |b| {
        let mut rng = Rng::seed_from_u64(1);
        b.iter(|| grad(&m, black_box(&idx), 1.0, Some(&mut rng)).unwrap())
    });
    c.bench_function("adam step", |b| {
        let g = grad(&m, &idx, 1.0, None).unwrap();
        let mut p = m.clone();
        let mut state = AdamState::new(&p);
        b.iter(|| adam_step(&mut p, black_box(&g), &mut state, 1e-3).unwrap())
    });
    c.bench_function("evaluate test split", |b| b.iter(|| evaluate(&m, black_box(&corpus.test))));
    let e = Ensemble::new(vec![m.clone(); 8], Combine::Confidence).unwrap();
    c.bench_function("8-member ensemble on test split", |b| b.iter(|| e.evaluate(black_box(&corpus.test))));
}

fn parsing(c: &mut Criterion) {
    let mut rng = Rng::seed_from_u64(2);
    let text: String = (0..1000).map(|_| format!("{}\n", random_tree(&mut rng, 6))).collect();
    c.bench_function("parse 1000 trees", |b| b.iter(|| parse_trees(black_box(&text)).unwrap()));
}

fn partitioning(c: &mut Criterion) {
    let corpus = corpus();
    let lex = lexicon(200);
    c.bench_function("partition 8 users", |b| {
        b.iter(|| {
            let rng = Rng::seed_from_u64(3);
            let own = assign_words(&lex, 8, WordPartition::Iid, &mut rng.split("w")).unwrap();
            assign_sentences(black_box(&corpus), &own, PureTestRule::NoForeign, &mut rng.split("s"))
        })
    });
}

criterion_group!(benches, network, parsing, partitioning);
criterion_main!(benches);
