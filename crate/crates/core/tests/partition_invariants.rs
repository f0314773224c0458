use std::collections::HashMap;

use personabench_core::partition::{assign_sentences, assign_words, PureTestRule, WordPartition};
use personabench_core::polarity::PolarLexicon;
use personabench_core::synth::{synthetic_corpus, SynthConfig};
use personabench_core::{Rng, Split};

fn lexicon() -> PolarLexicon {
    PolarLexicon::new(
        (0..20).map(|i| format!("good{i}")).collect(),
        (0..20).map(|i| format!("bad{i}")).collect(),
    )
    .unwrap()
}

#[test]
fn shards_partition_every_split_and_pure_tests_are_clean() {
    let corpus = synthetic_corpus(&SynthConfig {
        polar_words: 30,
        ..SynthConfig::default()
    });
    let lex = lexicon();
    for seed in 0..50u64 {
        for n in [1, 2, 5, 8] {
            let rng = Rng::seed_from_u64(seed);
            let own = assign_words(&lex, n, WordPartition::Iid, &mut rng.split("w")).unwrap();
            let shards = assign_sentences(&corpus, &own, PureTestRule::NoForeign, &mut rng.split("s"));
            assert_eq!(shards.len(), n);
            for split in Split::ALL {
                let mut seen: HashMap<usize, usize> = HashMap::new();
                for sh in &shards {
                    for s in sh.split(split) {
                        *seen.entry(s.id).or_default() += 1;
                    }
                }
                let all = corpus.split(split);
                assert_eq!(seen.len(), all.len(), "seed {seed} n {n} {split:?}");
                assert!(seen.values().all(|&c| c == 1));
                let mut union: Vec<_> = shards.iter().flat_map(|sh| sh.split(split).iter().cloned()).collect();
                let mut whole = all.to_vec();
                union.sort_by_key(|s| s.id);
                whole.sort_by_key(|s| s.id);
                assert_eq!(union, whole);
            }
            for sh in &shards {
                for s in &sh.pure_test {
                    assert!(own.owners_in(&s.tokens).iter().all(|&u| u == sh.user));
                }
            }
        }
    }
}
