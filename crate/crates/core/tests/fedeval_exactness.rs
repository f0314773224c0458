use personabench_core::diagnostics::fedeval_check;
use personabench_core::fedeval::{global_accuracy, EvalSplit, Federation, UserNode};
use personabench_core::neural::{evaluate, Hyperparams, ModelParams};
use personabench_core::partition::UserShard;
use personabench_core::synth::{synthetic_corpus, SynthConfig};
use personabench_core::text::build_vocab;
use personabench_core::Rng;

#[test]
fn summary_aggregation_equals_centralized_counts() {
    let r = fedeval_check(40, 500, 9).unwrap();
    assert_eq!(r.mismatches, 0);
}

#[test]
fn free_function_and_federation_agree() {
    let corpus = synthetic_corpus(&SynthConfig::default());
    let model = ModelParams::init(
        build_vocab(&corpus.train).unwrap(),
        &Hyperparams::default(),
        &mut Rng::seed_from_u64(1),
    );
    let shards: Vec<UserShard> = corpus
        .test
        .chunks(17)
        .enumerate()
        .map(|(user, c)| UserShard {
            user,
            train: vec![],
            dev: vec![],
            test: c.to_vec(),
            pure_test: vec![],
        })
        .collect();
    let nodes: Vec<UserNode> = shards.iter().cloned().map(UserNode::with_shard).collect();
    let direct = global_accuracy(&model, &nodes).unwrap();
    let fed = Federation::from_shards(shards).unwrap();
    let via = fed.global(&model.to_artifact().unwrap(), EvalSplit::Test).unwrap();
    assert_eq!(direct, via);
    assert_eq!(direct.aggregate, evaluate(&model, &corpus.test));
    assert_eq!(fed.audit_log().len(), 2 * nodes.len());
}
