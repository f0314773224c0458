//! Simulated privacy-preserving evaluation.
//!
//! Each [`UserNode`] keeps its shard private. Other parties interact with a
//! node only by sending an [`EvaluateRequest`] holding serialized model
//! bytes and receiving an [`EvaluateResponse`] holding `(correct, total)`.
//! Global accuracy is the micro-average of those counts, which equals a
//! centralized evaluation whenever the node shards partition the data.
//!
//! Sharing weights can itself leak information about a user; this module
//! does not try to prevent that.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::ensemble::{Ensemble, ENSEMBLE_MAGIC};
use crate::error::{Error, Result};
use crate::neural::{self, EvalSummary, Hyperparams, ModelParams, TrainLog, MODEL_MAGIC};
use crate::partition::UserShard;
use crate::rng::Rng;
use crate::treebank::Sentence;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalSplit {
    Dev,
    Test,
    PureTest,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvaluateRequest {
    pub request_id: u64,
    pub split: EvalSplit,
    /// A model or ensemble artifact.
    pub model: Vec<u8>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvaluateResponse {
    pub request_id: u64,
    pub correct: u64,
    pub total: u64,
}

impl EvaluateResponse {
    pub fn summary(&self) -> EvalSummary {
        EvalSummary::new(self.correct, self.total)
    }
}

/// Anything a node can be asked to evaluate.
#[derive(Debug, Clone, PartialEq)]
pub enum Predictor {
    Single(ModelParams),
    Ensemble(Ensemble),
}

impl Predictor {
    pub fn to_artifact(&self) -> Result<Vec<u8>> {
        match self {
            Predictor::Single(m) => m.to_artifact(),
            Predictor::Ensemble(e) => e.to_artifact(),
        }
    }

    pub fn from_artifact(bytes: &[u8]) -> Result<Self> {
        match bytes.get(..8) {
            Some(m) if m == MODEL_MAGIC => ModelParams::from_artifact(bytes).map(Predictor::Single),
            Some(m) if m == ENSEMBLE_MAGIC => Ensemble::from_artifact(bytes).map(Predictor::Ensemble),
            _ => Err(Error::Artifact("unrecognized artifact".into())),
        }
    }

    pub fn evaluate(&self, sentences: &[Sentence]) -> EvalSummary {
        match self {
            Predictor::Single(m) => neural::evaluate(m, sentences),
            Predictor::Ensemble(e) => e.evaluate(sentences),
        }
    }
}

/// Sizes of a node's private splits. Counts only.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShardSizes {
    pub train: usize,
    pub dev: usize,
    pub test: usize,
    pub pure_test: usize,
}

/// One simulated user. Its shard never leaves the node.
#[derive(Debug)]
pub struct UserNode {
    user: usize,
    shard: Option<UserShard>,
    model: Option<ModelParams>,
}

impl UserNode {
    /// A node with no data yet; requests fail until a shard is loaded.
    pub fn new(user: usize) -> Self {
        UserNode {
            user,
            shard: None,
            model: None,
        }
    }

    pub fn with_shard(shard: UserShard) -> Self {
        UserNode {
            user: shard.user,
            shard: Some(shard),
            model: None,
        }
    }

    pub fn load_shard(&mut self, shard: UserShard) {
        self.user = shard.user;
        self.shard = Some(shard);
        self.model = None;
    }

    pub fn user(&self) -> usize {
        self.user
    }

    fn shard(&self) -> Result<&UserShard> {
        self.shard.as_ref().ok_or(Error::UninitializedNode(self.user))
    }

    pub fn sizes(&self) -> Result<ShardSizes> {
        let s = self.shard()?;
        Ok(ShardSizes {
            train: s.train.len(),
            dev: s.dev.len(),
            test: s.test.len(),
            pure_test: s.pure_test.len(),
        })
    }

    /// Train this node's private model on its own shard only.
    pub fn train_local(&mut self, hyper: &Hyperparams) -> Result<TrainLog> {
        let shard = self.shard()?;
        let mut rng = Rng::seed_from_u64(hyper.seed);
        let (model, log) = neural::train_on(&shard.train, &shard.dev, hyper, &mut rng)?;
        self.model = Some(model);
        Ok(log)
    }

    pub fn install_model(&mut self, model: ModelParams) {
        self.model = Some(model);
    }

    pub fn local_model(&self) -> Option<&ModelParams> {
        self.model.as_ref()
    }

    /// Evaluate a foreign artifact on one private split and answer with
    /// counts only. The node is not modified.
    pub fn handle(&self, request: &EvaluateRequest) -> Result<EvaluateResponse> {
        let shard = self.shard()?;
        let predictor = Predictor::from_artifact(&request.model)?;
        let sentences = match request.split {
            EvalSplit::Dev => &shard.dev,
            EvalSplit::Test => &shard.test,
            EvalSplit::PureTest => &shard.pure_test,
        };
        let s = predictor.evaluate(sentences);
        Ok(EvaluateResponse {
            request_id: request.request_id,
            correct: s.correct,
            total: s.total,
        })
    }
}

/// Send `foreign` to `node` and return the node's summary.
pub fn node_evaluate(node: &UserNode, foreign: &ModelParams, split: EvalSplit) -> Result<EvalSummary> {
    let request = EvaluateRequest {
        request_id: 0,
        split,
        model: foreign.to_artifact()?,
    };
    node.handle(&request).map(|r| r.summary())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GlobalEvalReport {
    pub per_node: Vec<EvalSummary>,
    /// Sum of per-node counts.
    pub aggregate: EvalSummary,
}

impl GlobalEvalReport {
    pub fn from_summaries(per_node: Vec<EvalSummary>) -> Result<Self> {
        if per_node.is_empty() {
            return Err(Error::EmptyInput("global evaluation needs at least one node"));
        }
        let aggregate = per_node.iter().copied().sum();
        Ok(GlobalEvalReport { per_node, aggregate })
    }

    pub fn accuracy(&self) -> Option<f64> {
        self.aggregate.accuracy()
    }
}

/// Test-split accuracy of `model` over every node, micro-averaged.
pub fn global_accuracy(model: &ModelParams, nodes: &[UserNode]) -> Result<GlobalEvalReport> {
    if nodes.is_empty() {
        return Err(Error::EmptyInput("global evaluation needs at least one node"));
    }
    let bytes = model.to_artifact()?;
    let per_node = nodes
        .iter()
        .map(|n| {
            let req = EvaluateRequest {
                request_id: 0,
                split: EvalSplit::Test,
                model: bytes.clone(),
            };
            n.handle(&req).map(|r| r.summary())
        })
        .collect::<Result<Vec<_>>>()?;
    GlobalEvalReport::from_summaries(per_node)
}

/// A message that crossed a node boundary.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AuditEntry {
    Request {
        request_id: u64,
        node: usize,
        split: EvalSplit,
        artifact_bytes: usize,
    },
    Response {
        request_id: u64,
        node: usize,
        correct: u64,
        total: u64,
    },
}

/// A set of nodes plus a log of every message exchanged with them.
#[derive(Debug)]
pub struct Federation {
    nodes: Vec<UserNode>,
    next_id: AtomicU64,
    log: Mutex<Vec<AuditEntry>>,
}

impl Federation {
    pub fn new(nodes: Vec<UserNode>) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::EmptyInput("federation needs at least one node"));
        }
        Ok(Federation {
            nodes,
            next_id: AtomicU64::new(1),
            log: Mutex::new(Vec::new()),
        })
    }

    pub fn from_shards(shards: Vec<UserShard>) -> Result<Self> {
        Federation::new(shards.into_iter().map(UserNode::with_shard).collect())
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[UserNode] {
        &self.nodes
    }

    pub fn nodes_mut(&mut self) -> &mut [UserNode] {
        &mut self.nodes
    }

    /// Ask one node to evaluate an artifact.
    pub fn evaluate(&self, node: usize, artifact: &[u8], split: EvalSplit) -> Result<EvalSummary> {
        let target = self
            .nodes
            .get(node)
            .ok_or_else(|| Error::InvalidArgument(format!("no node {node}")))?;
        let request = EvaluateRequest {
            request_id: self.next_id.fetch_add(1, Ordering::Relaxed),
            split,
            model: artifact.to_vec(),
        };
        self.record(AuditEntry::Request {
            request_id: request.request_id,
            node,
            split,
            artifact_bytes: request.model.len(),
        });
        let response = target.handle(&request)?;
        if response.request_id != request.request_id {
            return Err(Error::Artifact("response does not match request".into()));
        }
        self.record(AuditEntry::Response {
            request_id: response.request_id,
            node,
            correct: response.correct,
            total: response.total,
        });
        Ok(response.summary())
    }

    /// Ask every node to evaluate an artifact and aggregate the counts.
    pub fn global(&self, artifact: &[u8], split: EvalSplit) -> Result<GlobalEvalReport> {
        let per_node = (0..self.nodes.len())
            .map(|i| self.evaluate(i, artifact, split))
            .collect::<Result<Vec<_>>>()?;
        GlobalEvalReport::from_summaries(per_node)
    }

    pub fn audit_log(&self) -> Vec<AuditEntry> {
        self.log.lock().expect("audit log poisoned").clone()
    }

    fn record(&self, entry: AuditEntry) {
        self.log.lock().expect("audit log poisoned").push(entry);
    }
}
