//! Per-user private sentiment classifier.
//!
//! Mean-pooled word embeddings feed a tanh hidden layer and a sigmoid
//! output. Training is minibatch Adam with dropout, learning-rate decay on
//! validation plateaus and early stopping that returns the best validation
//! snapshot.

use std::collections::BTreeMap;
use std::ops::{Add, AddAssign};

use ndarray::{Array1, Array2, Zip};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::text::{build_vocab_with, OovPolicy, Vocab};
use crate::treebank::{Polarity, Sentence};

pub const MODEL_MAGIC: &[u8; 8] = b"PBMODEL\0";
pub const ARTIFACT_VERSION: u32 = 1;

/// Where dropout masks are applied.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DropoutPlacement {
    /// Hidden activations only.
    #[default]
    Hidden,
    /// The pooled embedding only.
    Input,
    Both,
}

impl DropoutPlacement {
    fn input(self) -> bool {
        matches!(self, DropoutPlacement::Input | DropoutPlacement::Both)
    }

    fn hidden(self) -> bool {
        matches!(self, DropoutPlacement::Hidden | DropoutPlacement::Both)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    pub embedding_dim: usize,
    pub hidden: usize,
    pub dropout_keep: f64,
    pub dropout_placement: DropoutPlacement,
    pub lr0: f64,
    pub lr_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub batch_size: usize,
    pub eval_every_batches: usize,
    pub patience_batches: usize,
    pub max_batches: usize,
    /// Half-width of the uniform embedding initialization.
    pub embedding_init: f64,
    pub oov_policy: OovPolicy,
    pub seed: u64,
}

/// Binary train sentences in the standard treebank distribution.
pub const STANDARD_BINARY_TRAIN_SIZE: usize = 6920;

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            embedding_dim: 35,
            hidden: 50,
            dropout_keep: 0.5,
            dropout_placement: DropoutPlacement::Hidden,
            lr0: 0.001,
            lr_decay: 0.95,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            batch_size: 32,
            eval_every_batches: 100,
            patience_batches: Hyperparams::patience_for(STANDARD_BINARY_TRAIN_SIZE, 32),
            max_batches: 200_000,
            embedding_init: 0.05,
            oov_policy: OovPolicy::Omit,
            seed: 0,
        }
    }
}

impl Hyperparams {
    /// Batches equivalent to five epochs over a train set of `global_train`
    /// sentences.
    pub fn patience_for(global_train: usize, batch_size: usize) -> usize {
        (5 * global_train).div_ceil(batch_size.max(1))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if !(self.lr_decay > 0.0 && self.lr_decay < 1.0) {
            return bad(format!("lr_decay must lie in (0,1), got {}", self.lr_decay));
        }
        if !(self.dropout_keep > 0.0 && self.dropout_keep <= 1.0) {
            return bad(format!("dropout_keep must lie in (0,1], got {}", self.dropout_keep));
        }
        if self.embedding_dim == 0 || self.hidden == 0 {
            return bad("embedding_dim and hidden must be positive".into());
        }
        if self.batch_size == 0 || self.eval_every_batches == 0 {
            return bad("batch_size and eval_every_batches must be positive".into());
        }
        if !(self.lr0 > 0.0 && self.lr0.is_finite()) {
            return bad(format!("lr0 must be positive, got {}", self.lr0));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || self.epsilon <= 0.0 {
            return bad("Adam betas must lie in [0,1) and epsilon be positive".into());
        }
        Ok(())
    }
}

/// Dense parameter tensors of the network. Also used for Adam moments.
#[derive(Debug, Clone, PartialEq)]
pub struct Weights {
    /// vocab_size x embedding_dim
    pub embeddings: Array2<f64>,
    /// embedding_dim x hidden
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array1<f64>,
    pub b2: f64,
}

impl Weights {
    pub fn zeros(vocab_size: usize, dim: usize, hidden: usize) -> Self {
        Weights {
            embeddings: Array2::zeros((vocab_size, dim)),
            w1: Array2::zeros((dim, hidden)),
            b1: Array1::zeros(hidden),
            w2: Array1::zeros(hidden),
            b2: 0.0,
        }
    }

    fn zeros_like(&self) -> Self {
        Weights::zeros(self.embeddings.nrows(), self.w1.nrows(), self.w1.ncols())
    }

    pub fn same_shape(&self, other: &Weights) -> bool {
        self.embeddings.dim() == other.embeddings.dim()
            && self.w1.dim() == other.w1.dim()
            && self.b1.len() == other.b1.len()
            && self.w2.len() == other.w2.len()
    }

    pub fn all_finite(&self) -> bool {
        self.embeddings.iter().all(|x| x.is_finite())
            && self.w1.iter().all(|x| x.is_finite())
            && self.b1.iter().all(|x| x.is_finite())
            && self.w2.iter().all(|x| x.is_finite())
            && self.b2.is_finite()
    }
}

/// A trained (or freshly initialized) private model together with the
/// vocabulary of the shard it was built from.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub weights: Weights,
    pub vocab: Vocab,
    pub hyper: Hyperparams,
}

fn glorot(rng: &mut Rng, fan_in: usize, fan_out: usize) -> impl FnMut() -> f64 + '_ {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    move || rng.uniform_in(-limit, limit)
}

impl ModelParams {
    /// Random initialization: embeddings uniform in `+-embedding_init`,
    /// weight matrices Glorot-uniform, biases zero.
    pub fn init(vocab: Vocab, hyper: &Hyperparams, rng: &mut Rng) -> Self {
        let (v, d, h) = (vocab.len(), hyper.embedding_dim, hyper.hidden);
        let e = hyper.embedding_init;
        let embeddings = Array2::from_shape_simple_fn((v, d), || rng.uniform_in(-e, e));
        let w1 = Array2::from_shape_simple_fn((d, h), glorot(rng, d, h));
        let w2 = Array1::from_shape_simple_fn(h, glorot(rng, h, 1));
        ModelParams {
            weights: Weights {
                embeddings,
                w1,
                b1: Array1::zeros(h),
                w2,
                b2: 0.0,
            },
            vocab,
            hyper: hyper.clone(),
        }
    }

    pub fn zeros(vocab: Vocab, hyper: &Hyperparams) -> Self {
        let weights = Weights::zeros(vocab.len(), hyper.embedding_dim, hyper.hidden);
        ModelParams {
            weights,
            vocab,
            hyper: hyper.clone(),
        }
    }

    pub fn encode<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<usize> {
        self.vocab.encode(tokens)
    }

    /// Inference-mode probability of the positive class for raw tokens.
    pub fn predict<S: AsRef<str>>(&self, tokens: &[S]) -> f64 {
        forward(self, &self.encode(tokens), Mode::Infer).expect("own vocabulary indices are in range")
    }

    pub fn parameter_count(&self) -> usize {
        let w = &self.weights;
        w.embeddings.len() + w.w1.len() + w.b1.len() + w.w2.len() + 1
    }

    /// Versioned binary artifact; see [`ArtifactHeader`] for the layout.
    pub fn to_artifact(&self) -> Result<Vec<u8>> {
        if !self.weights.all_finite() {
            return Err(Error::Artifact("refusing to serialize non-finite parameters".into()));
        }
        let w = &self.weights;
        let header = ArtifactHeader {
            hyper: self.hyper.clone(),
            vocab: self.vocab.clone(),
            vocab_size: w.embeddings.nrows(),
            embedding_dim: w.w1.nrows(),
            hidden: w.w1.ncols(),
        };
        let header = serde_json::to_vec(&header)?;
        let floats = self.parameter_count();
        let mut out = Vec::with_capacity(MODEL_MAGIC.len() + 12 + header.len() + 8 * floats);
        out.extend_from_slice(MODEL_MAGIC);
        out.extend_from_slice(&ARTIFACT_VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        let values = w
            .embeddings
            .iter()
            .chain(w.w1.iter())
            .chain(w.b1.iter())
            .chain(w.w2.iter())
            .chain(std::iter::once(&w.b2));
        for x in values {
            out.extend_from_slice(&x.to_le_bytes());
        }
        Ok(out)
    }

    pub fn from_artifact(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes);
        if r.take(MODEL_MAGIC.len())? != MODEL_MAGIC {
            return Err(Error::Artifact("not a model artifact".into()));
        }
        let version = r.u32()?;
        if version != ARTIFACT_VERSION {
            return Err(Error::Artifact(format!("unsupported artifact version {version}")));
        }
        let header_len = r.len_prefix()?;
        let header: ArtifactHeader = serde_json::from_slice(r.take(header_len)?)?;
        let (v, d, h) = (header.vocab_size, header.embedding_dim, header.hidden);
        if header.vocab.len() != v {
            return Err(Error::Artifact("vocabulary size disagrees with embedding rows".into()));
        }
        if header.hyper.embedding_dim != d || header.hyper.hidden != h {
            return Err(Error::Artifact("hyperparameters disagree with array shapes".into()));
        }
        let embeddings = Array2::from_shape_vec((v, d), r.f64s(v * d)?).expect("length checked");
        let w1 = Array2::from_shape_vec((d, h), r.f64s(d * h)?).expect("length checked");
        let b1 = Array1::from(r.f64s(h)?);
        let w2 = Array1::from(r.f64s(h)?);
        let b2 = r.f64s(1)?[0];
        r.finish()?;
        Ok(ModelParams {
            weights: Weights {
                embeddings,
                w1,
                b1,
                w2,
                b2,
            },
            vocab: header.vocab,
            hyper: header.hyper,
        })
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_artifact()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        ModelParams::from_artifact(&bytes)
    }
}

/// JSON header of a model artifact. The full layout, integers
/// little-endian:
///
/// ```text
/// magic        8 bytes  "PBMODEL\0"
/// version      u32
/// header_len   u64
/// header       header_len bytes of JSON (this struct)
/// parameters   f64 values: embeddings (row-major), w1 (row-major), b1, w2, b2
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactHeader {
    pub hyper: Hyperparams,
    pub vocab: Vocab,
    pub vocab_size: usize,
    pub embedding_dim: usize,
    pub hidden: usize,
}

pub(crate) struct ByteReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    pub(crate) fn new(bytes: &'a [u8]) -> Self {
        ByteReader { bytes, pos: 0 }
    }

    pub(crate) fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Artifact("truncated artifact".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    pub(crate) fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    pub(crate) fn len_prefix(&mut self) -> Result<usize> {
        let n = u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes"));
        usize::try_from(n).map_err(|_| Error::Artifact("length prefix too large".into()))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let len = n.checked_mul(8).ok_or_else(|| Error::Artifact("array too large".into()))?;
        Ok(self
            .take(len)?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }

    pub(crate) fn finish(&self) -> Result<()> {
        if self.pos == self.bytes.len() {
            Ok(())
        } else {
            Err(Error::Artifact("trailing bytes after artifact".into()))
        }
    }
}

pub enum Mode<'a> {
    /// Dropout active, masks drawn from the generator.
    Train(&'a mut Rng),
    Infer,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Intermediate values of one forward pass, kept for backpropagation.
struct Trace {
    indices: Vec<usize>,
    /// Pooled embedding after input dropout.
    x: Array1<f64>,
    input_mask: Option<Array1<f64>>,
    /// tanh activations before hidden dropout.
    a: Array1<f64>,
    hidden_mask: Option<Array1<f64>>,
    a_drop: Array1<f64>,
    p: f64,
}

fn dropout_mask(rng: &mut Rng, n: usize, keep: f64) -> Array1<f64> {
    Array1::from_shape_simple_fn(n, || if rng.next_uniform() < keep { 1.0 / keep } else { 0.0 })
}

fn check_indices(params: &ModelParams, indices: &[usize]) -> Result<()> {
    let size = params.weights.embeddings.nrows();
    match indices.iter().find(|&&i| i >= size) {
        Some(&index) => Err(Error::IndexOutOfRange { index, size }),
        None => Ok(()),
    }
}

fn trace(params: &ModelParams, indices: &[usize], mode: Mode<'_>) -> Result<Option<Trace>> {
    check_indices(params, indices)?;
    if indices.is_empty() {
        return Ok(None);
    }
    let w = &params.weights;
    let d = w.w1.nrows();
    // Summing in sorted order makes the pooled vector exactly invariant to
    // token order.
    let mut sorted = indices.to_vec();
    sorted.sort_unstable();
    let mut x = Array1::<f64>::zeros(d);
    for &i in &sorted {
        x += &w.embeddings.row(i);
    }
    x /= sorted.len() as f64;

    let (keep, placement) = (params.hyper.dropout_keep, params.hyper.dropout_placement);
    let (input_mask, hidden_mask_rng) = match mode {
        Mode::Train(rng) if keep < 1.0 => {
            let im = placement.input().then(|| dropout_mask(rng, d, keep));
            (im, Some(rng))
        }
        _ => (None, None),
    };
    if let Some(m) = &input_mask {
        x *= m;
    }
    let z1 = w.w1.t().dot(&x) + &w.b1;
    let a = z1.mapv(f64::tanh);
    let hidden_mask = match hidden_mask_rng {
        Some(rng) if placement.hidden() => Some(dropout_mask(rng, a.len(), keep)),
        _ => None,
    };
    let a_drop = match &hidden_mask {
        Some(m) => &a * m,
        None => a.clone(),
    };
    let p = sigmoid(w.w2.dot(&a_drop) + w.b2);
    Ok(Some(Trace {
        indices: sorted,
        x,
        input_mask,
        a,
        hidden_mask,
        a_drop,
        p,
    }))
}

/// Probability of the positive class. An empty index list yields exactly
/// 0.5.
pub fn forward(params: &ModelParams, indices: &[usize], mode: Mode<'_>) -> Result<f64> {
    Ok(trace(params, indices, mode)?.map_or(0.5, |t| t.p))
}

/// Gradient of binary cross-entropy. Embedding gradients are kept only for
/// rows that received signal; every other row is implicitly zero.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub embedding_rows: BTreeMap<usize, Array1<f64>>,
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array1<f64>,
    pub b2: f64,
}

impl Gradients {
    pub fn zeros_for(params: &ModelParams) -> Self {
        let w = &params.weights;
        Gradients {
            embedding_rows: BTreeMap::new(),
            w1: Array2::zeros(w.w1.dim()),
            b1: Array1::zeros(w.b1.len()),
            w2: Array1::zeros(w.w2.len()),
            b2: 0.0,
        }
    }

    pub fn embedding_row(&self, index: usize) -> Option<&Array1<f64>> {
        self.embedding_rows.get(&index)
    }

    fn scale(&mut self, s: f64) {
        self.embedding_rows.values_mut().for_each(|r| *r *= s);
        self.w1 *= s;
        self.b1 *= s;
        self.w2 *= s;
        self.b2 *= s;
    }
}

fn accumulate(params: &ModelParams, tr: &Trace, target: f64, out: &mut Gradients) {
    let w = &params.weights;
    let delta = tr.p - target;
    out.b2 += delta;
    out.w2.scaled_add(delta, &tr.a_drop);
    let mut da = &w.w2 * delta;
    if let Some(m) = &tr.hidden_mask {
        da *= m;
    }
    let dz1 = &da * &tr.a.mapv(|a| 1.0 - a * a);
    out.b1 += &dz1;
    for (r, &xr) in tr.x.iter().enumerate() {
        out.w1.row_mut(r).scaled_add(xr, &dz1);
    }
    let mut dx = w.w1.dot(&dz1);
    if let Some(m) = &tr.input_mask {
        dx *= m;
    }
    dx /= tr.indices.len() as f64;
    for &i in &tr.indices {
        out.embedding_rows
            .entry(i)
            .and_modify(|r| *r += &dx)
            .or_insert_with(|| dx.clone());
    }
}

/// Exact gradient of `BCE(forward_train(indices), target)`.
///
/// `target` is normally 0 or 1 but any value in `[0,1]` is accepted. Pass
/// `rng: None` to disable dropout.
pub fn grad(params: &ModelParams, indices: &[usize], target: f64, rng: Option<&mut Rng>) -> Result<Gradients> {
    let mode = match rng {
        Some(r) => Mode::Train(r),
        None => Mode::Infer,
    };
    let mut g = Gradients::zeros_for(params);
    if let Some(tr) = trace(params, indices, mode)? {
        accumulate(params, &tr, target, &mut g);
    }
    Ok(g)
}

/// Binary cross-entropy of one example in inference mode.
pub fn loss(params: &ModelParams, indices: &[usize], target: f64) -> Result<f64> {
    let p = forward(params, indices, Mode::Infer)?;
    Ok(-(target * p.ln() + (1.0 - target) * (1.0 - p).ln()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Weights,
    pub v: Weights,
    pub t: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamState {
    pub fn new(params: &ModelParams) -> Self {
        let h = &params.hyper;
        AdamState::with_betas(params, h.beta1, h.beta2, h.epsilon)
    }

    pub fn with_betas(params: &ModelParams, beta1: f64, beta2: f64, epsilon: f64) -> Self {
        AdamState {
            m: params.weights.zeros_like(),
            v: params.weights.zeros_like(),
            t: 0,
            beta1,
            beta2,
            epsilon,
        }
    }
}

struct AdamCoef {
    b1: f64,
    b2: f64,
    lr: f64,
    /// Reciprocals of the bias corrections.
    inv_c1: f64,
    inv_c2: f64,
    eps: f64,
}

impl AdamCoef {
    #[inline]
    fn update(&self, theta: &mut f64, m: &mut f64, v: &mut f64, g: f64) {
        *m = self.b1 * *m + (1.0 - self.b1) * g;
        *v = self.b2 * *v + (1.0 - self.b2) * g * g;
        let m_hat = *m * self.inv_c1;
        let v_hat = *v * self.inv_c2;
        *theta -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
    }
}

/// One bias-corrected Adam update over every parameter.
pub fn adam_step(params: &mut ModelParams, grads: &Gradients, state: &mut AdamState, lr: f64) -> Result<()> {
    let w = &mut params.weights;
    if !w.same_shape(&state.m) || !w.same_shape(&state.v) {
        return Err(Error::ShapeMismatch("Adam state does not match parameters".into()));
    }
    if grads.w1.dim() != w.w1.dim() || grads.b1.len() != w.b1.len() || grads.w2.len() != w.w2.len() {
        return Err(Error::ShapeMismatch("gradient does not match parameters".into()));
    }
    let (rows, dim) = w.embeddings.dim();
    for (&i, r) in &grads.embedding_rows {
        if i >= rows || r.len() != dim {
            return Err(Error::ShapeMismatch(format!("embedding gradient row {i} does not fit")));
        }
    }

    state.t += 1;
    let t = state.t as i32;
    let c = AdamCoef {
        b1: state.beta1,
        b2: state.beta2,
        lr,
        inv_c1: 1.0 / (1.0 - state.beta1.powi(t)),
        inv_c2: 1.0 / (1.0 - state.beta2.powi(t)),
        eps: state.epsilon,
    };

    for (i, mut row) in w.embeddings.rows_mut().into_iter().enumerate() {
        let mut m = state.m.embeddings.row_mut(i);
        let mut v = state.v.embeddings.row_mut(i);
        match grads.embedding_rows.get(&i) {
            Some(g) => Zip::from(&mut row)
                .and(&mut m)
                .and(&mut v)
                .and(g)
                .for_each(|th, m, v, &g| c.update(th, m, v, g)),
            None => Zip::from(&mut row)
                .and(&mut m)
                .and(&mut v)
                .for_each(|th, m, v| c.update(th, m, v, 0.0)),
        }
    }
    Zip::from(&mut w.w1)
        .and(&mut state.m.w1)
        .and(&mut state.v.w1)
        .and(&grads.w1)
        .for_each(|th, m, v, &g| c.update(th, m, v, g));
    Zip::from(&mut w.b1)
        .and(&mut state.m.b1)
        .and(&mut state.v.b1)
        .and(&grads.b1)
        .for_each(|th, m, v, &g| c.update(th, m, v, g));
    Zip::from(&mut w.w2)
        .and(&mut state.m.w2)
        .and(&mut state.v.w2)
        .and(&grads.w2)
        .for_each(|th, m, v, &g| c.update(th, m, v, g));
    c.update(&mut w.b2, &mut state.m.b2, &mut state.v.b2, grads.b2);
    Ok(())
}

/// Correct predictions over a sentence set.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EvalSummary {
    pub correct: u64,
    pub total: u64,
}

impl EvalSummary {
    pub fn new(correct: u64, total: u64) -> Self {
        debug_assert!(correct <= total);
        EvalSummary { correct, total }
    }

    /// `None` when nothing was evaluated.
    pub fn accuracy(&self) -> Option<f64> {
        (self.total > 0).then(|| self.correct as f64 / self.total as f64)
    }
}

impl Add for EvalSummary {
    type Output = EvalSummary;

    fn add(self, rhs: Self) -> Self {
        EvalSummary {
            correct: self.correct + rhs.correct,
            total: self.total + rhs.total,
        }
    }
}

impl AddAssign for EvalSummary {
    fn add_assign(&mut self, rhs: Self) {
        *self = *self + rhs;
    }
}

impl std::iter::Sum for EvalSummary {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(EvalSummary::default(), Add::add)
    }
}

/// Decision rule shared by every predictor: `p >= 0.5` is positive.
pub fn decide(p: f64) -> Polarity {
    if p >= 0.5 {
        Polarity::Positive
    } else {
        Polarity::Negative
    }
}

/// Score any probability function against labeled sentences.
pub fn evaluate_with<F: Fn(&Sentence) -> f64>(sentences: &[Sentence], predict: F) -> EvalSummary {
    let correct = sentences.iter().filter(|s| decide(predict(s)) == s.label).count();
    EvalSummary::new(correct as u64, sentences.len() as u64)
}

pub fn evaluate(params: &ModelParams, sentences: &[Sentence]) -> EvalSummary {
    evaluate_with(sentences, |s| params.predict(&s.tokens))
}

fn evaluate_encoded(params: &ModelParams, examples: &[(Vec<usize>, Polarity)]) -> Result<u64> {
    let mut correct = 0;
    for (idx, label) in examples {
        if decide(forward(params, idx, Mode::Infer)?) == *label {
            correct += 1;
        }
    }
    Ok(correct)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Patience,
    MaxBatches,
}

/// What happened during one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub batches: usize,
    pub best_batch: usize,
    pub best_dev_accuracy: f64,
    pub final_lr: f64,
    pub evaluations: usize,
    pub stop: StopReason,
}

/// Train a fresh model on `shard.train`, selecting on `shard.dev`, seeded by
/// `hyper.seed`.
pub fn train(shard: &crate::partition::UserShard, hyper: &Hyperparams) -> Result<ModelParams> {
    let mut rng = Rng::seed_from_u64(hyper.seed);
    train_on(&shard.train, &shard.dev, hyper, &mut rng).map(|(p, _)| p)
}

/// Training loop over explicit train and validation sets.
///
/// Every `eval_every_batches` batches the validation accuracy is measured.
/// Without improvement over the best so far, the learning rate is multiplied
/// by `lr_decay`; once `patience_batches` batches have passed since the best
/// snapshot, training stops and that snapshot is returned. The snapshot
/// before any update is the initial candidate.
pub fn train_on(
    train: &[Sentence],
    dev: &[Sentence],
    hyper: &Hyperparams,
    rng: &mut Rng,
) -> Result<(ModelParams, TrainLog)> {
    if train.is_empty() {
        return Err(Error::EmptyInput("training shard is empty"));
    }
    if dev.is_empty() {
        return Err(Error::EmptyInput("validation shard is empty"));
    }
    hyper.validate()?;

    let vocab = build_vocab_with(train, hyper.oov_policy)?;
    let mut params = ModelParams::init(vocab, hyper, &mut rng.split("init"));
    let mut shuffle_rng = rng.split("shuffle");
    let mut dropout_rng = rng.split("dropout");

    let examples: Vec<(Vec<usize>, f64)> = train
        .iter()
        .map(|s| (params.encode(&s.tokens), s.label.target()))
        .collect();
    let dev_examples: Vec<(Vec<usize>, Polarity)> = dev.iter().map(|s| (params.encode(&s.tokens), s.label)).collect();

    let mut adam = AdamState::new(&params);
    let mut lr = hyper.lr0;
    let mut best_correct = evaluate_encoded(&params, &dev_examples)?;
    let mut best = params.clone();
    let mut best_batch = 0;
    let mut evaluations = 1;
    let mut batches = 0;
    let mut order: Vec<usize> = (0..examples.len()).collect();

    let stop = 'training: {
        if hyper.patience_batches == 0 {
            break 'training StopReason::Patience;
        }
        loop {
            shuffle_rng.shuffle(&mut order);
            for chunk in order.chunks(hyper.batch_size) {
                let mut g = Gradients::zeros_for(&params);
                for &i in chunk {
                    let (idx, target) = &examples[i];
                    if let Some(tr) = trace(&params, idx, Mode::Train(&mut dropout_rng))? {
                        accumulate(&params, &tr, *target, &mut g);
                    }
                }
                g.scale(1.0 / chunk.len() as f64);
                adam_step(&mut params, &g, &mut adam, lr)?;
                batches += 1;

                if batches % hyper.eval_every_batches == 0 {
                    evaluations += 1;
                    let correct = evaluate_encoded(&params, &dev_examples)?;
                    if correct > best_correct {
                        best_correct = correct;
                        best = params.clone();
                        best_batch = batches;
                    } else {
                        lr *= hyper.lr_decay;
                    }
                    if batches - best_batch >= hyper.patience_batches {
                        break 'training StopReason::Patience;
                    }
                }
                if batches >= hyper.max_batches {
                    break 'training StopReason::MaxBatches;
                }
            }
        }
    };

    if !best.weights.all_finite() {
        return Err(Error::Degenerate("training produced non-finite parameters".into()));
    }
    let log = TrainLog {
        batches,
        best_batch,
        best_dev_accuracy: best_correct as f64 / dev.len() as f64,
        final_lr: lr,
        evaluations,
        stop,
    };
    Ok((best, log))
}
