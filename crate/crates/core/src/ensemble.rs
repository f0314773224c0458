//! Inference-time combination of frozen per-user models.
//!
//! Each member encodes a sentence with its own private vocabulary, so no
//! index space is shared between users.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::neural::{evaluate_with, ByteReader, EvalSummary, ModelParams, ARTIFACT_VERSION};
use crate::treebank::Sentence;

pub const ENSEMBLE_MAGIC: &[u8; 8] = b"PBENSMB\0";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Combine {
    /// Mean of member probabilities.
    Average,
    /// Probability of the member farthest from 0.5.
    Confidence,
}

pub fn predict_average<S: AsRef<str>>(members: &[ModelParams], tokens: &[S]) -> Result<f64> {
    if members.is_empty() {
        return Err(Error::EmptyInput("ensemble has no members"));
    }
    Ok(average(members.iter().map(|m| m.predict(tokens))))
}

pub fn predict_confident<S: AsRef<str>>(members: &[ModelParams], tokens: &[S]) -> Result<f64> {
    if members.is_empty() {
        return Err(Error::EmptyInput("ensemble has no members"));
    }
    Ok(most_confident(members.iter().map(|m| m.predict(tokens))))
}

/// Arithmetic mean of member outputs, as a running mean so that identical
/// outputs average to exactly themselves.
pub fn average(outputs: impl Iterator<Item = f64>) -> f64 {
    outputs
        .enumerate()
        .fold(0.0, |mean, (k, p)| mean + (p - mean) / (k + 1) as f64)
}

/// The output with the largest `|p - 0.5|`; the earliest wins ties.
pub fn most_confident(outputs: impl Iterator<Item = f64>) -> f64 {
    let mut best: Option<f64> = None;
    for p in outputs {
        match best {
            Some(b) if (p - 0.5).abs() <= (b - 0.5).abs() => {}
            _ => best = Some(p),
        }
    }
    best.expect("at least one output")
}

/// A fixed set of members, in user order, and a combination rule.
#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    members: Vec<ModelParams>,
    combine: Combine,
}

impl Ensemble {
    pub fn new(members: Vec<ModelParams>, combine: Combine) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::EmptyInput("ensemble has no members"));
        }
        Ok(Ensemble { members, combine })
    }

    pub fn members(&self) -> &[ModelParams] {
        &self.members
    }

    pub fn combine(&self) -> Combine {
        self.combine
    }

    pub fn predict<S: AsRef<str>>(&self, tokens: &[S]) -> f64 {
        let outputs = self.members.iter().map(|m| m.predict(tokens));
        match self.combine {
            Combine::Average => average(outputs),
            Combine::Confidence => most_confident(outputs),
        }
    }

    pub fn evaluate(&self, sentences: &[Sentence]) -> EvalSummary {
        evaluate_with(sentences, |s| self.predict(&s.tokens))
    }
}

/// Ensemble artifact layout, integers little-endian:
///
/// ```text
/// magic     8 bytes  "PBENSMB\0"
/// version   u32
/// combine   u32      0 = average, 1 = confidence
/// members   u64 count, then per member: u64 length + model artifact bytes
/// ```
impl Ensemble {
    pub fn to_artifact(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        out.extend_from_slice(ENSEMBLE_MAGIC);
        out.extend_from_slice(&ARTIFACT_VERSION.to_le_bytes());
        let tag: u32 = match self.combine {
            Combine::Average => 0,
            Combine::Confidence => 1,
        };
        out.extend_from_slice(&tag.to_le_bytes());
        out.extend_from_slice(&(self.members.len() as u64).to_le_bytes());
        for m in &self.members {
            let bytes = m.to_artifact()?;
            out.extend_from_slice(&(bytes.len() as u64).to_le_bytes());
            out.extend_from_slice(&bytes);
        }
        Ok(out)
    }

    pub fn from_artifact(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes);
        if r.take(ENSEMBLE_MAGIC.len())? != ENSEMBLE_MAGIC {
            return Err(Error::Artifact("not an ensemble artifact".into()));
        }
        let version = r.u32()?;
        if version != ARTIFACT_VERSION {
            return Err(Error::Artifact(format!("unsupported artifact version {version}")));
        }
        let combine = match r.u32()? {
            0 => Combine::Average,
            1 => Combine::Confidence,
            other => return Err(Error::Artifact(format!("unknown combination rule {other}"))),
        };
        let count = r.len_prefix()?;
        let mut members = Vec::new();
        for _ in 0..count {
            let len = r.len_prefix()?;
            members.push(ModelParams::from_artifact(r.take(len)?)?);
        }
        r.finish()?;
        Ensemble::new(members, combine)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::Hyperparams;
    use crate::rng::Rng;
    use crate::text::build_vocab;
    use crate::treebank::Polarity;
    use proptest::prelude::*;

    /// A model that outputs exactly `p` for any sentence containing "w".
    fn constant(p: f64) -> ModelParams {
        let s = Sentence {
            id: 0,
            tokens: vec!["w".into()],
            label: Polarity::Positive,
        };
        let h = Hyperparams {
            embedding_dim: 1,
            hidden: 1,
            ..Hyperparams::default()
        };
        let mut m = ModelParams::zeros(build_vocab(&[s]).unwrap(), &h);
        m.weights.b2 = (p / (1.0 - p)).ln();
        m
    }

    fn out(m: &ModelParams) -> f64 {
        m.predict(&["w"])
    }

    #[test]
    fn average_of_two() {
        let ms = [constant(0.6), constant(0.8)];
        let expected = (out(&ms[0]) + out(&ms[1])) / 2.0;
        assert!((predict_average(&ms, &["w"]).unwrap() - expected).abs() < 1e-15);
        assert!((expected - 0.7).abs() < 1e-12);
    }

    #[test]
    fn single_member_is_identity() {
        let m = constant(0.3);
        assert_eq!(predict_average(&[m.clone()], &["w"]).unwrap(), out(&m));
        assert_eq!(predict_confident(&[m.clone()], &["w"]).unwrap(), out(&m));
    }

    #[test]
    fn confident_picks_farthest_from_half() {
        let ms = [constant(0.6), constant(0.1)];
        assert_eq!(predict_confident(&ms, &["w"]).unwrap(), out(&ms[1]));
    }

    #[test]
    fn confidence_ties_go_to_first_member() {
        assert_eq!(most_confident([0.25, 0.75].into_iter()), 0.25);
        assert_eq!(most_confident([0.75, 0.25].into_iter()), 0.75);
    }

    #[test]
    fn empty_members_are_rejected() {
        assert!(predict_average(&[], &["w"]).is_err());
        assert!(predict_confident(&[], &["w"]).is_err());
        assert!(Ensemble::new(vec![], Combine::Average).is_err());
    }

    #[test]
    fn members_use_their_own_vocabularies() {
        let a = constant(0.9);
        // Sentence without "w": every member sees an empty input.
        assert_eq!(predict_average(&[a.clone(), a], &["other"]).unwrap(), 0.5);
    }

    #[test]
    fn artifact_round_trip() {
        let h = Hyperparams::default();
        let s = Sentence {
            id: 0,
            tokens: vec!["a".into(), "b".into()],
            label: Polarity::Positive,
        };
        let members = (0..3)
            .map(|i| ModelParams::init(build_vocab(&[s.clone()]).unwrap(), &h, &mut Rng::seed_from_u64(i)))
            .collect();
        let e = Ensemble::new(members, Combine::Confidence).unwrap();
        let back = Ensemble::from_artifact(&e.to_artifact().unwrap()).unwrap();
        assert_eq!(back, e);
    }

    proptest! {
        #[test]
        fn average_within_member_range(ps in prop::collection::vec(0.0f64..1.0, 1..10)) {
            let a = average(ps.iter().copied());
            let lo = ps.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = ps.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(a >= lo - 1e-15 && a <= hi + 1e-15);
        }

        #[test]
        fn confident_selects_a_member(ps in prop::collection::vec(0.0f64..1.0, 1..10)) {
            let c = most_confident(ps.iter().copied());
            prop_assert!(ps.contains(&c));
        }

        #[test]
        fn confident_is_permutation_invariant_without_ties(
            ps in prop::collection::vec(0.0f64..1.0, 1..8),
            seed in any::<u64>(),
        ) {
            let conf: Vec<f64> = ps.iter().map(|p| (p - 0.5).abs()).collect();
            let mut sorted = conf.clone();
            sorted.sort_by(f64::total_cmp);
            prop_assume!(sorted.windows(2).all(|w| w[0] != w[1]));
            let mut shuffled = ps.clone();
            Rng::seed_from_u64(seed).shuffle(&mut shuffled);
            prop_assert_eq!(most_confident(ps.iter().copied()), most_confident(shuffled.iter().copied()));
        }

        #[test]
        fn identical_members_equal_single(p in 0.01f64..0.99, n in 1usize..6) {
            let m = constant(p);
            let ms = vec![m.clone(); n];
            prop_assert_eq!(predict_confident(&ms, &["w"]).unwrap(), out(&m));
            prop_assert_eq!(predict_average(&ms, &["w"]).unwrap(), out(&m));
        }
    }
}
