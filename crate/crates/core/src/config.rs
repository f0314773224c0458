//! Experiment configuration and its flat `key = value` text form.

use std::path::PathBuf;

use serde::de::value::{Error as DeError, StrDeserializer};
use serde::de::{DeserializeOwned, IntoDeserializer};
use serde::{Deserialize, Serialize};

use crate::ensemble::Combine;
use crate::error::{Error, Result};
use crate::neural::Hyperparams;
use crate::partition::{PureTestRule, WordPartition};
use crate::polarity::LogRegConfig;
use crate::treebank::Granularity;

/// How a user's model is combined with the others at inference time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    /// The user's own model alone.
    Single,
    Average,
    Confidence,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [Strategy::Single, Strategy::Average, Strategy::Confidence];

    pub fn combine(self) -> Option<Combine> {
        match self {
            Strategy::Single => None,
            Strategy::Average => Some(Combine::Average),
            Strategy::Confidence => Some(Combine::Confidence),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Single => "single",
            Strategy::Average => "average",
            Strategy::Confidence => "confidence",
        }
    }
}

/// How per-user accuracies within one trial are combined.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UserWeighting {
    /// Unweighted mean of per-user accuracies.
    #[default]
    Uniform,
    /// Pooled counts, so users with larger sets weigh more.
    ByCount,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub data_dir: PathBuf,
    pub users: Vec<usize>,
    pub trials: usize,
    pub seed: u64,
    /// Polar words per side.
    pub k: usize,
    pub strategies: Vec<Strategy>,
    pub user_weighting: UserWeighting,
    pub word_partition: WordPartition,
    pub pure_rule: PureTestRule,
    pub train_granularity: Granularity,
    /// `hyper.seed` is ignored; every user model gets a derived seed.
    pub hyper: Hyperparams,
    /// `None` means five epochs over the loaded train split.
    pub patience_batches: Option<usize>,
    pub logreg: LogRegConfig,
    pub alpha: f64,
    pub alpha_grid: Vec<f64>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            data_dir: PathBuf::from("data/sst"),
            users: vec![2, 3, 5, 8],
            trials: 15,
            seed: 0,
            k: 200,
            strategies: Strategy::ALL.to_vec(),
            user_weighting: UserWeighting::Uniform,
            word_partition: WordPartition::Iid,
            pure_rule: PureTestRule::NoForeign,
            train_granularity: Granularity::Sentence,
            hyper: Hyperparams::default(),
            patience_batches: None,
            logreg: LogRegConfig::default(),
            alpha: 0.9,
            alpha_grid: Vec::new(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.into()));
        if self.trials == 0 {
            return bad("trials must be at least 1");
        }
        if self.users.is_empty() || self.users.contains(&0) {
            return bad("user counts must be a nonempty list of positive integers");
        }
        if self.k == 0 {
            return bad("k must be positive");
        }
        if self.strategies.is_empty() || self.strategies[0] != Strategy::Single {
            return bad("strategies must start with single");
        }
        if !(0.0..=1.0).contains(&self.alpha) || self.alpha_grid.iter().any(|a| !(0.0..=1.0).contains(a)) {
            return bad("alpha values must lie in [0,1]");
        }
        self.hyper.validate()
    }

    /// Apply one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        let h = &mut self.hyper;
        match key.trim() {
            "data_dir" | "data-dir" => self.data_dir = PathBuf::from(v),
            "users" => self.users = parse_list(key, v)?,
            "trials" => self.trials = num(key, v)?,
            "seed" => self.seed = num(key, v)?,
            "k" => self.k = num(key, v)?,
            "strategies" => self.strategies = v.split(',').map(|s| word(key, s)).collect::<Result<_>>()?,
            "user_weighting" => self.user_weighting = word(key, v)?,
            "word_partition" => self.word_partition = word(key, v)?,
            "pure_rule" => self.pure_rule = word(key, v)?,
            "train_granularity" => self.train_granularity = word(key, v)?,
            "alpha" => self.alpha = num(key, v)?,
            "alpha_grid" | "alpha-grid" => self.alpha_grid = parse_alpha_grid(v)?,
            "patience_batches" => {
                self.patience_batches = if v == "auto" { None } else { Some(num(key, v)?) }
            }
            "embedding_dim" => h.embedding_dim = num(key, v)?,
            "hidden" => h.hidden = num(key, v)?,
            "dropout_keep" => h.dropout_keep = num(key, v)?,
            "dropout_placement" => h.dropout_placement = word(key, v)?,
            "lr0" => h.lr0 = num(key, v)?,
            "lr_decay" => h.lr_decay = num(key, v)?,
            "beta1" => h.beta1 = num(key, v)?,
            "beta2" => h.beta2 = num(key, v)?,
            "epsilon" => h.epsilon = num(key, v)?,
            "batch_size" => h.batch_size = num(key, v)?,
            "eval_every_batches" => h.eval_every_batches = num(key, v)?,
            "max_batches" => h.max_batches = num(key, v)?,
            "embedding_init" => h.embedding_init = num(key, v)?,
            "oov_policy" => h.oov_policy = word(key, v)?,
            "logreg_l2" => self.logreg.l2 = num(key, v)?,
            "logreg_lr" => self.logreg.lr = num(key, v)?,
            "logreg_epochs" => self.logreg.epochs = num(key, v)?,
            other => return Err(Error::InvalidArgument(format!("unknown setting {other:?}"))),
        }
        Ok(())
    }

    /// Apply every setting of a `key = value` file.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (k, v) in parse_kv(text)? {
            self.set(&k, &v)?;
        }
        Ok(())
    }

    /// Patience in batches for a train split of `train_len` sentences.
    pub fn patience_for(&self, train_len: usize) -> usize {
        self.patience_batches
            .unwrap_or_else(|| Hyperparams::patience_for(train_len, self.hyper.batch_size))
    }

    /// `alpha` followed by the grid, deduplicated, in ascending order.
    pub fn alphas(&self) -> Vec<f64> {
        let mut a: Vec<f64> = std::iter::once(self.alpha).chain(self.alpha_grid.iter().copied()).collect();
        a.sort_by(f64::total_cmp);
        a.dedup();
        a
    }
}

/// Parse `key = value` lines. Blank lines and lines starting with `#` are
/// skipped.
pub fn parse_kv(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::InvalidArgument(format!("line {}: expected key = value", i + 1)))?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

/// Parse `start:stop:step` into an inclusive grid.
pub fn parse_alpha_grid(spec: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = spec.split(':').collect();
    let [start, stop, step] = parts[..] else {
        return Err(Error::InvalidArgument(format!("alpha grid {spec:?} is not start:stop:step")));
    };
    let (start, stop, step): (f64, f64, f64) = (num("alpha_grid", start)?, num("alpha_grid", stop)?, num("alpha_grid", step)?);
    if !(step > 0.0) || stop < start {
        return Err(Error::InvalidArgument(format!("alpha grid {spec:?} is empty")));
    }
    let n = ((stop - start) / step + 1e-9).floor() as usize;
    let grid: Vec<f64> = (0..=n).map(|i| (start + i as f64 * step).min(stop)).collect();
    if grid.iter().any(|a| !(0.0..=1.0).contains(a)) {
        return Err(Error::InvalidArgument(format!("alpha grid {spec:?} leaves [0,1]")));
    }
    Ok(grid)
}

fn parse_list<T: std::str::FromStr>(key: &str, v: &str) -> Result<Vec<T>> {
    v.split(',').map(|s| num(key, s)).collect()
}

fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.trim()
        .parse()
        .map_err(|_| Error::InvalidArgument(format!("{key}: cannot parse {v:?}")))
}

fn word<T: DeserializeOwned>(key: &str, v: &str) -> Result<T> {
    let d: StrDeserializer<'_, DeError> = v.trim().into_deserializer();
    T::deserialize(d).map_err(|_| Error::InvalidArgument(format!("{key}: unknown value {v:?}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::DropoutPlacement;

    #[test]
    fn defaults_are_valid() {
        let c = ExperimentConfig::default();
        c.validate().unwrap();
        assert_eq!(c.users, vec![2, 3, 5, 8]);
        assert_eq!(c.trials, 15);
        assert_eq!(c.k, 200);
    }

    #[test]
    fn text_settings_apply() {
        let mut c = ExperimentConfig::default();
        c.apply_text(
            "# comment\nusers = 2,5\ntrials=3\n\nstrategies = single,confidence\ndropout_placement = both\n\
             user_weighting = by_count\npatience_batches = 40\nalpha_grid = 0:1:0.25\n",
        )
        .unwrap();
        assert_eq!(c.users, vec![2, 5]);
        assert_eq!(c.trials, 3);
        assert_eq!(c.strategies, vec![Strategy::Single, Strategy::Confidence]);
        assert_eq!(c.hyper.dropout_placement, DropoutPlacement::Both);
        assert_eq!(c.user_weighting, UserWeighting::ByCount);
        assert_eq!(c.patience_for(1000), 40);
        assert_eq!(c.alpha_grid, vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        assert_eq!(c.alphas(), vec![0.0, 0.25, 0.5, 0.75, 0.9, 1.0]);
    }

    #[test]
    fn bad_settings_are_rejected() {
        let mut c = ExperimentConfig::default();
        assert!(c.set("nope", "1").is_err());
        assert!(c.set("trials", "x").is_err());
        assert!(c.set("strategies", "single,vote").is_err());
        assert!(c.apply_text("users 2").is_err());
        c.set("trials", "0").unwrap();
        assert!(c.validate().is_err());
    }

    #[test]
    fn alpha_grid_parsing() {
        let g = parse_alpha_grid("0:1:0.05").unwrap();
        assert_eq!(g.len(), 21);
        assert_eq!(g[0], 0.0);
        assert_eq!(*g.last().unwrap(), 1.0);
        assert!(parse_alpha_grid("0:2:0.5").is_err());
        assert!(parse_alpha_grid("0:1").is_err());
        assert!(parse_alpha_grid("0:1:0").is_err());
    }

    #[test]
    fn auto_patience_is_five_epochs() {
        let c = ExperimentConfig::default();
        assert_eq!(c.patience_for(6920), 1082);
    }
}
