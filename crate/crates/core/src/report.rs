//! Trial-averaged tables, differences, cutoffs, and their JSON/CSV/Markdown
//! forms.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, Strategy, UserWeighting};
use crate::ensemble::average;
use crate::error::{Error, Result};
use crate::metric::{breakeven_alpha, personalization_score, PerfPair, Preference, INDIFFERENCE_TOL};
use crate::runner::{Scope, TrialResult};
use crate::treebank::BINARY_MAPPING;

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// One averaged accuracy cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportCell {
    pub n_users: usize,
    pub strategy: Strategy,
    pub scope: Scope,
    /// Unweighted mean over trials; `None` if no trial had data.
    pub mean: Option<f64>,
    /// Sample standard deviation over trials; `None` below two trials.
    pub std: Option<f64>,
    /// Trials that contributed.
    pub trials: usize,
    /// Sentences evaluated, summed over users and trials.
    pub sentences: u64,
    /// Per-user cells left out because their set was empty.
    pub empty_user_cells: usize,
}

/// Single-model accuracy minus ensemble accuracy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffCell {
    pub n_users: usize,
    pub ensemble: Strategy,
    pub value: Option<f64>,
}

/// Indifference point between the single model and one ensemble.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CutoffCell {
    pub n_users: usize,
    pub ensemble: Strategy,
    pub alpha: Option<f64>,
    /// `None` means indifferent.
    pub preferred_above: Option<Strategy>,
    pub preferred_below: Option<Strategy>,
}

/// Personalization scores of every strategy at one `alpha`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaRow {
    pub n_users: usize,
    pub alpha: f64,
    pub scores: Vec<(Strategy, Option<f64>)>,
    /// `None` on a tie or missing data.
    pub best: Option<Strategy>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub binary_mapping: String,
    pub user_weighting: UserWeighting,
    pub rng: String,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub schema_version: u32,
    pub config: ExperimentConfig,
    pub metadata: ReportMetadata,
    pub cells: Vec<ReportCell>,
    pub user_differences: Vec<DiffCell>,
    pub global_differences: Vec<DiffCell>,
    pub cutoffs: Vec<CutoffCell>,
    pub alpha_scores: Vec<AlphaRow>,
}

const NOTES: &[&str] = &[
    "difference = single-model accuracy minus ensemble accuracy; positive favours the single model",
    "user scope = each user's test sentences with no polar word owned by another user; global scope = the whole test split",
    "cutoff alpha solves alpha*p0 + (1-alpha)*g0 = alpha*p1 + (1-alpha)*g1 with strategy 0 = single; the value is the same for accuracies and for losses 1 - accuracy",
    "a worked 5-user example quoting p_single - p_average = -0.00523 beside a +0.005 user-scope difference is consistent when p and g are read as losses (1 - accuracy); it yields alpha = 0.9124 with the single model preferred above",
];

impl ExperimentReport {
    pub fn cell(&self, n_users: usize, strategy: Strategy, scope: Scope) -> Option<&ReportCell> {
        self.cells
            .iter()
            .find(|c| c.n_users == n_users && c.strategy == strategy && c.scope == scope)
    }

    pub fn mean(&self, n_users: usize, strategy: Strategy, scope: Scope) -> Option<f64> {
        self.cell(n_users, strategy, scope).and_then(|c| c.mean)
    }
}

fn mean_std(values: &[f64]) -> (Option<f64>, Option<f64>) {
    if values.is_empty() {
        return (None, None);
    }
    let n = values.len() as f64;
    let mean = average(values.iter().copied());
    let std = (values.len() >= 2)
        .then(|| (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt());
    (Some(mean), std)
}

/// Average stored trials into a report. The same function serves a live run
/// and a later recomputation from disk.
pub fn report_from_trials(config: &ExperimentConfig, trials: &[TrialResult]) -> Result<ExperimentReport> {
    config.validate()?;
    let mut cells = Vec::new();
    for &n in &config.users {
        let ts: Vec<&TrialResult> = trials.iter().filter(|t| t.n_users == n).collect();
        if ts.is_empty() {
            return Err(Error::InvalidArgument(format!("no trials stored for {n} users")));
        }
        for &strategy in &config.strategies {
            for scope in Scope::ALL {
                let per_trial: Vec<_> = ts.iter().map(|t| t.cell(strategy, scope, config.user_weighting)).collect();
                let values: Vec<f64> = per_trial.iter().filter_map(|c| c.accuracy).collect();
                let (mean, std) = mean_std(&values);
                cells.push(ReportCell {
                    n_users: n,
                    strategy,
                    scope,
                    mean,
                    std,
                    trials: values.len(),
                    sentences: per_trial.iter().map(|c| c.counts.total).sum(),
                    empty_user_cells: per_trial.iter().map(|c| c.empty_users).sum(),
                });
            }
        }
    }

    let mut report = ExperimentReport {
        schema_version: REPORT_SCHEMA_VERSION,
        config: config.clone(),
        metadata: ReportMetadata {
            binary_mapping: BINARY_MAPPING.into(),
            user_weighting: config.user_weighting,
            rng: crate::rng::ALGORITHM.into(),
            notes: NOTES.iter().map(|s| s.to_string()).collect(),
        },
        cells,
        user_differences: Vec::new(),
        global_differences: Vec::new(),
        cutoffs: Vec::new(),
        alpha_scores: Vec::new(),
    };

    let ensembles: Vec<Strategy> = config.strategies.iter().copied().filter(|s| s.combine().is_some()).collect();
    let (mut user_diffs, mut global_diffs, mut cutoffs, mut alpha_scores) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for &n in &config.users {
        let diff = |e, scope| match (report.mean(n, Strategy::Single, scope), report.mean(n, e, scope)) {
            (Some(a), Some(b)) => Some(a - b),
            _ => None,
        };
        for &e in &ensembles {
            user_diffs.push(DiffCell { n_users: n, ensemble: e, value: diff(e, Scope::User) });
            global_diffs.push(DiffCell { n_users: n, ensemble: e, value: diff(e, Scope::Global) });
            cutoffs.push(cutoff(n, e, &report)?);
        }
        for alpha in config.alphas() {
            alpha_scores.push(alpha_row(n, alpha, &config.strategies, &report)?);
        }
    }
    report.user_differences = user_diffs;
    report.global_differences = global_diffs;
    report.cutoffs = cutoffs;
    report.alpha_scores = alpha_scores;
    Ok(report)
}

fn pair(report: &ExperimentReport, n: usize, s: Strategy) -> Result<Option<PerfPair>> {
    match (report.mean(n, s, Scope::User), report.mean(n, s, Scope::Global)) {
        (Some(local), Some(global)) => PerfPair::accuracy(local, global).map(Some),
        _ => Ok(None),
    }
}

fn cutoff(n: usize, ensemble: Strategy, report: &ExperimentReport) -> Result<CutoffCell> {
    let pick = |p: Preference| match p {
        Preference::First => Some(Strategy::Single),
        Preference::Second => Some(ensemble),
        Preference::Indifferent => None,
    };
    let (p0, p1) = match (pair(report, n, Strategy::Single)?, pair(report, n, ensemble)?) {
        (Some(a), Some(b)) => (a, b),
        _ => {
            return Ok(CutoffCell {
                n_users: n,
                ensemble,
                alpha: None,
                preferred_above: None,
                preferred_below: None,
            })
        }
    };
    let c = breakeven_alpha(&p0, &p1)?;
    Ok(CutoffCell {
        n_users: n,
        ensemble,
        alpha: c.value,
        preferred_above: pick(c.preferred_above),
        preferred_below: pick(c.preferred_below),
    })
}

fn alpha_row(n: usize, alpha: f64, strategies: &[Strategy], report: &ExperimentReport) -> Result<AlphaRow> {
    let mut scores = Vec::new();
    for &s in strategies {
        let score = match pair(report, n, s)? {
            Some(p) => Some(personalization_score(alpha, &p)?),
            None => None,
        };
        scores.push((s, score));
    }
    let mut best = None;
    if scores.iter().all(|(_, v)| v.is_some()) {
        let top = scores.iter().filter_map(|(_, v)| *v).fold(f64::NEG_INFINITY, f64::max);
        let leaders: Vec<Strategy> = scores
            .iter()
            .filter(|(_, v)| top - v.unwrap() <= INDIFFERENCE_TOL)
            .map(|(s, _)| *s)
            .collect();
        if leaders.len() == 1 {
            best = Some(leaders[0]);
        }
    }
    Ok(AlphaRow {
        n_users: n,
        alpha,
        scores,
        best,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
    Md,
}

impl std::str::FromStr for Format {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(Format::Json),
            "csv" => Ok(Format::Csv),
            "md" | "markdown" => Ok(Format::Md),
            other => Err(Error::InvalidArgument(format!("unknown format {other:?}"))),
        }
    }
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Json => "json",
            Format::Csv => "csv",
            Format::Md => "md",
        }
    }
}

/// Run metadata kept apart from the data body.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunHeader {
    pub schema_version: u32,
    pub generator: String,
    pub seed: u64,
    pub trials_run: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportDocument {
    pub header: RunHeader,
    pub data: ExperimentReport,
}

impl ReportDocument {
    pub fn new(report: ExperimentReport, trials_run: usize) -> Self {
        ReportDocument {
            header: RunHeader {
                schema_version: REPORT_SCHEMA_VERSION,
                generator: concat!("personabench ", env!("CARGO_PKG_VERSION")).into(),
                seed: report.config.seed,
                trials_run,
            },
            data: report,
        }
    }
}

pub fn to_json(report: &ExperimentReport, trials_run: usize) -> Result<String> {
    let mut s = serde_json::to_string_pretty(&ReportDocument::new(report.clone(), trials_run))?;
    s.push('\n');
    Ok(s)
}

pub fn from_json(text: &str) -> Result<ExperimentReport> {
    let doc: ReportDocument = serde_json::from_str(text)?;
    if doc.header.schema_version != REPORT_SCHEMA_VERSION {
        return Err(Error::Artifact(format!(
            "report schema {} is not {}",
            doc.header.schema_version, REPORT_SCHEMA_VERSION
        )));
    }
    Ok(doc.data)
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

/// One row per `(n_users, strategy, scope)` cell.
pub fn to_csv(report: &ExperimentReport) -> String {
    let mut out = String::from("n_users,strategy,scope,mean,std,trials,sentences,empty_user_cells\n");
    for c in &report.cells {
        let scope = match c.scope {
            Scope::User => "user",
            Scope::Global => "global",
        };
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            c.n_users,
            c.strategy.name(),
            scope,
            opt(c.mean),
            opt(c.std),
            c.trials,
            c.sentences,
            c.empty_user_cells
        );
    }
    out
}

fn md_num(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.3}")).unwrap_or_else(|| "n/a".into())
}

fn md_pick(s: Option<Strategy>) -> &'static str {
    s.map(Strategy::name).unwrap_or("indifferent")
}

pub fn to_markdown(report: &ExperimentReport) -> String {
    let c = &report.config;
    let ensembles: Vec<Strategy> = c.strategies.iter().copied().filter(|s| s.combine().is_some()).collect();
    let mut out = String::new();

    let _ = writeln!(out, "## Accuracy by number of users\n");
    let mut head = String::from("| users | single (user) | single (global) |");
    let mut rule = String::from("|---|---|---|");
    for e in &ensembles {
        let _ = write!(head, " {} (global) |", e.name());
        rule.push_str("---|");
    }
    let _ = writeln!(out, "{head}\n{rule}");
    for &n in &c.users {
        let mut row = format!(
            "| {n} | {} | {} |",
            md_num(report.mean(n, Strategy::Single, Scope::User)),
            md_num(report.mean(n, Strategy::Single, Scope::Global))
        );
        for &e in &ensembles {
            let _ = write!(row, " {} |", md_num(report.mean(n, e, Scope::Global)));
        }
        let _ = writeln!(out, "{row}");
    }

    if !ensembles.is_empty() {
        for (title, diffs) in [
            ("User-scope difference (single minus ensemble)", &report.user_differences),
            ("Global difference (single minus ensemble)", &report.global_differences),
        ] {
            let _ = writeln!(out, "\n## {title}\n");
            let mut head = String::from("| users |");
            let mut rule = String::from("|---|");
            for e in &ensembles {
                let _ = write!(head, " {} |", e.name());
                rule.push_str("---|");
            }
            let _ = writeln!(out, "{head}\n{rule}");
            for &n in &c.users {
                let mut row = format!("| {n} |");
                for &e in &ensembles {
                    let v = diffs.iter().find(|d| d.n_users == n && d.ensemble == e).and_then(|d| d.value);
                    let _ = write!(row, " {} |", md_num(v));
                }
                let _ = writeln!(out, "{row}");
            }
        }

        let _ = writeln!(out, "\n## Cutoff alpha versus the single model\n");
        let _ = writeln!(out, "| users | ensemble | alpha | above | below |\n|---|---|---|---|---|");
        for k in &report.cutoffs {
            let a = k.alpha.map(|a| format!("{a:.4}")).unwrap_or_else(|| "none".into());
            let _ = writeln!(
                out,
                "| {} | {} | {a} | {} | {} |",
                k.n_users,
                k.ensemble.name(),
                md_pick(k.preferred_above),
                md_pick(k.preferred_below)
            );
        }
    }

    let _ = writeln!(out, "\n## Personalization scores\n");
    let mut head = String::from("| users | alpha |");
    let mut rule = String::from("|---|---|");
    for s in &c.strategies {
        let _ = write!(head, " {} |", s.name());
        rule.push_str("---|");
    }
    let _ = writeln!(out, "{head} best |\n{rule}---|");
    for r in &report.alpha_scores {
        let mut row = format!("| {} | {:.2} |", r.n_users, r.alpha);
        for (_, v) in &r.scores {
            let _ = write!(row, " {} |", v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "n/a".into()));
        }
        let _ = writeln!(out, "{row} {} |", md_pick(r.best));
    }

    let _ = writeln!(out, "\nTrials: {}. Seed: {}. Labels: {}.", c.trials, c.seed, report.metadata.binary_mapping);
    for note in &report.metadata.notes {
        let _ = writeln!(out, "- {note}");
    }
    out
}

/// Write the report in `format` to `dir/report.<ext>` and return the path.
pub fn emit_report(report: &ExperimentReport, trials_run: usize, format: Format, dir: &Path) -> Result<PathBuf> {
    let body = match format {
        Format::Json => to_json(report, trials_run)?,
        Format::Csv => to_csv(report),
        Format::Md => to_markdown(report),
    };
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let path = dir.join(format!("report.{}", format.extension()));
    std::fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

/// Stored trial results, enough to rebuild a report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialStore {
    pub schema_version: u32,
    pub config: ExperimentConfig,
    pub complete: bool,
    pub trials: Vec<TrialResult>,
}

pub const TRIALS_FILE: &str = "trials.json";
pub const PARTIAL_TRIALS_FILE: &str = "trials.partial.json";

impl TrialStore {
    pub fn save(&self, dir: &Path) -> Result<PathBuf> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join(if self.complete { TRIALS_FILE } else { PARTIAL_TRIALS_FILE });
        std::fs::write(&path, serde_json::to_string(self)?).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(TRIALS_FILE);
        if !path.exists() {
            return Err(Error::MissingFile(path));
        }
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let store: TrialStore = serde_json::from_str(&text)?;
        if store.schema_version != REPORT_SCHEMA_VERSION {
            return Err(Error::Artifact(format!("trial store schema {}", store.schema_version)));
        }
        Ok(store)
    }
}
