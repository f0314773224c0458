use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use log::{info, warn};

use personabench_core::config::{parse_kv, ExperimentConfig};
use personabench_core::diagnostics::{fedeval_check, gradient_check};
use personabench_core::report::{emit_report, report_from_trials, to_markdown, Format, TrialStore, REPORT_SCHEMA_VERSION};
use personabench_core::runner::{lexicon_cache_path, load_or_build_lexicon, run_grid, Prepared};
use personabench_core::synth::{write_synthetic, SynthConfig};
use personabench_core::treebank::{load_corpus, CorpusFiles};
use personabench_core::Error;

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_TRIAL: u8 = 3;

const GRAD_TOLERANCE: f64 = 1e-4;

#[derive(Parser)]
#[command(name = "personabench", version, about = "Personalization experiments on sentiment treebanks")]
struct Cli {
    /// Flat `key = value` settings file; command-line flags win.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// More logging (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse the corpus, fit the polarity model and cache the lexicon.
    Prepare {
        #[arg(long)]
        data_dir: Option<PathBuf>,
        #[arg(long)]
        k: Option<String>,
    },
    /// Run every (users, trial) cell and write trial results and a report.
    Run(RunArgs),
    /// Recompute tables and cutoffs from stored trial results.
    Report {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        alpha: Option<String>,
        #[arg(long)]
        alpha_grid: Option<String>,
        /// Where to write; defaults to the input directory.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        format: Option<String>,
    },
    /// Gradient and federated-evaluation checks.
    Selfcheck {
        #[arg(long, default_value_t = 100)]
        configs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Write a synthetic treebank for trying the pipeline.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 2000)]
        train: usize,
        #[arg(long, default_value_t = 300)]
        dev: usize,
        #[arg(long, default_value_t = 600)]
        test: usize,
        /// Polar words per side.
        #[arg(long, default_value_t = 300)]
        polar_words: usize,
        #[arg(long, default_value_t = 2000)]
        neutral_words: usize,
        #[arg(long, default_value_t = 17)]
        seed: u64,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    data_dir: Option<PathBuf>,
    /// Comma-separated user counts.
    #[arg(long)]
    users: Option<String>,
    #[arg(long)]
    trials: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated subset of json, csv, md.
    #[arg(long)]
    format: Option<String>,
    /// Any other setting, as key=value (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

/// Settings from the file, split into experiment keys and output keys.
#[derive(Default)]
struct FileSettings {
    config: ExperimentConfig,
    out: Option<PathBuf>,
    format: Option<String>,
}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    anyhow::Error::new(Error::InvalidArgument(msg.into()))
}

fn load_settings(path: Option<&Path>) -> Result<FileSettings> {
    let mut s = FileSettings::default();
    let Some(path) = path else { return Ok(s) };
    let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    for (k, v) in parse_kv(&text)? {
        match k.as_str() {
            "out" => s.out = Some(PathBuf::from(v)),
            "format" => s.format = Some(v),
            _ => s.config.set(&k, &v)?,
        }
    }
    Ok(s)
}

fn set_opt(config: &mut ExperimentConfig, key: &str, value: Option<&str>) -> Result<()> {
    if let Some(v) = value {
        config.set(key, v)?;
    }
    Ok(())
}

fn parse_formats(s: &str) -> Result<Vec<Format>> {
    s.split(',').map(|f| f.trim().parse::<Format>().map_err(anyhow::Error::new)).collect()
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_USAGE) } else { ExitCode::SUCCESS };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &anyhow::Error) -> u8 {
    match e.chain().find_map(|c| c.downcast_ref::<Error>()) {
        Some(Error::Trial { .. }) => EXIT_TRIAL,
        Some(Error::InvalidArgument(_)) => EXIT_USAGE,
        Some(Error::Degenerate(_) | Error::VocabTooSmall { .. } | Error::EmptyInput(_)) => EXIT_DATA,
        Some(err) if err.is_data_error() => EXIT_DATA,
        Some(_) => EXIT_TRIAL,
        None if e.chain().any(|c| c.is::<std::io::Error>()) => EXIT_DATA,
        None => EXIT_TRIAL,
    }
}

fn dispatch(cli: Cli) -> Result<ExitCode> {
    let file = load_settings(cli.config.as_deref())?;
    match cli.command {
        Command::Prepare { data_dir, k } => {
            let mut config = file.config;
            if let Some(d) = data_dir {
                config.data_dir = d;
            }
            set_opt(&mut config, "k", k.as_deref())?;
            prepare(&config)
        }
        Command::Run(args) => run(file, args),
        Command::Report {
            input,
            alpha,
            alpha_grid,
            out,
            format,
        } => report(&input, alpha.as_deref(), alpha_grid.as_deref(), out, format.or(file.format)),
        Command::Selfcheck { configs, seed } => selfcheck(configs, seed),
        Command::Synth {
            out,
            train,
            dev,
            test,
            polar_words,
            neutral_words,
            seed,
        } => {
            let counts = write_synthetic(
                &out,
                &SynthConfig {
                    train,
                    dev,
                    test,
                    polar_words,
                    neutral_words,
                    seed,
                    ..SynthConfig::default()
                },
            )?;
            println!("wrote {} / {} / {} trees to {}", counts.train, counts.dev, counts.test, out.display());
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn prepare(config: &ExperimentConfig) -> Result<ExitCode> {
    config.validate()?;
    let corpus = load_corpus(&config.data_dir, &CorpusFiles::default(), config.train_granularity)?;
    let t = corpus.tree_counts;
    println!("trees: train {} / dev {} / test {}", t.train, t.dev, t.test);
    println!(
        "binary sentences: train {} / dev {} / test {}",
        corpus.train.len(),
        corpus.dev.len(),
        corpus.test.len()
    );
    let path = lexicon_cache_path(&config.data_dir, config.train_granularity, config.k);
    if path.exists() {
        std::fs::remove_file(&path).with_context(|| format!("removing stale {}", path.display()))?;
    }
    let lexicon = load_or_build_lexicon(&corpus, config)?;
    println!("lexicon: {} words per side -> {}", lexicon.k(), path.display());
    Ok(ExitCode::SUCCESS)
}

fn run(file: FileSettings, args: RunArgs) -> Result<ExitCode> {
    let mut config = file.config;
    if let Some(d) = args.data_dir {
        config.data_dir = d;
    }
    set_opt(&mut config, "users", args.users.as_deref())?;
    set_opt(&mut config, "trials", args.trials.as_deref())?;
    set_opt(&mut config, "seed", args.seed.as_deref())?;
    for kv in &args.set {
        let (k, v) = kv.split_once('=').ok_or_else(|| usage(format!("--set expects key=value, got {kv:?}")))?;
        config.set(k, v)?;
    }
    config.validate()?;
    let out = args.out.or(file.out).ok_or_else(|| usage("--out is required"))?;
    let formats = parse_formats(args.format.or(file.format).as_deref().unwrap_or("json"))?;

    let prepared = Prepared::load(&config)?;
    info!(
        "{} train / {} dev / {} test sentences, {} polar words",
        prepared.corpus.train.len(),
        prepared.corpus.dev.len(),
        prepared.corpus.test.len(),
        prepared.lexicon.len()
    );
    let grid = run_grid(&prepared, &config)?;
    let mut store = TrialStore {
        schema_version: REPORT_SCHEMA_VERSION,
        config: config.clone(),
        complete: grid.failure.is_none(),
        trials: grid.trials,
    };
    if let Some(e) = grid.failure {
        let path = store.save(&out)?;
        warn!("partial results written to {}", path.display());
        return Err(e.into());
    }
    store.trials.sort_by_key(|t| (t.n_users, t.trial));
    let path = store.save(&out)?;
    println!("trials -> {}", path.display());
    let report = report_from_trials(&config, &store.trials)?;
    for f in formats {
        let p = emit_report(&report, store.trials.len(), f, &out)?;
        println!("report -> {}", p.display());
    }
    print!("{}", to_markdown(&report));
    Ok(ExitCode::SUCCESS)
}

fn report(
    input: &Path,
    alpha: Option<&str>,
    grid: Option<&str>,
    out: Option<PathBuf>,
    format: Option<String>,
) -> Result<ExitCode> {
    let store = TrialStore::load(input)?;
    let mut config = store.config.clone();
    set_opt(&mut config, "alpha", alpha)?;
    set_opt(&mut config, "alpha_grid", grid)?;
    let report = report_from_trials(&config, &store.trials)?;
    let out = out.unwrap_or_else(|| input.to_path_buf());
    for f in parse_formats(format.as_deref().unwrap_or("json"))? {
        let p = emit_report(&report, store.trials.len(), f, &out)?;
        println!("report -> {}", p.display());
    }
    print!("{}", to_markdown(&report));
    Ok(ExitCode::SUCCESS)
}

fn selfcheck(configs: usize, seed: u64) -> Result<ExitCode> {
    let g = gradient_check(configs, seed)?;
    let grad_ok = g.max_rel_error < GRAD_TOLERANCE;
    println!(
        "{} gradient check: {} configurations, {} partials, max relative error {:.3e} (limit {:.0e})",
        if grad_ok { "PASS" } else { "FAIL" },
        g.configs,
        g.parameters,
        g.max_rel_error,
        GRAD_TOLERANCE
    );
    let f = fedeval_check(50, 500, seed)?;
    let fed_ok = f.mismatches == 0;
    println!(
        "{} federated evaluation: {} random partitions, {} mismatches against centralized counts",
        if fed_ok { "PASS" } else { "FAIL" },
        f.cases,
        f.mismatches
    );
    Ok(if grad_ok && fed_ok { ExitCode::SUCCESS } else { ExitCode::from(EXIT_TRIAL) })
}
