//! Argument parsing and dispatch for the `curricula` binary.
//!
//! Exit status: 0 on success, 1 for user errors (bad flags, unreadable or
//! malformed inputs, invalid configuration), 2 for internal failures.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use curricula::corpus::{generate_synthetic_corpus, SyntheticConfig};
use curricula::encoder::{load_checkpoint, save_checkpoint};
use curricula::eval::{evaluate_fold, predict_topics, DEFAULT_K, DEFAULT_THRESHOLD};
use curricula::folds::{greedy_assign, overlap_objective, DEFAULT_FOLDS};
use curricula::trainer::train_with_folds;
use curricula::{load_corpus_dir, write_corpus, Error, FoldAssignment, PseudoTranslator, TrainConfig, TranslationMemory};

pub const SEED_ENV: &str = "CURRICULA_SEED";

#[derive(Debug, Parser)]
#[command(name = "curricula", version, about = "Align curriculum topics with content items")]
pub struct Cli {
    /// Cap on worker threads used for embedding.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic corpus.
    Gen(GenArgs),
    /// Assign correlated topics to folds.
    Split(SplitArgs),
    /// Train an encoder with one fold held out.
    Train(Box<TrainArgs>),
    /// Score a checkpoint on a held-out fold.
    Eval(EvalArgs),
    /// Write recommendations for a list of topics.
    Recommend(RecommendArgs),
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 200)]
    pub topics: usize,
    #[arg(long, default_value_t = 3)]
    pub per_topic: usize,
    /// Defaults to $CURRICULA_SEED, then 7.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_delimiter = ',', default_value = "en,es,pt,fr")]
    pub languages: Vec<String>,
    #[arg(long, default_value_t = 20)]
    pub vocab: usize,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value_t = DEFAULT_FOLDS)]
    pub folds: usize,
    #[arg(long)]
    pub out: PathBuf,
    /// Shuffle the order of equally ranked topics with this seed.
    #[arg(long)]
    pub tie_seed: Option<u64>,
}

/// Every training setting as an optional flag; set flags override the config file.
#[derive(Debug, Args, Default)]
pub struct ConfigFlags {
    #[arg(long)]
    pub epochs: Option<String>,
    #[arg(long)]
    pub warmup_epochs: Option<String>,
    #[arg(long)]
    pub peak_lr: Option<String>,
    #[arg(long)]
    pub batch_size: Option<String>,
    #[arg(long)]
    pub decay_power: Option<String>,
    #[arg(long)]
    pub end_lr: Option<String>,
    #[arg(long)]
    pub temperature: Option<String>,
    #[arg(long)]
    pub fold: Option<String>,
    /// Ignored for training: the fold count comes from the folds file.
    #[arg(long)]
    pub n_folds: Option<String>,
    #[arg(long)]
    pub seed: Option<String>,
    #[arg(long)]
    pub hard_negative_fraction: Option<String>,
    #[arg(long)]
    pub hard_negative_k: Option<String>,
    #[arg(long)]
    pub switch_languages: Option<String>,
    #[arg(long)]
    pub switch_period: Option<String>,
    #[arg(long)]
    pub dedup_threshold: Option<String>,
    #[arg(long)]
    pub max_seq_len: Option<String>,
    #[arg(long)]
    pub ngram_size: Option<String>,
    #[arg(long)]
    pub hash_dim: Option<String>,
    #[arg(long)]
    pub embed_dim: Option<String>,
    #[arg(long)]
    pub encoder_seed: Option<String>,
}

impl ConfigFlags {
    fn pairs(&self) -> [(&'static str, &Option<String>); 20] {
        [
            ("epochs", &self.epochs),
            ("warmup_epochs", &self.warmup_epochs),
            ("peak_lr", &self.peak_lr),
            ("batch_size", &self.batch_size),
            ("decay_power", &self.decay_power),
            ("end_lr", &self.end_lr),
            ("temperature", &self.temperature),
            ("fold", &self.fold),
            ("n_folds", &self.n_folds),
            ("seed", &self.seed),
            ("hard_negative_fraction", &self.hard_negative_fraction),
            ("hard_negative_k", &self.hard_negative_k),
            ("switch_languages", &self.switch_languages),
            ("switch_period", &self.switch_period),
            ("dedup_threshold", &self.dedup_threshold),
            ("max_seq_len", &self.max_seq_len),
            ("ngram_size", &self.ngram_size),
            ("hash_dim", &self.hash_dim),
            ("embed_dim", &self.embed_dim),
            ("encoder_seed", &self.encoder_seed),
        ]
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub folds: PathBuf,
    /// `key = value` lines; starts from the desk settings.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Per-epoch CSV log.
    #[arg(long)]
    pub history: Option<PathBuf>,
    /// Translations to use instead of the built-in pseudo-translator.
    #[arg(long)]
    pub translation_memory: Option<PathBuf>,
    #[command(flatten)]
    pub overrides: ConfigFlags,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long)]
    pub folds: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub fold: usize,
    #[arg(long, default_value_t = DEFAULT_K)]
    pub k: usize,
    #[arg(long, default_value_t = DEFAULT_THRESHOLD, allow_negative_numbers = true)]
    pub threshold: f64,
    /// Per-topic scores.
    #[arg(long)]
    pub metrics_csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RecommendArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub ckpt: PathBuf,
    /// Topic ids, one per line; a `topic_id` header line is skipped.
    #[arg(long)]
    pub topics: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = DEFAULT_K)]
    pub k: usize,
    #[arg(long, default_value_t = DEFAULT_THRESHOLD, allow_negative_numbers = true)]
    pub threshold: f64,
}

fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Contract(_) => 2,
        _ => 1,
    }
}

/// Parses `argv` (program name first) and runs the command.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return 1;
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("warning: thread pool already initialised: {e}");
        }
    }
    let result = match &cli.command {
        Command::Gen(a) => gen(a),
        Command::Split(a) => split(a),
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::Recommend(a) => recommend(a),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn env_seed() -> curricula::Result<Option<u64>> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| Error::Config(format!("{SEED_ENV} must be an unsigned integer, got `{v}`"))),
        Err(_) => Ok(None),
    }
}

fn gen(a: &GenArgs) -> curricula::Result<()> {
    let seed = match a.seed {
        Some(s) => s,
        None => env_seed()?.unwrap_or(SyntheticConfig::default().seed),
    };
    let cfg = SyntheticConfig {
        n_topics: a.topics,
        contents_per_topic: a.per_topic,
        languages: a.languages.clone(),
        vocab_per_cluster: a.vocab,
        seed,
    };
    let corpus = generate_synthetic_corpus(&cfg)?;
    write_corpus(&corpus, &a.out)?;
    eprintln!(
        "wrote {} topics, {} contents, {} correlated pairs to {}",
        corpus.topics().len(),
        corpus.contents().len(),
        corpus.correlations().pair_count(),
        a.out.display()
    );
    Ok(())
}

fn split(a: &SplitArgs) -> curricula::Result<()> {
    let corpus = load_corpus_dir(&a.data)?;
    let assignment = greedy_assign(corpus.correlations(), a.folds, a.tie_seed)?;
    assignment.write_csv(&a.out)?;
    let report = overlap_objective(&assignment, corpus.correlations())?;
    eprintln!("fold sizes {:?}, overlap objective {}", report.per_fold_sizes, report.objective);
    Ok(())
}

fn read_text(path: &Path) -> curricula::Result<String> {
    fs::read_to_string(path).map_err(|source| Error::Io { path: path.to_owned(), source })
}

fn write_text(path: &Path, text: &str) -> curricula::Result<()> {
    fs::write(path, text).map_err(|source| Error::Io { path: path.to_owned(), source })
}

/// Desk settings, then the environment seed, the config file and the flags.
fn resolve_config(a: &TrainArgs) -> curricula::Result<TrainConfig> {
    let mut cfg = TrainConfig::desk();
    if let Some(seed) = env_seed()? {
        cfg.seed = seed;
    }
    if let Some(path) = &a.config {
        cfg.apply_config_text(&read_text(path)?)?;
    }
    for (key, value) in a.overrides.pairs() {
        if let Some(v) = value {
            cfg.set(key, v)?;
        }
    }
    Ok(cfg)
}

fn train(a: &TrainArgs) -> curricula::Result<()> {
    let mut cfg = resolve_config(a)?;
    let corpus = load_corpus_dir(&a.data)?;
    let assignment = FoldAssignment::read_csv(&a.folds)?;
    cfg.n_folds = assignment.n_folds.max(2);
    cfg.validate()?;
    let (params, history) = match &a.translation_memory {
        Some(path) => train_with_folds(&corpus, &assignment, &cfg, &TranslationMemory::from_csv(path)?)?,
        None => train_with_folds(&corpus, &assignment, &cfg, &PseudoTranslator)?,
    };
    save_checkpoint(&a.out, &params, &cfg.encoder)?;
    if let Some(path) = &a.history {
        write_text(path, &history.to_csv())?;
    }
    if let Some(last) = history.records.last() {
        eprintln!("trained {} epochs, final loss {:.6}", history.records.len(), last.loss);
    }
    Ok(())
}

fn eval(a: &EvalArgs) -> curricula::Result<()> {
    let corpus = load_corpus_dir(&a.data)?;
    let (params, enc) = load_checkpoint(&a.ckpt)?;
    let assignment = FoldAssignment::read_csv(&a.folds)?;
    if a.k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    let report = evaluate_fold(&params, &enc, &corpus, &assignment, a.fold, a.k, a.threshold)?;
    if let Some(path) = &a.metrics_csv {
        write_text(path, &report.to_csv())?;
    }
    print!("{}", report.to_key_values());
    Ok(())
}

fn read_topic_list(path: &Path) -> curricula::Result<Vec<String>> {
    let text = read_text(path)?;
    let mut seen = BTreeSet::new();
    let mut ids = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let id = line.trim();
        if id.is_empty() || (n == 0 && id == "topic_id") {
            continue;
        }
        if seen.insert(id.to_owned()) {
            ids.push(id.to_owned());
        }
    }
    Ok(ids)
}

fn recommend(a: &RecommendArgs) -> curricula::Result<()> {
    let corpus = load_corpus_dir(&a.data)?;
    let (params, enc) = load_checkpoint(&a.ckpt)?;
    let ids = read_topic_list(&a.topics)?;
    if a.k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    for id in &ids {
        if corpus.topic(id).is_none() {
            return Err(Error::UnknownTopic(id.clone()));
        }
    }
    let refs: Vec<&str> = ids.iter().map(String::as_str).collect();
    let predictions = predict_topics(&params, &enc, &corpus, &refs, a.k, a.threshold)?;
    predictions.write_csv(&a.out)?;
    eprintln!("wrote recommendations for {} topics to {}", ids.len(), a.out.display());
    Ok(())
}
