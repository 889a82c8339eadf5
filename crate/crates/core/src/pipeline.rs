//! End-to-end commands behind the `lia` binary.
//!
//! Every command that produces artifacts writes them into a fresh directory
//! `<out>/<kind>-<unix seconds>-seed<seed>` together with the resolved
//! config. A training run directory holds:
//!
//! ```text
//! config.txt                 resolved `key = value` config
//! split.tsv                  split manifest (user, item, fold)
//! train_log.tsv              one line per epoch
//! checkpoint.bin             best-validation parameters
//! metrics_validation_k20.txt validation NDCG of the checkpoint
//! ```

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use crate::checkpoint::Checkpoint;
use crate::config::RunConfig;
use crate::dataset::{load_interactions, split, Fold, SplitDataset};
use crate::error::{Error, Result};
use crate::evaluation::{evaluate, rank_items, Metrics};
use crate::model::init;
use crate::rulebook::{extract_rules, Explanation, ItemLabels, RuleBook};
use crate::training::{fit_from, grad_check, FitResult, GradCheckConfig, GradCheckReport};

pub const CONFIG_FILE: &str = "config.txt";
pub const SPLIT_FILE: &str = "split.tsv";
pub const LOG_FILE: &str = "train_log.tsv";
pub const CHECKPOINT_FILE: &str = "checkpoint.bin";
pub const SWEEP_FILE: &str = "sweep.tsv";
pub const RULEBOOK_FILE: &str = "rulebook.json";

/// Creates `<out>/<kind>-<unix seconds>-seed<seed>`, adding a counter on collision.
pub fn create_run_dir(out: &Path, kind: &str, seed: u64) -> Result<PathBuf> {
    let secs = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let base = format!("{kind}-{secs}-seed{seed}");
    for attempt in 0.. {
        let name = if attempt == 0 { base.clone() } else { format!("{base}-{attempt}") };
        let dir = out.join(name);
        match fs::create_dir(&dir) {
            Ok(()) => return Ok(dir),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => continue,
            Err(e) => return Err(Error::io(&dir, e)),
        }
    }
    unreachable!("unbounded loop returns")
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Loads the configured dataset and splits it with the run seed.
pub fn prepare(config: &RunConfig) -> Result<SplitDataset> {
    let data = load_interactions(config.data_path()?, config.format)?;
    Ok(split(&data, config.seed))
}

/// Result of [`cmd_train`].
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub run_dir: PathBuf,
    pub fit: FitResult,
    pub validation: Metrics,
}

impl TrainOutcome {
    pub fn checkpoint_path(&self) -> PathBuf {
        self.run_dir.join(CHECKPOINT_FILE)
    }
}

/// Trains on an already prepared split, writing all artifacts under `run_dir`.
pub fn train_in(config: &RunConfig, split: &SplitDataset, run_dir: &Path) -> Result<TrainOutcome> {
    config.validate()?;
    write_text(&run_dir.join(CONFIG_FILE), &config.to_string())?;
    split.write_manifest(run_dir.join(SPLIT_FILE))?;

    let rows = split.rows();
    let params = init(&config.model_config(split.n_items()))?;
    let log_path = run_dir.join(LOG_FILE);
    let log_file = fs::File::create(&log_path).map_err(|e| Error::io(&log_path, e))?;
    let mut log = BufWriter::new(log_file);
    let fit = fit_from(&rows, params, &config.train_config(), Some(&mut log))?;
    drop(log);

    Checkpoint {
        params: fit.params.clone(),
        seed: config.seed,
        config: config.to_string(),
    }
    .save(run_dir.join(CHECKPOINT_FILE))?;
    let validation = evaluate(&fit.params, &rows, config.eval_k, Fold::Validation);
    validation.write_report(run_dir.join(metrics_file_name(Fold::Validation, config.eval_k)), config.seed)?;
    Ok(TrainOutcome {
        run_dir: run_dir.to_owned(),
        fit,
        validation,
    })
}

/// Dataset, split, fit and validation scoring in a new run directory.
pub fn cmd_train(config: &RunConfig) -> Result<TrainOutcome> {
    config.validate()?;
    let split = prepare(config)?;
    let run_dir = create_run_dir(&config.out, "run", config.seed)?;
    train_in(config, &split, &run_dir)
}

/// A checkpoint together with the split and config stored next to it.
#[derive(Debug, Clone)]
pub struct LoadedRun {
    pub checkpoint: Checkpoint,
    pub split: SplitDataset,
    pub config: RunConfig,
    pub run_dir: PathBuf,
}

/// Reads `checkpoint.bin` plus the sibling `split.tsv`.
pub fn load_run(checkpoint_path: &Path) -> Result<LoadedRun> {
    let checkpoint = Checkpoint::load(checkpoint_path)?;
    let run_dir = checkpoint_path
        .parent()
        .map(Path::to_owned)
        .unwrap_or_else(|| PathBuf::from("."));
    let split = SplitDataset::read_manifest(run_dir.join(SPLIT_FILE))?;
    let mut config = RunConfig::default();
    config.apply_text(&checkpoint.config, checkpoint_path)?;
    if split.n_items() != checkpoint.params.n_items() {
        return Err(Error::Checkpoint {
            path: checkpoint_path.to_owned(),
            message: format!(
                "checkpoint has {} items but {} lists {}",
                checkpoint.params.n_items(),
                SPLIT_FILE,
                split.n_items()
            ),
        });
    }
    Ok(LoadedRun {
        checkpoint,
        split,
        config,
        run_dir,
    })
}

pub fn metrics_file_name(fold: Fold, k: usize) -> String {
    format!("metrics_{fold}_k{k}.txt")
}

/// Scores the checkpoint on `fold` and writes the metrics file next to it.
pub fn cmd_eval(checkpoint_path: &Path, fold: Fold, k: usize) -> Result<Metrics> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be >= 1".into()));
    }
    let run = load_run(checkpoint_path)?;
    let metrics = evaluate(&run.checkpoint.params, &run.split.rows(), k, fold);
    metrics.write_report(run.run_dir.join(metrics_file_name(fold, k)), run.checkpoint.seed)?;
    Ok(metrics)
}

/// What to explain for a user.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ExplainTarget {
    /// One item, by its label in the dataset.
    Item(String),
    /// The user's `n` best unseen items.
    Top(usize),
}

/// Builds the rulebook of a loaded run. Items are labelled from the config's
/// title file when given, otherwise as `Item<dataset id>`.
pub fn rulebook_for(run: &LoadedRun) -> Result<RuleBook> {
    let book = extract_rules(&run.checkpoint.params, &run.split.rows().train)?;
    let items = &run.split.train.ids().items;
    let labels = match &run.config.labels {
        Some(path) => ItemLabels::load(path, items)?,
        None => ItemLabels::new(
            (0..items.len() as u32)
                .filter_map(|i| items.label(i).map(|l| (i, format!("Item{l}"))))
                .collect(),
        ),
    };
    Ok(book.with_labels(labels))
}

/// Explanations for a user given by dataset label.
pub fn cmd_explain(checkpoint_path: &Path, user: &str, target: &ExplainTarget) -> Result<Vec<Explanation>> {
    let run = load_run(checkpoint_path)?;
    let book = rulebook_for(&run)?;
    let ids = run.split.train.ids().clone();
    let u = ids
        .users
        .get(user)
        .ok_or_else(|| Error::InvalidArgument(format!("unknown user `{user}`")))?;
    let rows = run.split.rows();
    let history = rows.train.row(u as usize);
    let scores = book.score_row(history);
    let ranking = rank_items(&scores, history);

    let items: Vec<(u32, Option<usize>)> = match target {
        ExplainTarget::Item(label) => {
            let i = ids
                .items
                .get(label)
                .ok_or_else(|| Error::InvalidArgument(format!("unknown item `{label}`")))?;
            vec![(i, ranking.iter().position(|&r| r == i).map(|p| p + 1))]
        }
        ExplainTarget::Top(n) => ranking.iter().take(*n).enumerate().map(|(p, &i)| (i, Some(p + 1))).collect(),
    };
    items
        .into_iter()
        .map(|(i, rank)| {
            let mut e = book.explain(history, i as usize)?;
            e.user = Some(u as usize);
            e.user_label = Some(user.to_owned());
            e.rank = rank;
            Ok(e)
        })
        .collect()
}

/// Extracts the rulebook of a checkpoint and writes it as JSON.
pub fn cmd_rules(checkpoint_path: &Path, out: Option<&Path>) -> Result<(RuleBook, PathBuf)> {
    let run = load_run(checkpoint_path)?;
    let book = rulebook_for(&run)?;
    let path = out.map(Path::to_owned).unwrap_or_else(|| run.run_dir.join(RULEBOOK_FILE));
    book.export(&path)?;
    Ok((book, path))
}

/// One line of a K-sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub k: usize,
    /// `(validation, test, seconds per epoch)`, or the error message of a failed run.
    pub outcome: std::result::Result<(f64, f64, f64), String>,
}

/// Removes repeated values, keeping the first occurrence.
pub fn dedup_keep_order(ks: &[usize]) -> Vec<usize> {
    let mut seen = std::collections::HashSet::new();
    ks.iter().copied().filter(|k| seen.insert(*k)).collect()
}

/// Tab-separated sweep table with a header line.
pub fn sweep_table(rows: &[SweepRow]) -> String {
    let mut out = String::from("K\tvalidation_ndcg\ttest_ndcg\tseconds_per_epoch\tstatus\n");
    for r in rows {
        match &r.outcome {
            Ok((v, t, s)) => out.push_str(&format!("{}\t{v:.6}\t{t:.6}\t{s:.3}\tok\n", r.k)),
            Err(e) => out.push_str(&format!("{}\t\t\t\terror: {}\n", r.k, e.replace(['\t', '\n'], " "))),
        }
    }
    out
}

/// Trains one model per distinct K on a shared split and seed.
/// A failing K is recorded and the sweep continues.
pub fn cmd_sweep_k(config: &RunConfig, ks: &[usize]) -> Result<(Vec<SweepRow>, PathBuf)> {
    let ks = dedup_keep_order(ks);
    if ks.is_empty() {
        return Err(Error::InvalidArgument("empty K list".into()));
    }
    let split = prepare(config)?;
    let sweep_dir = create_run_dir(&config.out, "sweep", config.seed)?;
    write_text(&sweep_dir.join(CONFIG_FILE), &config.to_string())?;
    let mut rows = Vec::new();
    for k in ks {
        let run_config = RunConfig { k, ..config.clone() };
        let outcome = (|| -> Result<(f64, f64, f64)> {
            let dir = sweep_dir.join(format!("k{k}"));
            fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
            let trained = train_in(&run_config, &split, &dir)?;
            let test = evaluate(&trained.fit.params, &split.rows(), config.eval_k, Fold::Test);
            let log = &trained.fit.log;
            let per_epoch = log.iter().map(|r| r.seconds).sum::<f64>() / log.len().max(1) as f64;
            Ok((trained.fit.best_validation, test.ndcg, per_epoch))
        })()
        .map_err(|e| e.to_string());
        rows.push(SweepRow { k, outcome });
        write_text(&sweep_dir.join(SWEEP_FILE), &sweep_table(&rows))?;
    }
    Ok((rows, sweep_dir))
}

pub fn cmd_gradcheck(config: &GradCheckConfig) -> Result<GradCheckReport> {
    grad_check(config)
}

/// Wall-clock timings of [`cmd_bench`].
#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub epochs: usize,
    /// Mean wall-clock seconds of one training epoch, validation scoring included.
    pub seconds_per_epoch: f64,
    /// Seconds to score and rank every test user.
    pub inference_seconds: f64,
    pub test_users: usize,
}

impl std::fmt::Display for BenchReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "train_seconds_per_epoch={:.3}", self.seconds_per_epoch)?;
        writeln!(f, "epochs_timed={}", self.epochs)?;
        writeln!(f, "inference_seconds={:.3}", self.inference_seconds)?;
        write!(f, "test_users={}", self.test_users)
    }
}

/// Times `epochs` training epochs and one full test-fold inference pass.
pub fn cmd_bench(config: &RunConfig, epochs: usize) -> Result<BenchReport> {
    if epochs == 0 {
        return Err(Error::InvalidArgument("bench needs at least one epoch".into()));
    }
    let split = prepare(config)?;
    let rows = split.rows();
    let train_config = crate::training::TrainConfig {
        max_epochs: epochs,
        patience: epochs,
        ..config.train_config()
    };
    let params = init(&config.model_config(split.n_items()))?;
    let fit = fit_from(&rows, params, &train_config, None::<&mut dyn Write>)?;
    let seconds_per_epoch = fit.log.iter().map(|r| r.seconds).sum::<f64>() / fit.log.len() as f64;

    let started = Instant::now();
    let metrics = evaluate(&fit.params, &rows, config.eval_k, Fold::Test);
    Ok(BenchReport {
        epochs: fit.log.len(),
        seconds_per_epoch,
        inference_seconds: started.elapsed().as_secs_f64(),
        test_users: metrics.users_evaluated,
    })
}
