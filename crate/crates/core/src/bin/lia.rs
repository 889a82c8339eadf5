//! `lia` command-line interface.
//!
//! Exit codes: 0 success, 1 internal error, 2 bad input.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use lia::config::RunConfig;
use lia::dataset::{load_interactions, Fold};
use lia::evaluation::evaluate_popularity;
use lia::pipeline::{
    cmd_bench, cmd_eval, cmd_explain, cmd_gradcheck, cmd_rules, cmd_sweep_k, cmd_train, metrics_file_name,
    sweep_table, ExplainTarget,
};
use lia::training::GradCheckConfig;
use lia::{Error, Result};

#[derive(Parser)]
#[command(name = "lia", version, about = "Interpretable recommendation with learned logical rules")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print dataset statistics.
    Stats(RunArgs),
    /// Train a model and write a run directory.
    Train(RunArgs),
    /// Score a checkpoint on a fold.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value = "test")]
        fold: Fold,
        #[arg(long, default_value_t = 20)]
        k: usize,
        /// Also report the popularity baseline on the same fold.
        #[arg(long)]
        baseline: bool,
    },
    /// Explain one item or the top recommendations for a user.
    Explain {
        #[arg(long)]
        checkpoint: PathBuf,
        /// User id as it appears in the dataset.
        #[arg(long)]
        user: String,
        /// Item id as it appears in the dataset.
        #[arg(long, conflicts_with = "top")]
        item: Option<String>,
        #[arg(long, default_value_t = 5)]
        top: usize,
        /// Emit JSON instead of text.
        #[arg(long)]
        json: bool,
    },
    /// Extract and export the pruned rule set.
    Rules {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Output path; defaults to rulebook.json in the run directory.
        #[arg(long)]
        output: Option<PathBuf>,
        /// Number of rules to print.
        #[arg(long, default_value_t = 10)]
        show: usize,
    },
    /// Train one model per rule count on a shared split.
    SweepK {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, value_delimiter = ',', default_value = "500,1000,2000")]
        ks: Vec<usize>,
    },
    /// Compare the backward pass with finite differences.
    Gradcheck {
        #[arg(long, default_value_t = 100)]
        trials: usize,
        #[arg(long, default_value_t = 6)]
        items: usize,
        #[arg(long, default_value_t = 4)]
        rules: usize,
        #[arg(long, default_value_t = 3)]
        batch: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Time training epochs and full test inference.
    Bench {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long = "bench-epochs", default_value_t = 3)]
        bench_epochs: usize,
    },
}

/// Run settings; flags override `--config` and `LIA_*` variables.
#[derive(Args)]
struct RunArgs {
    /// Flat `key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    data: Option<String>,
    #[arg(long)]
    format: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    /// Number of rules.
    #[arg(long)]
    k: Option<String>,
    #[arg(long)]
    tau: Option<String>,
    #[arg(long)]
    lr: Option<String>,
    #[arg(long)]
    batch: Option<String>,
    #[arg(long)]
    epochs: Option<String>,
    #[arg(long)]
    patience: Option<String>,
    #[arg(long = "gate-mode")]
    gate_mode: Option<String>,
    #[arg(long)]
    out: Option<String>,
    #[arg(long)]
    labels: Option<String>,
}

impl RunArgs {
    fn resolve(&self) -> Result<RunConfig> {
        let mut config = RunConfig::resolve(self.config.as_deref())?;
        let flags = [
            ("data", &self.data),
            ("format", &self.format),
            ("seed", &self.seed),
            ("k", &self.k),
            ("tau", &self.tau),
            ("lr", &self.lr),
            ("batch", &self.batch),
            ("epochs", &self.epochs),
            ("patience", &self.patience),
            ("gate_mode", &self.gate_mode),
            ("out", &self.out),
            ("labels", &self.labels),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                config.set(key, v)?;
            }
        }
        config.validate()?;
        Ok(config)
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Stats(args) => {
            let config = args.resolve()?;
            let data = load_interactions(config.data_path()?, config.format)?;
            println!("{}", data.stats());
        }
        Command::Train(args) => {
            let config = args.resolve()?;
            let outcome = cmd_train(&config)?;
            println!("run directory: {}", outcome.run_dir.display());
            println!("best epoch: {}", outcome.fit.best_epoch);
            println!("{}", outcome.validation);
        }
        Command::Eval { checkpoint, fold, k, baseline } => {
            let metrics = cmd_eval(&checkpoint, fold, k)?;
            println!("{metrics}");
            if baseline {
                let run = lia::pipeline::load_run(&checkpoint)?;
                println!("popularity baseline:\n{}", evaluate_popularity(&run.split.rows(), k, fold));
            }
            let dir = checkpoint.parent().unwrap_or(Path::new("."));
            println!("written: {}", dir.join(metrics_file_name(fold, k)).display());
        }
        Command::Explain { checkpoint, user, item, top, json } => {
            let target = match item {
                Some(i) => ExplainTarget::Item(i),
                None => ExplainTarget::Top(top),
            };
            let explanations = cmd_explain(&checkpoint, &user, &target)?;
            if json {
                let text = serde_json::to_string_pretty(&explanations)
                    .map_err(|e| Error::Contract(e.to_string()))?;
                println!("{text}");
            } else {
                for e in &explanations {
                    println!("{e}\n");
                }
            }
        }
        Command::Rules { checkpoint, output, show } => {
            let (book, path) = cmd_rules(&checkpoint, output.as_deref())?;
            println!(
                "{} live rules, {} folded into the bias; written to {}",
                book.rules.len(),
                book.folded.len(),
                path.display()
            );
            let mut by_rate: Vec<_> = book.rules.iter().collect();
            by_rate.sort_by(|a, b| b.activation_rate.total_cmp(&a.activation_rate).then(a.id.cmp(&b.id)));
            for entry in by_rate.into_iter().take(show) {
                println!("rule {:>5}  rate {:.3}  {}", entry.id, entry.activation_rate, book.render(entry));
            }
        }
        Command::SweepK { run, ks } => {
            let config = run.resolve()?;
            let (rows, dir) = cmd_sweep_k(&config, &ks)?;
            print!("{}", sweep_table(&rows));
            println!("written: {}", dir.join(lia::pipeline::SWEEP_FILE).display());
        }
        Command::Gradcheck { trials, items, rules, batch, seed } => {
            let report = cmd_gradcheck(&GradCheckConfig {
                trials,
                n_items: items,
                n_rules: rules,
                batch,
                seed,
                ..GradCheckConfig::default()
            })?;
            println!("{report}");
            if !report.passed() {
                return Err(Error::Contract("gradient check failed".into()));
            }
        }
        Command::Bench { run, bench_epochs } => {
            let config = run.resolve()?;
            println!("{}", cmd_bench(&config, bench_epochs)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_bad_input() { 2 } else { 1 })
        }
    }
}

