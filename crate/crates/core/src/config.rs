//! Flat `key = value` run configuration.
//!
//! Values are resolved in order: built-in defaults, then a config file, then
//! `LIA_<KEY>` environment variables (e.g. `LIA_LR=0.003`), then command-line
//! flags. Unknown keys in a file are rejected.
//!
//! ```text
//! # lia.conf
//! data = data/ml-100k/u.data
//! k = 2000
//! gate_mode = learnable
//! ```

use std::fmt::{self, Write as _};
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::dataset::Format;
use crate::error::{Error, Result};
use crate::logic::TAU;
use crate::model::{ModelConfig, DEFAULT_ACTIVE_LITERALS, DEFAULT_BACKGROUND_WEIGHT, DEFAULT_RULES};
use crate::training::{GateMode, TrainConfig};

/// Prefix of environment overrides.
pub const ENV_PREFIX: &str = "LIA_";

/// Every accepted key, in the order they are written out.
pub const KEYS: [&str; 15] = [
    "data",
    "format",
    "labels",
    "out",
    "seed",
    "k",
    "tau",
    "active_literals",
    "background",
    "lr",
    "batch",
    "epochs",
    "patience",
    "gate_mode",
    "eval_k",
];

/// Resolved settings of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub data: Option<PathBuf>,
    pub format: Format,
    /// Optional item-title sidecar such as MovieLens `u.item`.
    pub labels: Option<PathBuf>,
    /// Parent directory of per-run output directories.
    pub out: PathBuf,
    pub seed: u64,
    /// Number of rules.
    pub k: usize,
    pub tau: f64,
    pub active_literals: usize,
    pub background: f64,
    pub lr: f64,
    pub batch: usize,
    pub epochs: usize,
    pub patience: usize,
    pub gate_mode: GateMode,
    /// Ranking cutoff of the validation metric.
    pub eval_k: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let train = TrainConfig::default();
        Self {
            data: None,
            format: Format::MovielensTab,
            labels: None,
            out: PathBuf::from("out"),
            seed: 0,
            k: DEFAULT_RULES,
            tau: TAU,
            active_literals: DEFAULT_ACTIVE_LITERALS,
            background: DEFAULT_BACKGROUND_WEIGHT,
            lr: train.learning_rate,
            batch: train.batch_size,
            epochs: train.max_epochs,
            patience: train.patience,
            gate_mode: train.gate_mode,
            eval_k: train.eval_k,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::InvalidArgument(format!("bad value `{value}` for `{key}`")))
}

fn optional_path(value: &str) -> Option<PathBuf> {
    (!value.is_empty()).then(|| PathBuf::from(value))
}

impl RunConfig {
    /// Sets one key from its text form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key {
            "data" => self.data = optional_path(value),
            "format" => self.format = value.parse()?,
            "labels" => self.labels = optional_path(value),
            "out" => self.out = PathBuf::from(value),
            "seed" => self.seed = parse(key, value)?,
            "k" => self.k = parse(key, value)?,
            "tau" => self.tau = parse(key, value)?,
            "active_literals" => self.active_literals = parse(key, value)?,
            "background" => self.background = parse(key, value)?,
            "lr" => self.lr = parse(key, value)?,
            "batch" => self.batch = parse(key, value)?,
            "epochs" => self.epochs = parse(key, value)?,
            "patience" => self.patience = parse(key, value)?,
            "gate_mode" => self.gate_mode = value.parse()?,
            "eval_k" => self.eval_k = parse(key, value)?,
            other => return Err(Error::InvalidArgument(format!("unknown config key `{other}`"))),
        }
        Ok(())
    }

    /// Text form of one key, as accepted by [`RunConfig::set`].
    pub fn get(&self, key: &str) -> Option<String> {
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
        Some(match key {
            "data" => path(&self.data),
            "format" => self.format.to_string(),
            "labels" => path(&self.labels),
            "out" => self.out.display().to_string(),
            "seed" => self.seed.to_string(),
            "k" => self.k.to_string(),
            "tau" => self.tau.to_string(),
            "active_literals" => self.active_literals.to_string(),
            "background" => self.background.to_string(),
            "lr" => self.lr.to_string(),
            "batch" => self.batch.to_string(),
            "epochs" => self.epochs.to_string(),
            "patience" => self.patience.to_string(),
            "gate_mode" => self.gate_mode.to_string(),
            "eval_k" => self.eval_k.to_string(),
            _ => return None,
        })
    }

    /// Applies `key = value` lines; blank lines and `#` comments are skipped.
    pub fn apply_text(&mut self, text: &str, origin: &Path) -> Result<()> {
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
                path: origin.to_owned(),
                line: n + 1,
                message: "expected `key = value`".into(),
            })?;
            self.set(key.trim(), value).map_err(|e| Error::Parse {
                path: origin.to_owned(),
                line: n + 1,
                message: e.to_string(),
            })?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        self.apply_text(&text, path)
    }

    /// Applies `LIA_<KEY>` variables found by `lookup`; other variables are ignored.
    pub fn apply_env(&mut self, lookup: impl Fn(&str) -> Option<String>) -> Result<()> {
        for key in KEYS {
            let var = format!("{ENV_PREFIX}{}", key.to_uppercase());
            if let Some(value) = lookup(&var) {
                self.set(key, &value)
                    .map_err(|e| Error::InvalidArgument(format!("{var}: {e}")))?;
            }
        }
        Ok(())
    }

    /// Defaults, then `file`, then the process environment.
    pub fn resolve(file: Option<&Path>) -> Result<Self> {
        let mut config = Self::default();
        if let Some(path) = file {
            config.apply_file(path)?;
        }
        config.apply_env(|var| std::env::var(var).ok())?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::InvalidArgument("k must be >= 1".into()));
        }
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return Err(Error::InvalidArgument("tau must lie in (0, 1)".into()));
        }
        self.train_config().validate()
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            learning_rate: self.lr,
            batch_size: self.batch,
            max_epochs: self.epochs,
            patience: self.patience,
            seed: self.seed,
            gate_mode: self.gate_mode,
            eval_k: self.eval_k,
            ..TrainConfig::default()
        }
    }

    pub fn model_config(&self, n_items: usize) -> ModelConfig {
        ModelConfig {
            n_rules: self.k,
            n_items,
            seed: self.seed,
            active_literals_per_rule: self.active_literals,
            background_weight: self.background,
            tau: self.tau,
        }
    }

    /// The data path, or an error naming the missing key.
    pub fn data_path(&self) -> Result<&Path> {
        self.data
            .as_deref()
            .ok_or_else(|| Error::InvalidArgument("no dataset given (`--data` or `data = ...`)".into()))
    }
}

impl fmt::Display for RunConfig {
    /// The resolved config in file form; reading it back yields the same config.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut text = String::new();
        for key in KEYS {
            let _ = writeln!(text, "{key} = {}", self.get(key).unwrap_or_default());
        }
        f.write_str(&text)
    }
}
