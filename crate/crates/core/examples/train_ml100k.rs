//! Trains on MovieLens-100K and reports test NDCG@20 against popularity.
//!
//! Settings come from `LIA_*` variables on top of the defaults:
//!
//! ```text
//! LIA_SEED=1 LIA_K=500 cargo run --release --example train_ml100k -- data/ml-100k/u.data
//! ```

use std::env;
use std::io;

use lia::config::RunConfig;
use lia::dataset::Fold;
use lia::evaluation::{evaluate, evaluate_popularity};
use lia::pipeline::prepare;
use lia::training::fit;

fn main() -> lia::Result<()> {
    let mut config = RunConfig::resolve(None)?;
    let path = env::args().nth(1).unwrap_or_else(|| "data/ml-100k/u.data".into());
    config.set("data", &path)?;
    config.validate()?;
    print!("{config}");

    let split = prepare(&config)?;
    let model = config.model_config(split.n_items());
    let fitted = fit(&split, &config.train_config(), &model, Some(&mut io::stdout()))?;

    let rows = split.rows();
    println!("best epoch {} (validation {:.4})", fitted.best_epoch, fitted.best_validation);
    println!("LIA        {}", evaluate(&fitted.params, &rows, 20, Fold::Test));
    println!("popularity {}", evaluate_popularity(&rows, 20, Fold::Test));
    Ok(())
}
