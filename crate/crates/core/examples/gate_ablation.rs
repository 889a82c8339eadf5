//! Learnable gates against gates frozen half AND, half OR, on one split.
//!
//! ```text
//! cargo run --release --example gate_ablation -- data/ml-100k/u.data
//! ```

use std::env;

use lia::dataset::{load_interactions, split, Format, Fold};
use lia::evaluation::evaluate;
use lia::model::ModelConfig;
use lia::training::{fit, GateMode, TrainConfig};

fn main() -> lia::Result<()> {
    let path = env::args().nth(1).unwrap_or_else(|| "data/ml-100k/u.data".into());
    let data = load_interactions(&path, Format::MovielensTab)?;
    let split = split(&data, 0);
    let rows = split.rows();
    let model = ModelConfig::new(2000, split.n_items(), 0);
    for gate_mode in [GateMode::Learnable, GateMode::FixedHalf] {
        let config = TrainConfig { gate_mode, ..TrainConfig::default() };
        let fitted = fit(&split, &config, &model, None)?;
        let test = evaluate(&fitted.params, &rows, 20, Fold::Test);
        println!("{gate_mode:<10} test NDCG@20 {:.4} (best epoch {})", test.ndcg, fitted.best_epoch);
    }
    Ok(())
}
