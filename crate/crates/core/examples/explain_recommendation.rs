//! Trains a small model, extracts its rules and explains a user's top items.
//! Every explanation total equals the model's score for that item.
//!
//! ```text
//! cargo run --release --example explain_recommendation -- data/ml-100k/u.data data/ml-100k/u.item
//! ```

use std::env;

use lia::dataset::{load_interactions, split, Format};
use lia::evaluation::top_k;
use lia::model::{forward_discrete, ModelConfig};
use lia::rulebook::{extract_rules, ItemLabels};
use lia::training::{fit, TrainConfig};

fn main() -> lia::Result<()> {
    let path = env::args().nth(1).unwrap_or_else(|| "data/ml-100k/u.data".into());
    let labels = env::args().nth(2);
    let data = load_interactions(&path, Format::MovielensTab)?;
    let split = split(&data, 0);
    let config = TrainConfig { max_epochs: 5, ..TrainConfig::default() };
    let fitted = fit(&split, &config, &ModelConfig::new(500, split.n_items(), 0), None)?;

    let rows = split.rows();
    let mut book = extract_rules(&fitted.params, &rows.train)?;
    if let Some(labels) = labels {
        book = book.with_labels(ItemLabels::load(labels, &split.train.ids().items)?);
    }
    println!("{} live rules, {} folded into the bias\n", book.rules.len(), book.folded.len());

    let user = 0;
    let history = rows.train.row(user);
    let scores = forward_discrete(&fitted.params, &[history]).scores;
    for (rank, item) in top_k(&book.score_row(history), history, 3).into_iter().enumerate() {
        let mut e = book.explain(history, item as usize)?;
        e.user = Some(user);
        e.rank = Some(rank + 1);
        assert_eq!(e.total, scores[[0, item as usize]]);
        println!("{e}\n");
    }
    Ok(())
}
