//! Loads an interaction log, prints its statistics and the 70/10/20 split sizes.
//!
//! ```text
//! cargo run --release --example load_and_split -- data/ml-100k/u.data
//! ```

use std::env;

use lia::dataset::{load_interactions, split, Format};

fn main() -> lia::Result<()> {
    let path = env::args().nth(1).unwrap_or_else(|| "data/ml-100k/u.data".into());
    let format: Format = env::args().nth(2).as_deref().unwrap_or("movielens-tab").parse()?;
    let data = load_interactions(&path, format)?;
    println!("{}", data.stats());

    let split = split(&data, 0);
    println!(
        "train={} validation={} test={}",
        split.train.len(),
        split.validation.len(),
        split.test.len()
    );
    let rows = split.rows();
    let empty = rows.train.rows().filter(|r| r.is_empty()).count();
    println!("users without training history: {empty}");
    Ok(())
}
