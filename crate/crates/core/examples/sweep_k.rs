//! Trains one model per rule count on a shared split and prints the table.
//!
//! ```text
//! cargo run --release --example sweep_k -- data/ml-100k/u.data 500,1000,2000
//! ```

use std::env;

use lia::config::RunConfig;
use lia::pipeline::{cmd_sweep_k, sweep_table};

fn main() -> lia::Result<()> {
    let path = env::args().nth(1).unwrap_or_else(|| "data/ml-100k/u.data".into());
    let ks: Vec<usize> = env::args()
        .nth(2)
        .unwrap_or_else(|| "500,1000,2000".into())
        .split(',')
        .filter_map(|k| k.trim().parse().ok())
        .collect();
    let mut config = RunConfig::resolve(None)?;
    config.set("data", &path)?;
    let (rows, dir) = cmd_sweep_k(&config, &ks)?;
    print!("{}", sweep_table(&rows));
    println!("artifacts in {}", dir.display());
    Ok(())
}
