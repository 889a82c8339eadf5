//! Times training epochs and one full test-fold inference pass.
//!
//! ```text
//! cargo run --release --example bench -- data/ml-100k/u.data
//! ```

use std::env;

use lia::config::RunConfig;
use lia::pipeline::cmd_bench;

fn main() -> lia::Result<()> {
    let path = env::args().nth(1).unwrap_or_else(|| "data/ml-100k/u.data".into());
    let mut config = RunConfig::resolve(None)?;
    config.set("data", &path)?;
    println!("{}", cmd_bench(&config, 3)?);
    Ok(())
}
