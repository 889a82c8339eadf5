//! Compares the hand-written backward pass with central finite differences
//! on random small instances.

use lia::training::{grad_check, GradCheckConfig};

fn main() -> lia::Result<()> {
    let report = grad_check(&GradCheckConfig::default())?;
    println!("{report}");
    Ok(())
}
