#![allow(dead_code)]

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use lia::config::RunConfig;

/// Two taste clusters over 24 items: users 0..20 like items 0..12, the rest
/// like items 12..24, each with a deterministic pattern of gaps.
pub fn toy_log() -> String {
    let mut text = String::new();
    for u in 0..40u32 {
        let offset = if u < 20 { 0 } else { 12 };
        for j in 0..12u32 {
            if (u * 7 + j * 3) % 5 != 0 {
                let _ = writeln!(text, "u{u}\ti{}\t5\t0", offset + j);
            }
        }
    }
    text
}

pub fn write_toy(dir: &Path) -> PathBuf {
    let path = dir.join("toy.tsv");
    std::fs::write(&path, toy_log()).unwrap();
    path
}

pub fn toy_config(dir: &Path) -> RunConfig {
    RunConfig {
        data: Some(write_toy(dir)),
        out: dir.join("out"),
        k: 16,
        active_literals: 3,
        epochs: 4,
        patience: 4,
        batch: 8,
        lr: 0.01,
        ..RunConfig::default()
    }
}
