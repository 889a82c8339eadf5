//! Acceptance suite: one PASS/FAIL/SKIP line per criterion.
//!
//! Data is looked up in `LIA_ML100K_DIR` (default `<workspace>/data/ml-100k`,
//! file `u.data`) and `LIA_ML1M_DIR` (file `ratings.dat`). Criteria that need a
//! missing dataset are reported as SKIP. Any FAIL makes the process exit 1.

use std::env;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use lia::config::RunConfig;
use lia::dataset::{load_interactions, split, Format, Fold, SplitDataset};
use lia::evaluation::{evaluate, evaluate_popularity};
use lia::logic::{boolean_eval, BinarizedRule, TAU};
use lia::model::{forward_continuous, forward_discrete, forward_grafted, ModelParams};
use lia::pipeline::{cmd_bench, cmd_sweep_k, sweep_table, train_in};
use lia::rulebook::extract_rules;
use lia::training::{grad_check, GateMode, GradCheckConfig};

const SEEDS: [u64; 3] = [0, 1, 2];

enum Outcome {
    Pass(String),
    Fail(String),
    Skip(String),
}

struct Suite {
    failures: usize,
}

impl Suite {
    fn report(&mut self, id: u32, name: &str, outcome: Outcome) {
        let (tag, detail) = match outcome {
            Outcome::Pass(d) => ("PASS", d),
            Outcome::Fail(d) => {
                self.failures += 1;
                ("FAIL", d)
            }
            Outcome::Skip(d) => ("SKIP", d),
        };
        println!("{tag} [{id}] {name}: {detail}");
    }
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Outcome::Pass(detail)
    } else {
        Outcome::Fail(detail)
    }
}

fn workspace_data(var: &str, default_dir: &str, file: &str) -> Option<PathBuf> {
    let dir = env::var_os(var)
        .map(PathBuf::from)
        .unwrap_or_else(|| Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data").join(default_dir));
    let path = dir.join(file);
    path.is_file().then_some(path)
}

fn boolean_reduction() -> Outcome {
    let started = Instant::now();
    let (mut cases, mut failures) = (0usize, 0usize);
    for n in 1..=4usize {
        let n_weights = 3usize.pow(n as u32);
        for code in 0..n_weights {
            let w: Vec<f64> = (0..n).map(|i| ((code / 3usize.pow(i as u32)) % 3) as f64 - 1.0).collect();
            for gate in [60.0, -60.0] {
                let mut params = ModelParams::zeros(1, n);
                params.rule_weights.row_mut(0).assign(&ndarray::ArrayView1::from(&w));
                params.gates[0] = gate;
                let rule = BinarizedRule::from_weights(&w, gate, TAU);
                let rows: Vec<Vec<u32>> = (0..1u32 << n)
                    .map(|bits| (0..n as u32).filter(|i| bits >> i & 1 == 1).collect())
                    .collect();
                let refs: Vec<&[u32]> = rows.iter().map(Vec::as_slice).collect();
                let relaxed = match forward_continuous(&params, &refs) {
                    Ok(out) => out.trace.continuous,
                    Err(e) => return Outcome::Fail(e.to_string()),
                };
                let discrete = forward_discrete(&params, &refs).activations;
                for (b, row) in rows.iter().enumerate() {
                    let x: Vec<bool> = (0..n as u32).map(|i| row.contains(&i)).collect();
                    let truth = boolean_eval(&x, &rule);
                    cases += 1;
                    if (relaxed[[b, 0]] > 0.5) != truth || (discrete[[b, 0]] == 1.0) != truth {
                        failures += 1;
                    }
                }
            }
        }
    }
    let secs = started.elapsed().as_secs_f64();
    check(
        failures == 0 && secs < 10.0,
        format!("{cases} cases, {failures} failures, {secs:.2}s"),
    )
}

fn gradient_suite() -> Outcome {
    let started = Instant::now();
    let config = GradCheckConfig::default();
    match grad_check(&config) {
        Ok(report) => {
            let secs = started.elapsed().as_secs_f64();
            check(
                report.passed() && config.trials >= 100 && secs < 30.0,
                format!("{report}, {secs:.2}s").replace('\n', ";"),
            )
        }
        Err(e) => Outcome::Fail(e.to_string()),
    }
}

fn dataset_statistics(ml100k: Option<&Path>, ml1m: Option<&Path>) -> Outcome {
    let Some(path) = ml100k else {
        return Outcome::Skip("ML100k not found".into());
    };
    let s = match load_interactions(path, Format::MovielensTab) {
        Ok(d) => d.stats(),
        Err(e) => return Outcome::Fail(e.to_string()),
    };
    let ok100 = s.n_users == 943 && s.n_items == 1682 && format!("{:.2}", 100.0 * s.density) == "6.30";
    let mut detail = format!("ML100k {s}");
    let ok1m = match ml1m {
        None => {
            detail.push_str("; ML1M not provided");
            true
        }
        Some(p) => match load_interactions(p, Format::MovielensDat) {
            Ok(d) => {
                let s = d.stats();
                detail.push_str(&format!("; ML1M {s}"));
                s.n_users == 6040 && s.n_items == 3706 && format!("{:.2}", 100.0 * s.density) == "4.47"
            }
            Err(e) => {
                detail.push_str(&format!("; ML1M error: {e}"));
                false
            }
        },
    };
    check(ok100 && ok1m, detail)
}

struct Trained {
    seed: u64,
    split: SplitDataset,
    params: ModelParams,
    test: f64,
    popularity: f64,
    seconds: f64,
}

fn train(config: &RunConfig, seed: u64, gate_mode: GateMode, data: &lia::dataset::InteractionSet) -> lia::Result<Trained> {
    let config = RunConfig {
        seed,
        gate_mode,
        ..config.clone()
    };
    let started = Instant::now();
    let split = split(data, seed);
    let dir = tempfile::tempdir().map_err(|e| lia::Error::Contract(e.to_string()))?;
    let outcome = train_in(&config, &split, dir.path())?;
    let rows = split.rows();
    let test = evaluate(&outcome.fit.params, &rows, 20, Fold::Test).ndcg;
    let popularity = evaluate_popularity(&rows, 20, Fold::Test).ndcg;
    Ok(Trained {
        seed,
        split,
        params: outcome.fit.params,
        test,
        popularity,
        seconds: started.elapsed().as_secs_f64(),
    })
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let all: Vec<f64> = v.collect();
    all.iter().sum::<f64>() / all.len() as f64
}

fn accuracy(runs: &[Trained]) -> Outcome {
    let lia = mean(runs.iter().map(|r| r.test));
    let pop = mean(runs.iter().map(|r| r.popularity));
    let minutes = runs.iter().map(|r| r.seconds).sum::<f64>() / 60.0;
    let per_seed: Vec<String> = runs.iter().map(|r| format!("seed {} {:.4}", r.seed, r.test)).collect();
    check(
        lia >= 0.33 && lia > pop && minutes <= 30.0,
        format!(
            "mean test NDCG@20 {lia:.4} (popularity {pop:.4}; {}), {minutes:.1} min",
            per_seed.join(", ")
        ),
    )
}

fn faithfulness(run: &Trained) -> Outcome {
    let rows = run.split.rows();
    let users: Vec<&[u32]> = rows.train.rows().collect();
    let discrete = forward_discrete(&run.params, &users).scores;
    let grafted = match forward_grafted(&run.params, &users) {
        Ok((g, _)) => g,
        Err(e) => return Outcome::Fail(e.to_string()),
    };
    let book = match extract_rules(&run.params, &rows.train) {
        Ok(b) => b,
        Err(e) => return Outcome::Fail(e.to_string()),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let (mut graft_fail, mut explain_fail) = (0, 0);
    for _ in 0..1000 {
        let u = rng.random_range(0..users.len());
        let j = rng.random_range(0..run.params.n_items());
        if grafted[[u, j]].to_bits() != discrete[[u, j]].to_bits() {
            graft_fail += 1;
        }
        match book.explain(users[u], j) {
            Ok(e) if e.total.to_bits() == discrete[[u, j]].to_bits() => {}
            _ => explain_fail += 1,
        }
    }
    let all_equal = grafted == discrete;
    check(
        graft_fail == 0 && explain_fail == 0 && all_equal,
        format!(
            "1000 probes: {graft_fail} grafted mismatches, {explain_fail} explanation mismatches; full matrix equal: {all_equal}"
        ),
    )
}

fn dead_nodes(run: &Trained) -> Outcome {
    let rows = run.split.rows();
    let book = match extract_rules(&run.params, &rows.train) {
        Ok(b) => b,
        Err(e) => return Outcome::Fail(e.to_string()),
    };
    let rates_ok = book.rules.iter().all(|e| e.activation_rate > 0.0 && e.activation_rate < 1.0);
    let folded_bias = book.effective_bias();
    let mut max_diff: f64 = 0.0;
    for row in rows.train.rows() {
        let discrete = forward_discrete(&run.params, &[row]).scores;
        let mut pruned = folded_bias.clone();
        for entry in book.rules.iter().filter(|e| e.rule.fires(row)) {
            for (s, w) in pruned.iter_mut().zip(&entry.readout) {
                *s += w;
            }
        }
        for (j, s) in pruned.iter().enumerate() {
            max_diff = max_diff.max((s - discrete[[0, j]]).abs());
        }
    }
    check(
        rates_ok && max_diff <= 1e-12,
        format!(
            "{} live rules, {} folded, rates in (0,1): {rates_ok}, max |folded - model| {max_diff:.3e}",
            book.rules.len(),
            book.folded.len()
        ),
    )
}

fn ablation(learnable: &[Trained], fixed: &[Trained]) -> Outcome {
    let a = mean(learnable.iter().map(|r| r.test));
    let b = mean(fixed.iter().map(|r| r.test));
    check(
        a - b >= 0.01,
        format!("learnable {a:.4} vs fixed-half {b:.4} (difference {:+.4})", a - b),
    )
}

fn k_sweep(config: &RunConfig) -> Outcome {
    let dir = match tempfile::tempdir() {
        Ok(d) => d,
        Err(e) => return Outcome::Fail(e.to_string()),
    };
    let config = RunConfig {
        out: dir.path().to_owned(),
        ..config.clone()
    };
    match cmd_sweep_k(&config, &[500, 1000, 2000]) {
        Ok((rows, sweep_dir)) => {
            let table = sweep_table(&rows);
            let written = sweep_dir.join(lia::pipeline::SWEEP_FILE).is_file();
            let complete = rows.len() == 3 && rows.iter().all(|r| r.outcome.is_ok());
            for line in table.lines() {
                println!("      {line}");
            }
            check(complete && written, format!("{} rows, table written: {written}", rows.len()))
        }
        Err(e) => Outcome::Fail(e.to_string()),
    }
}

fn timings(config: &RunConfig) -> Outcome {
    match cmd_bench(config, 3) {
        Ok(b) => check(
            b.seconds_per_epoch <= 5.0 && b.inference_seconds <= 5.0,
            format!(
                "{:.2} s/epoch over {} epochs, full-test inference {:.2} s",
                b.seconds_per_epoch, b.epochs, b.inference_seconds
            ),
        ),
        Err(e) => Outcome::Fail(e.to_string()),
    }
}

fn main() {
    let mut suite = Suite { failures: 0 };
    let ml100k = workspace_data("LIA_ML100K_DIR", "ml-100k", "u.data");
    let ml1m = workspace_data("LIA_ML1M_DIR", "ml-1m", "ratings.dat");

    suite.report(1, "boolean reduction", boolean_reduction());
    suite.report(2, "gradient suite", gradient_suite());
    suite.report(6, "dataset statistics", dataset_statistics(ml100k.as_deref(), ml1m.as_deref()));

    let Some(path) = ml100k else {
        for (id, name) in [
            (3, "grafting identity and faithfulness"),
            (4, "ML100k accuracy"),
            (5, "gate ablation"),
            (7, "dead-node contract"),
            (8, "K sweep"),
            (9, "timings"),
        ] {
            suite.report(id, name, Outcome::Skip("ML100k not found".into()));
        }
        std::process::exit(i32::from(suite.failures > 0));
    };
    let config = RunConfig { data: Some(path.clone()), ..RunConfig::default() };
    let data = load_interactions(&path, Format::MovielensTab).expect("loaded above");

    let learnable: Vec<Trained> = match SEEDS
        .iter()
        .map(|&s| train(&config, s, GateMode::Learnable, &data))
        .collect::<lia::Result<_>>()
    {
        Ok(r) => r,
        Err(e) => {
            for (id, name) in [(3, "grafting identity and faithfulness"), (4, "ML100k accuracy"), (5, "gate ablation"), (7, "dead-node contract")] {
                suite.report(id, name, Outcome::Fail(format!("training failed: {e}")));
            }
            Vec::new()
        }
    };
    if !learnable.is_empty() {
        suite.report(3, "grafting identity and faithfulness", faithfulness(&learnable[0]));
        suite.report(4, "ML100k accuracy", accuracy(&learnable));
        suite.report(7, "dead-node contract", dead_nodes(&learnable[0]));
        let fixed: lia::Result<Vec<Trained>> = SEEDS
            .iter()
            .map(|&s| train(&config, s, GateMode::FixedHalf, &data))
            .collect();
        match fixed {
            Ok(fixed) => suite.report(5, "gate ablation", ablation(&learnable, &fixed)),
            Err(e) => suite.report(5, "gate ablation", Outcome::Fail(e.to_string())),
        }
    }
    suite.report(8, "K sweep", k_sweep(&config));
    suite.report(9, "timings", timings(&config));

    println!("{} failure(s)", suite.failures);
    std::process::exit(i32::from(suite.failures > 0));
}
