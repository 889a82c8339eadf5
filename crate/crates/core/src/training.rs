//! Multinomial cross-entropy, Adam with weight clipping, and the epoch loop.

use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::time::Instant;

use ndarray::{Array1, Array2, ArrayView2, Zip};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::dataset::{Fold, SplitDataset, SplitRows};
use crate::error::{Error, Result};
use crate::evaluation::{evaluate, DEFAULT_K};
use crate::logic::TAU;
use crate::model::{
    backward, forward_grafted, grafted_surrogate_scores, init, Gradients, ModelConfig, ModelParams,
};
use crate::rulebook::count_live_rules;

/// How rule operators are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GateMode {
    /// Each rule learns its own gate.
    Learnable,
    /// Gates frozen: first half AND (`g = +1`), second half OR (`g = -1`).
    FixedHalf,
}

impl FromStr for GateMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "learnable" => Ok(GateMode::Learnable),
            "fixed-half" | "fixed" => Ok(GateMode::FixedHalf),
            other => Err(Error::InvalidArgument(format!(
                "unknown gate mode `{other}` (expected learnable or fixed-half)"
            ))),
        }
    }
}

impl fmt::Display for GateMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GateMode::Learnable => "learnable",
            GateMode::FixedHalf => "fixed-half",
        })
    }
}

/// Default minibatch size.
pub const DEFAULT_BATCH_SIZE: usize = 128;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub seed: u64,
    pub gate_mode: GateMode,
    /// Cutoff of the validation metric used for early stopping.
    pub eval_k: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            batch_size: DEFAULT_BATCH_SIZE,
            max_epochs: 200,
            patience: 10,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            seed: 0,
            gate_mode: GateMode::Learnable,
            eval_k: DEFAULT_K,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidArgument("learning_rate must be finite and >= 0".into()));
        }
        if self.patience == 0 || self.batch_size == 0 || self.eval_k == 0 {
            return Err(Error::InvalidArgument("patience, batch_size and eval_k must be >= 1".into()));
        }
        Ok(())
    }
}

/// `-(1/|B|) Σ_u x_uᵀ log softmax(ŝ_u)` over rows with at least one positive.
pub fn multinomial_ce(scores: ArrayView2<'_, f64>, rows: &[&[u32]]) -> Result<f64> {
    let mut total = 0.0;
    let mut counted = 0usize;
    for (u, row) in rows.iter().enumerate() {
        if row.is_empty() {
            continue;
        }
        let s = scores.row(u);
        let max = s.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let log_z = max + s.iter().map(|&v| (v - max).exp()).sum::<f64>().ln();
        total += row.iter().map(|&i| log_z - s[i as usize]).sum::<f64>();
        counted += 1;
    }
    if counted == 0 {
        return Err(Error::EmptyBatch);
    }
    Ok(total / counted as f64)
}

/// Gradient of [`multinomial_ce`]: `(n_u·softmax(ŝ_u) − x_u) / |B|` per row;
/// rows without positives get zero.
pub fn loss_grad(scores: ArrayView2<'_, f64>, rows: &[&[u32]]) -> Array2<f64> {
    let counted = rows.iter().filter(|r| !r.is_empty()).count().max(1) as f64;
    let mut grad = Array2::zeros(scores.raw_dim());
    for (u, row) in rows.iter().enumerate() {
        if row.is_empty() {
            continue;
        }
        let s = scores.row(u);
        let max = s.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let mut g = grad.row_mut(u);
        Zip::from(&mut g).and(&s).for_each(|gj, &sj| *gj = (sj - max).exp());
        let z: f64 = g.sum();
        let n_pos = row.len() as f64;
        g.mapv_inplace(|e| n_pos * e / z);
        for &i in row.iter() {
            g[i as usize] -= 1.0;
        }
        g.mapv_inplace(|v| v / counted);
    }
    grad
}

/// First and second moments for every parameter group.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub first: Gradients,
    pub second: Gradients,
    pub step: u64,
}

impl AdamState {
    pub fn new(params: &ModelParams) -> Self {
        Self {
            first: Gradients::zeros_like(params),
            second: Gradients::zeros_like(params),
            step: 0,
        }
    }
}

fn adam_group(
    param: &mut [f64],
    grad: &[f64],
    m: &mut [f64],
    v: &mut [f64],
    lr_t: f64,
    config: &AdamConfig,
) {
    let (b1, b2) = (config.beta1, config.beta2);
    for (((p, &g), m), v) in param.iter_mut().zip(grad).zip(m.iter_mut()).zip(v.iter_mut()) {
        *m = b1 * *m + (1.0 - b1) * g;
        *v = b2 * *v + (1.0 - b2) * g * g;
        *p -= lr_t * *m / (v.sqrt() + config.eps_hat);
    }
}

/// Bias-corrected Adam over all four groups, followed by [`clip_weights`].
pub fn adam_step(
    params: &mut ModelParams,
    grads: &Gradients,
    state: &mut AdamState,
    config: &TrainConfig,
) -> Result<()> {
    for (name, g) in grads.groups() {
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteGradient(name));
        }
    }
    if grads.rule_weights.dim() != params.rule_weights.dim()
        || grads.readout.dim() != params.readout.dim()
        || grads.gates.len() != params.gates.len()
        || grads.bias.len() != params.bias.len()
    {
        return Err(Error::Shape {
            expected: format!("{:?}", params.rule_weights.dim()),
            actual: format!("{:?}", grads.rule_weights.dim()),
        });
    }
    state.step += 1;
    let t = state.step as i32;
    let correction1 = 1.0 - config.beta1.powi(t);
    let correction2 = 1.0 - config.beta2.powi(t);
    // Folding the bias correction into the step size; eps is scaled to match
    // the textbook update `lr·m̂/(√v̂ + eps)`.
    let lr_t = config.learning_rate * correction2.sqrt() / correction1;
    let cfg = AdamConfig {
        beta1: config.beta1,
        beta2: config.beta2,
        eps_hat: config.eps * correction2.sqrt(),
    };
    macro_rules! group {
        ($field:ident) => {
            adam_group(
                params.$field.as_slice_mut().expect("contiguous"),
                grads.$field.as_slice().expect("contiguous"),
                state.first.$field.as_slice_mut().expect("contiguous"),
                state.second.$field.as_slice_mut().expect("contiguous"),
                lr_t,
                &cfg,
            )
        };
    }
    group!(rule_weights);
    group!(gates);
    group!(readout);
    group!(bias);
    clip_weights(params);
    Ok(())
}

struct AdamConfig {
    beta1: f64,
    beta2: f64,
    eps_hat: f64,
}

/// Clamps rule weights to `[-1, 1]`; other groups are untouched.
pub fn clip_weights(params: &mut ModelParams) {
    params.rule_weights.mapv_inplace(|w| w.clamp(-1.0, 1.0));
}

/// One line of the training log.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub validation_ndcg: f64,
    pub seconds: f64,
    /// Rules that survive the dead-node screen on the training rows.
    pub live_rules: usize,
}

impl EpochRecord {
    pub const HEADER: &'static str = "epoch\ttrain_loss\tvalidation_ndcg\tseconds\tlive_rules";
}

impl fmt::Display for EpochRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}\t{:.6}\t{:.6}\t{:.3}\t{}",
            self.epoch, self.train_loss, self.validation_ndcg, self.seconds, self.live_rules
        )
    }
}

#[derive(Debug, Clone)]
pub struct FitResult {
    /// Parameters of the epoch with the best validation metric.
    pub params: ModelParams,
    pub log: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_validation: f64,
}

/// Trains from a fresh initialization.
pub fn fit(
    split: &SplitDataset,
    config: &TrainConfig,
    model_config: &ModelConfig,
    log: Option<&mut dyn Write>,
) -> Result<FitResult> {
    let params = init(model_config)?;
    fit_from(&split.rows(), params, config, log)
}

/// Sets the frozen gates of the fixed-half ablation.
pub fn freeze_half_gates(params: &mut ModelParams) {
    let half = params.n_rules() / 2;
    for (k, g) in params.gates.iter_mut().enumerate() {
        *g = if k < half { 1.0 } else { -1.0 };
    }
}

/// Trains starting from `params`.
///
/// Each epoch shuffles the users with a non-empty training row (seeded by
/// `seed + epoch`), runs grafted forward, loss, backward and Adam per batch,
/// then scores the validation fold. The best epoch's parameters are kept and
/// training stops after `patience` epochs without strict improvement.
/// Log lines are flushed as they are written.
pub fn fit_from(
    rows: &SplitRows,
    mut params: ModelParams,
    config: &TrainConfig,
    mut log: Option<&mut dyn Write>,
) -> Result<FitResult> {
    config.validate()?;
    let train = &rows.train;
    if train.nnz() == 0 {
        return Err(Error::InvalidArgument("training fold is empty".into()));
    }
    if config.gate_mode == GateMode::FixedHalf {
        freeze_half_gates(&mut params);
    }
    let mut users: Vec<usize> = (0..train.n_rows()).filter(|&u| !train.row(u).is_empty()).collect();
    let mut state = AdamState::new(&params);
    let mut history = Vec::new();
    let mut best: Option<(usize, f64, ModelParams)> = None;
    let mut stale = 0usize;

    let write_line = |log: &mut Option<&mut dyn Write>, line: &str| -> Result<()> {
        if let Some(w) = log.as_deref_mut() {
            writeln!(w, "{line}")
                .and_then(|_| w.flush())
                .map_err(|e| Error::io("training log", e))?;
        }
        Ok(())
    };
    write_line(&mut log, EpochRecord::HEADER)?;

    for epoch in 1..=config.max_epochs {
        let started = Instant::now();
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(epoch as u64));
        users.shuffle(&mut rng);

        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        for chunk in users.chunks(config.batch_size) {
            let batch: Vec<&[u32]> = chunk.iter().map(|&u| train.row(u)).collect();
            let step = (|| -> Result<f64> {
                let (scores, trace) = forward_grafted(&params, &batch)?;
                let loss = multinomial_ce(scores.view(), &batch)?;
                let d_scores = loss_grad(scores.view(), &batch);
                let mut grads = backward(&params, &trace, d_scores.view())?;
                if config.gate_mode == GateMode::FixedHalf {
                    grads.gates.fill(0.0);
                }
                adam_step(&mut params, &grads, &mut state, config)?;
                Ok(loss)
            })();
            match step {
                Ok(loss) => {
                    loss_sum += loss;
                    batches += 1;
                }
                Err(e) => {
                    if let Some(w) = log.as_deref_mut() {
                        let _ = writeln!(w, "# epoch {epoch} failed: {e}");
                        let _ = w.flush();
                    }
                    return Err(e);
                }
            }
        }

        let validation = evaluate(&params, rows, config.eval_k, Fold::Validation).ndcg;
        let record = EpochRecord {
            epoch,
            train_loss: loss_sum / batches.max(1) as f64,
            validation_ndcg: validation,
            seconds: started.elapsed().as_secs_f64(),
            live_rules: count_live_rules(&params, train),
        };
        write_line(&mut log, &record.to_string())?;
        history.push(record);

        let improved = best.as_ref().is_none_or(|(_, v, _)| validation > *v);
        if improved {
            best = Some((epoch, validation, params.clone()));
            stale = 0;
        } else {
            stale += 1;
            if stale >= config.patience {
                break;
            }
        }
    }

    let (best_epoch, best_validation, best_params) = match best {
        Some(b) => b,
        None => (0, evaluate(&params, rows, config.eval_k, Fold::Validation).ndcg, params),
    };
    Ok(FitResult {
        params: best_params,
        log: history,
        best_epoch,
        best_validation,
    })
}

/// Settings of the finite-difference gradient check.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckConfig {
    pub n_items: usize,
    pub n_rules: usize,
    pub batch: usize,
    pub trials: usize,
    pub seed: u64,
    /// Central-difference step.
    pub step: f64,
    pub tolerance: f64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            n_items: 6,
            n_rules: 4,
            batch: 3,
            trials: 100,
            seed: 0,
            step: 1e-5,
            tolerance: 1e-4,
        }
    }
}

/// The coordinate with the largest disagreement.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckWorst {
    pub trial: usize,
    pub group: &'static str,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub trials: usize,
    pub coordinates: usize,
    pub max_rel_err: f64,
    pub tolerance: f64,
    pub worst: Option<GradCheckWorst>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_err <= self.tolerance
    }
}

impl fmt::Display for GradCheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} trials, {} coordinates, max relative error {:.3e} (tolerance {:.0e}): {}",
            self.trials,
            self.coordinates,
            self.max_rel_err,
            self.tolerance,
            if self.passed() { "PASS" } else { "FAIL" }
        )?;
        if let Some(w) = &self.worst {
            write!(
                f,
                "\n  worst: trial {} {}[{}] analytic {:.9e} numeric {:.9e}",
                w.trial, w.group, w.index, w.analytic, w.numeric
            )?;
        }
        Ok(())
    }
}

/// Relative error with a floor on the denominator so that coordinates whose
/// true gradient is ~0 are judged on absolute error.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

/// Compares [`backward`] with central differences of the grafted loss.
pub fn grad_check(config: &GradCheckConfig) -> Result<GradCheckReport> {
    grad_check_with(config, |_| {})
}

/// [`grad_check`] with a hook applied to the analytic gradients before comparison.
pub fn grad_check_with(
    config: &GradCheckConfig,
    tamper: impl Fn(&mut Gradients),
) -> Result<GradCheckReport> {
    let (n, k) = (config.n_items, config.n_rules);
    if n == 0 || k == 0 || config.batch == 0 {
        return Err(Error::InvalidArgument("grad check dimensions must be >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut report = GradCheckReport {
        trials: config.trials,
        coordinates: 0,
        max_rel_err: 0.0,
        tolerance: config.tolerance,
        worst: None,
    };
    for trial in 0..config.trials {
        let params = random_check_params(&mut rng, k, n);
        let rows = random_rows(&mut rng, config.batch, n);
        let batch: Vec<&[u32]> = rows.iter().map(Vec::as_slice).collect();

        let (scores, frozen) = forward_grafted(&params, &batch)?;
        let d_scores = loss_grad(scores.view(), &batch);
        let mut analytic = backward(&params, &frozen, d_scores.view())?;
        tamper(&mut analytic);

        let loss_at = |p: &ModelParams| -> Result<f64> {
            let s = grafted_surrogate_scores(p, &batch, &frozen)?;
            multinomial_ce(s.view(), &batch)
        };
        let h = config.step;
        let groups: [(&'static str, usize); 4] = [
            ("rule_weights", k * n),
            ("gates", k),
            ("readout", k * n),
            ("bias", n),
        ];
        for (group, len) in groups {
            for idx in 0..len {
                let mut plus = params.clone();
                let mut minus = params.clone();
                *coordinate(&mut plus, group, idx) += h;
                *coordinate(&mut minus, group, idx) -= h;
                let numeric = (loss_at(&plus)? - loss_at(&minus)?) / (2.0 * h);
                let a = analytic_coordinate(&analytic, group, idx);
                let err = relative_error(a, numeric);
                report.coordinates += 1;
                if err > report.max_rel_err || report.worst.is_none() {
                    report.max_rel_err = report.max_rel_err.max(err);
                    report.worst = Some(GradCheckWorst {
                        trial,
                        group,
                        index: idx,
                        analytic: a,
                        numeric,
                    });
                }
            }
        }
    }
    Ok(report)
}

fn coordinate<'a>(p: &'a mut ModelParams, group: &str, idx: usize) -> &'a mut f64 {
    let slice = match group {
        "rule_weights" => p.rule_weights.as_slice_mut(),
        "gates" => p.gates.as_slice_mut(),
        "readout" => p.readout.as_slice_mut(),
        _ => p.bias.as_slice_mut(),
    };
    &mut slice.expect("contiguous")[idx]
}

fn analytic_coordinate(g: &Gradients, group: &str, idx: usize) -> f64 {
    let slice = match group {
        "rule_weights" => g.rule_weights.as_slice(),
        "gates" => g.gates.as_slice(),
        "readout" => g.readout.as_slice(),
        _ => g.bias.as_slice(),
    };
    slice.expect("contiguous")[idx]
}

/// Weights avoid the kinks at 0 and ±τ by 1e-3 and stay below 0.995 in magnitude.
fn random_check_params(rng: &mut ChaCha8Rng, k: usize, n: usize) -> ModelParams {
    let unit = Normal::new(0.0, 1.0).expect("valid");
    let mut p = ModelParams::zeros(k, n);
    for w in p.rule_weights.iter_mut() {
        *w = loop {
            let v: f64 = rng.random_range(-0.995..0.995);
            if v.abs() > 1e-3 && (v.abs() - TAU).abs() > 1e-3 {
                break v;
            }
        };
    }
    p.gates = Array1::from_shape_fn(k, |_| 2.0 * unit.sample(rng));
    p.readout = Array2::from_shape_fn((k, n), |_| unit.sample(rng));
    p.bias = Array1::from_shape_fn(n, |_| unit.sample(rng));
    p
}

fn random_rows(rng: &mut ChaCha8Rng, batch: usize, n: usize) -> Vec<Vec<u32>> {
    let mut rows: Vec<Vec<u32>> = (0..batch)
        .map(|_| (0..n as u32).filter(|_| rng.random_bool(0.5)).collect())
        .collect();
    if rows.iter().all(Vec::is_empty) {
        rows[0].push(rng.random_range(0..n as u32));
    }
    rows
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::arr2;

    #[test]
    fn uniform_scores_closed_form() {
        let scores = Array2::<f64>::zeros((1, 4));
        let loss = multinomial_ce(scores.view(), &[&[0, 3]]).unwrap();
        assert_abs_diff_eq!(loss, 2.0 * 4f64.ln(), epsilon = 1e-12);
        assert_abs_diff_eq!(loss, 2.77259, epsilon = 1e-5);
    }

    #[test]
    fn dominant_positive_drives_loss_to_zero() {
        let scores = arr2(&[[800.0, 0.0, 0.0]]);
        assert!(multinomial_ce(scores.view(), &[&[0]]).unwrap() < 1e-12);
    }

    #[test]
    fn loss_is_shift_invariant() {
        let scores = arr2(&[[0.3, -1.2, 2.0, 0.1]]);
        let shifted = scores.mapv(|v| v + 17.5);
        let a = multinomial_ce(scores.view(), &[&[1, 2]]).unwrap();
        let b = multinomial_ce(shifted.view(), &[&[1, 2]]).unwrap();
        assert_abs_diff_eq!(a, b, epsilon = 1e-12);
    }

    #[test]
    fn empty_rows_skipped_and_all_empty_rejected() {
        let scores = arr2(&[[0.0, 0.0], [5.0, -5.0]]);
        let with_empty = multinomial_ce(scores.view(), &[&[], &[0]]).unwrap();
        let alone = multinomial_ce(scores.slice(ndarray::s![1..2, ..]), &[&[0]]).unwrap();
        assert_eq!(with_empty, alone);
        assert!(matches!(multinomial_ce(scores.view(), &[&[], &[]]), Err(Error::EmptyBatch)));
        let g = loss_grad(scores.view(), &[&[], &[0]]);
        assert!(g.row(0).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn two_item_gradient_pattern() {
        let scores = Array2::<f64>::zeros((2, 2));
        let g = loss_grad(scores.view(), &[&[0], &[1]]);
        assert_abs_diff_eq!(g[[0, 0]], -0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(g[[0, 1]], 0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(g[[1, 0]], 0.25, epsilon = 1e-15);
    }

    #[test]
    fn loss_grad_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let unit = Normal::new(0.0, 2.0).unwrap();
        let scores = Array2::from_shape_fn((3, 7), |_| unit.sample(&mut rng));
        let rows: [&[u32]; 3] = [&[0, 4], &[6], &[1, 2, 3]];
        let g = loss_grad(scores.view(), &rows);
        for u in 0..3 {
            assert_abs_diff_eq!(g.row(u).sum(), 0.0, epsilon = 1e-14);
            for j in 0..7 {
                let h = 1e-5;
                let mut p = scores.clone();
                let mut m = scores.clone();
                p[[u, j]] += h;
                m[[u, j]] -= h;
                let fd = (multinomial_ce(p.view(), &rows).unwrap() - multinomial_ce(m.view(), &rows).unwrap()) / (2.0 * h);
                assert!(relative_error(g[[u, j]], fd) <= 1e-6, "{u},{j}: {} vs {fd}", g[[u, j]]);
            }
        }
    }

    #[test]
    fn zero_gradient_adam_step_changes_only_counter() {
        let mut cfg = ModelConfig::new(3, 5, 1);
        cfg.active_literals_per_rule = 2;
        let mut p = init(&cfg).unwrap();
        let before = p.clone();
        let mut state = AdamState::new(&p);
        let zero = Gradients::zeros_like(&p);
        adam_step(&mut p, &zero, &mut state, &TrainConfig::default()).unwrap();
        assert_eq!(p, before);
        assert_eq!(state.step, 1);
    }

    #[test]
    fn first_adam_step_moves_by_learning_rate() {
        let mut p = ModelParams::zeros(2, 3);
        let mut g = Gradients::zeros_like(&p);
        g.readout.fill(0.7);
        g.bias.fill(-3.0);
        g.gates.fill(1e-3);
        let mut state = AdamState::new(&p);
        let cfg = TrainConfig::default();
        adam_step(&mut p, &g, &mut state, &cfg).unwrap();
        for &v in p.readout.iter() {
            assert_abs_diff_eq!(v, -cfg.learning_rate, epsilon = 1e-9);
        }
        for &v in p.bias.iter() {
            assert_abs_diff_eq!(v, cfg.learning_rate, epsilon = 1e-9);
        }
        for &v in p.gates.iter() {
            assert_abs_diff_eq!(v, -cfg.learning_rate, epsilon = 1e-7);
        }
    }

    #[test]
    fn non_finite_gradient_names_group() {
        let mut p = ModelParams::zeros(1, 2);
        let mut g = Gradients::zeros_like(&p);
        g.gates[0] = f64::NAN;
        let mut state = AdamState::new(&p);
        let err = adam_step(&mut p, &g, &mut state, &TrainConfig::default()).unwrap_err();
        assert!(matches!(err, Error::NonFiniteGradient("gates")));
    }

    #[test]
    fn clip_examples() {
        let mut p = ModelParams::zeros(1, 3);
        p.rule_weights = arr2(&[[1.7, -0.3, -4.0]]);
        p.gates[0] = 9.0;
        clip_weights(&mut p);
        assert_eq!(p.rule_weights.row(0).to_vec(), vec![1.0, -0.3, -1.0]);
        assert_eq!(p.gates[0], 9.0);
        let once = p.clone();
        clip_weights(&mut p);
        assert_eq!(p, once);
    }

    #[test]
    fn weight_at_one_stays_clipped() {
        let mut p = ModelParams::zeros(1, 1);
        p.rule_weights[[0, 0]] = 1.0;
        let mut g = Gradients::zeros_like(&p);
        g.rule_weights[[0, 0]] = -5.0;
        let mut state = AdamState::new(&p);
        adam_step(&mut p, &g, &mut state, &TrainConfig::default()).unwrap();
        assert_eq!(p.rule_weights[[0, 0]], 1.0);
    }

    #[test]
    fn grad_check_small() {
        let cfg = GradCheckConfig { trials: 10, ..Default::default() };
        let report = grad_check(&cfg).unwrap();
        assert!(report.passed(), "{report}");
    }

    #[test]
    fn grad_check_catches_doubled_readout() {
        let cfg = GradCheckConfig { trials: 3, ..Default::default() };
        let report = grad_check_with(&cfg, |g| g.readout.mapv_inplace(|v| 2.0 * v)).unwrap();
        assert!(!report.passed());
        assert_eq!(report.worst.unwrap().group, "readout");
    }

    #[test]
    fn grad_check_zero_trials() {
        let report = grad_check(&GradCheckConfig { trials: 0, ..Default::default() }).unwrap();
        assert_eq!(report.coordinates, 0);
        assert!(report.worst.is_none());
    }

    #[test]
    fn zero_weight_uses_positive_sign_convention() {
        // AND-saturated gate: the OR branch carries exactly zero weight, and
        // with w = 0 read as positive the literal is satisfied, so the
        // one-sided derivative towards w > 0 is zero.
        let mut p = ModelParams::zeros(1, 2);
        p.rule_weights = arr2(&[[0.0, 0.8]]);
        p.gates[0] = 60.0;
        p.readout = arr2(&[[0.4, -0.9]]);
        let rows: [&[u32]; 1] = [&[0]];
        let (scores, trace) = forward_grafted(&p, &rows).unwrap();
        let d = loss_grad(scores.view(), &rows);
        let g = backward(&p, &trace, d.view()).unwrap();
        let h = 1e-6;
        let mut plus = p.clone();
        plus.rule_weights[[0, 0]] = h;
        let loss = |q: &ModelParams| {
            let s = grafted_surrogate_scores(q, &rows, &trace).unwrap();
            multinomial_ce(s.view(), &rows).unwrap()
        };
        let one_sided = (loss(&plus) - loss(&p)) / h;
        assert_eq!(g.rule_weights[[0, 0]], 0.0);
        assert_abs_diff_eq!(one_sided, 0.0, epsilon = 1e-12);
        assert!(g.rule_weights[[0, 1]] != 0.0);
    }
}
