//! Rule-layer autoencoder: parameters, forward passes, and the backward pass.
//!
//! Three forward passes share the same parameters:
//!
//! * **continuous** – every rule outputs `r̃_k = σ(g_k)·Conj+ + (1 − σ(g_k))·Disj+`
//!   over its literalized weight row, and scores are `W°·r̃ + b`;
//! * **discrete** – weights are thresholded into boolean rules, the gate picks
//!   AND (`g_k > 0`) or OR, and scores are the readout columns of firing
//!   rules summed onto the bias;
//! * **grafted** – the discrete values, carrying the continuous pass's
//!   sensitivities. [`backward`] differentiates this one.
//!
//! Batched continuous evaluation never materializes literal rows. With
//! `H_ik = sign(w_ki)·G(|w_ki|)` and per-rule totals over positive and
//! negative weights, a user's sums are
//!
//! ```text
//! h_uk   = Σ_{i ∈ x_u} H_ik
//! S^∨_uk = G(1)·(neg_total_k + h_uk)     (satisfied literals)
//! S^∧_uk = G(1)·(pos_total_k − h_uk)     (violated literals)
//! ```
//!
//! so the cost is `O(nnz·K)` rather than `O(B·N·K)`.

use std::ops::Range;

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};

use crate::error::{Error, Result};
use crate::logic::{g_one, g_slope, g_transform, BinarizedRule, Operator, G_GUARD, G_SLOPE_FLOOR, TAU};

/// Default number of rule neurons.
pub const DEFAULT_RULES: usize = 2000;
/// Default number of strong literals per rule at initialization.
pub const DEFAULT_ACTIVE_LITERALS: usize = 2;

/// Default half-width of the uniform draw for non-literal weights.
pub const DEFAULT_BACKGROUND_WEIGHT: f64 = 0.05;

/// Shape and initialization settings.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub n_rules: usize,
    pub n_items: usize,
    pub seed: u64,
    pub active_literals_per_rule: usize,
    /// Half-width of the uniform draw for non-literal weights.
    pub background_weight: f64,
    /// Binarization threshold stored in the parameters.
    pub tau: f64,
}

impl ModelConfig {
    pub fn new(n_rules: usize, n_items: usize, seed: u64) -> Self {
        Self {
            n_rules,
            n_items,
            seed,
            active_literals_per_rule: DEFAULT_ACTIVE_LITERALS,
            background_weight: DEFAULT_BACKGROUND_WEIGHT,
            tau: TAU,
        }
    }
}

/// Trainable parameters.
///
/// `readout` is stored rule-major: `readout[[k, j]]` is the weight of rule
/// `k` on item `j`, i.e. `W°_{jk}`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub rule_weights: Array2<f64>,
    pub gates: Array1<f64>,
    pub readout: Array2<f64>,
    pub bias: Array1<f64>,
    pub tau: f64,
}

impl ModelParams {
    /// All-zero parameters; mostly useful in tests.
    pub fn zeros(n_rules: usize, n_items: usize) -> Self {
        Self {
            rule_weights: Array2::zeros((n_rules, n_items)),
            gates: Array1::zeros(n_rules),
            readout: Array2::zeros((n_rules, n_items)),
            bias: Array1::zeros(n_items),
            tau: TAU,
        }
    }

    pub fn n_rules(&self) -> usize {
        self.rule_weights.nrows()
    }

    pub fn n_items(&self) -> usize {
        self.rule_weights.ncols()
    }

    /// `W°_{item, rule}`.
    pub fn readout_weight(&self, item: usize, rule: usize) -> f64 {
        self.readout[[rule, item]]
    }
}

/// Random initialization.
///
/// Each rule gets `active_literals_per_rule` distinct items with magnitude
/// drawn from `U(0.55, 0.95)` and random sign; every other weight is drawn
/// from `U(-background, background)`. Gates start in `U(-0.1, 0.1)`, the
/// readout in `N(0, 0.01²)`, and the bias at zero.
pub fn init(config: &ModelConfig) -> Result<ModelParams> {
    let (k, n) = (config.n_rules, config.n_items);
    if k == 0 || n == 0 {
        return Err(Error::InvalidArgument("n_rules and n_items must be >= 1".into()));
    }
    if config.active_literals_per_rule > n {
        return Err(Error::InvalidArgument(format!(
            "active_literals_per_rule {} exceeds item count {n}",
            config.active_literals_per_rule
        )));
    }
    if !(config.tau > 0.0 && config.tau < 1.0) {
        return Err(Error::InvalidArgument("tau must lie in (0, 1)".into()));
    }
    if !(0.0..=TAU).contains(&config.background_weight) {
        return Err(Error::InvalidArgument(format!(
            "background_weight must lie in [0, {TAU}]"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let strong = Uniform::new(0.55, 0.95).expect("valid range");
    let gate = Uniform::new(-0.1, 0.1).expect("valid range");
    let readout = Normal::new(0.0, 0.01).expect("valid std");

    let mut params = ModelParams::zeros(k, n);
    params.tau = config.tau;
    for mut row in params.rule_weights.rows_mut() {
        if config.background_weight > 0.0 {
            let bg = config.background_weight;
            for w in row.iter_mut() {
                *w = rng.random_range(-bg..bg);
            }
        }
        for i in sample(&mut rng, n, config.active_literals_per_rule) {
            let mag = strong.sample(&mut rng);
            row[i] = if rng.random_bool(0.5) { mag } else { -mag };
        }
    }
    for g in params.gates.iter_mut() {
        *g = gate.sample(&mut rng);
    }
    for w in params.readout.iter_mut() {
        *w = readout.sample(&mut rng);
    }
    Ok(params)
}

/// Thresholds every rule at the parameters' `tau`; the operator comes from the gate sign.
pub fn binarize_weights(params: &ModelParams) -> Vec<BinarizedRule> {
    params
        .rule_weights
        .rows()
        .into_iter()
        .zip(params.gates.iter())
        .map(|(row, &g)| {
            let row = row.as_slice().expect("rule weights are row-major");
            BinarizedRule::from_weights(row, g, params.tau)
        })
        .collect()
}

/// Boolean rules indexed by item for fast evaluation of many rows.
#[derive(Debug, Clone)]
pub struct CompiledRules {
    operators: Vec<Operator>,
    n_positive: Vec<u32>,
    n_negative: Vec<u32>,
    by_item: Vec<Vec<(u32, bool)>>,
}

impl CompiledRules {
    pub fn new(rules: &[BinarizedRule], n_items: usize) -> Self {
        let mut by_item = vec![Vec::new(); n_items];
        for (k, rule) in rules.iter().enumerate() {
            for &i in &rule.positives {
                by_item[i as usize].push((k as u32, true));
            }
            for &i in &rule.negatives {
                by_item[i as usize].push((k as u32, false));
            }
        }
        Self {
            operators: rules.iter().map(|r| r.operator).collect(),
            n_positive: rules.iter().map(|r| r.positives.len() as u32).collect(),
            n_negative: rules.iter().map(|r| r.negatives.len() as u32).collect(),
            by_item,
        }
    }

    pub fn from_params(params: &ModelParams) -> Self {
        Self::new(&binarize_weights(params), params.n_items())
    }

    pub fn n_rules(&self) -> usize {
        self.operators.len()
    }

    /// Writes the firing pattern of `row` into `out` (length `K`).
    pub fn activations_into(&self, row: &[u32], out: &mut [bool]) {
        let k = self.n_rules();
        let mut pos_hit = vec![0u32; k];
        let mut neg_hit = vec![0u32; k];
        for &i in row {
            for &(rule, positive) in &self.by_item[i as usize] {
                if positive {
                    pos_hit[rule as usize] += 1;
                } else {
                    neg_hit[rule as usize] += 1;
                }
            }
        }
        for r in 0..k {
            out[r] = match self.operators[r] {
                Operator::And => pos_hit[r] == self.n_positive[r] && neg_hit[r] == 0,
                Operator::Or => pos_hit[r] > 0 || neg_hit[r] < self.n_negative[r],
            };
        }
    }

    pub fn activations(&self, row: &[u32]) -> Vec<bool> {
        let mut out = vec![false; self.n_rules()];
        self.activations_into(row, &mut out);
        out
    }
}

/// Scores one user from a firing pattern: firing readout rows are added in
/// ascending rule order starting from zero, then the bias is added.
pub fn score_fired_into(params: &ModelParams, fired: &[bool], out: &mut [f64]) {
    out.fill(0.0);
    for (k, _) in fired.iter().enumerate().filter(|(_, &f)| f) {
        let col = params.readout.row(k);
        for (o, &w) in out.iter_mut().zip(col.as_slice().expect("row-major readout")) {
            *o += w;
        }
    }
    for (o, &b) in out.iter_mut().zip(params.bias.iter()) {
        *o += b;
    }
}

/// Indices of firing rules in ascending order.
fn fired_list(fired: &[bool]) -> Vec<u32> {
    fired.iter().enumerate().filter(|(_, &f)| f).map(|(r, _)| r as u32).collect()
}

/// Visits, per tile of item columns and per list `a`, consecutive runs of
/// the ascending entries of `lists[a]`, chunk by chunk in ascending order.
fn for_each_tile(lists: &[Vec<u32>], n: usize, mut visit: impl FnMut(usize, &[u32], Range<usize>)) {
    const ITEM_TILE: usize = 256;
    const CHUNK: u32 = 256;
    let max = lists.iter().filter_map(|l| l.last()).max().map_or(0, |&v| v + 1);
    let mut cursor = vec![0usize; lists.len()];
    for start in (0..n).step_by(ITEM_TILE) {
        let cols = start..(start + ITEM_TILE).min(n);
        cursor.fill(0);
        for chunk_end in (CHUNK..max + CHUNK).step_by(CHUNK as usize) {
            for (a, list) in lists.iter().enumerate() {
                let from = cursor[a];
                let len = list[from..].iter().take_while(|&&v| v < chunk_end).count();
                if len > 0 {
                    visit(a, &list[from..from + len], cols.clone());
                    cursor[a] += len;
                }
            }
        }
    }
}

/// `dst += Σ src[row][cols]` over `rows`, added left to right one row at a time.
#[inline]
fn add_rows(dst: &mut [f64], src: &[f64], stride: usize, rows: &[u32], cols: Range<usize>) {
    let row = |r: u32| &src[r as usize * stride..][cols.clone()];
    let mut groups = rows.chunks_exact(4);
    for g in &mut groups {
        let (a, b, c, d) = (row(g[0]), row(g[1]), row(g[2]), row(g[3]));
        for ((((o, &a), &b), &c), &d) in dst.iter_mut().zip(a).zip(b).zip(c).zip(d) {
            *o = *o + a + b + c + d;
        }
    }
    for &r in groups.remainder() {
        for (o, &a) in dst.iter_mut().zip(row(r)) {
            *o += a;
        }
    }
}

/// Output of the discrete pass.
#[derive(Debug, Clone)]
pub struct DiscreteOutput {
    /// `B×K`, entries exactly 0 or 1.
    pub activations: Array2<f64>,
    /// `B×N`.
    pub scores: Array2<f64>,
}

pub fn forward_discrete(params: &ModelParams, rows: &[&[u32]]) -> DiscreteOutput {
    forward_discrete_compiled(params, &CompiledRules::from_params(params), rows)
}

/// Discrete pass with rules compiled once by the caller.
pub fn forward_discrete_compiled(
    params: &ModelParams,
    compiled: &CompiledRules,
    rows: &[&[u32]],
) -> DiscreteOutput {
    let (k, n) = (params.n_rules(), params.n_items());
    let mut activations = Array2::zeros((rows.len(), k));
    let mut scores = Array2::zeros((rows.len(), n));
    let mut fired = vec![false; k];
    let mut lists = Vec::with_capacity(rows.len());
    for (u, row) in rows.iter().enumerate() {
        compiled.activations_into(row, &mut fired);
        for (a, &f) in activations.row_mut(u).iter_mut().zip(&fired) {
            *a = if f { 1.0 } else { 0.0 };
        }
        lists.push(fired_list(&fired));
    }
    let readout = params.readout.as_slice().expect("row-major readout");
    let out = scores.as_slice_mut().expect("fresh scores");
    for_each_tile(&lists, n, |u, rules, cols| {
        add_rows(&mut out[u * n..][cols.clone()], readout, n, rules, cols);
    });
    for mut row in scores.rows_mut() {
        for (o, &b) in row.iter_mut().zip(params.bias.iter()) {
            *o += b;
        }
    }
    DiscreteOutput { activations, scores }
}

/// Per-step tables of the relaxed rule layer.
#[derive(Debug, Clone)]
pub struct RelaxedRules {
    /// `N×K`: `sign(w_ki)·G(|w_ki|)`, with `sign(0) = +1`.
    pub signed_g: Array2<f64>,
    /// `K×N`: `G(|w_ki|)`, kept rule-major for the backward pass.
    pub g_by_rule: Array2<f64>,
    /// `Σ_i G(|w_ki|)` over `w_ki >= 0`.
    pub pos_total: Array1<f64>,
    /// `Σ_i G(|w_ki|)` over `w_ki < 0`.
    pub neg_total: Array1<f64>,
}

impl RelaxedRules {
    pub fn new(params: &ModelParams) -> Self {
        let k = params.n_rules();
        let mut g_by_rule = params.rule_weights.mapv(|w| g_transform(w.abs()));
        let mut pos_total = Array1::zeros(k);
        let mut neg_total = Array1::zeros(k);
        let mut signed = g_by_rule.clone();
        for (r, (w_row, mut s_row)) in params
            .rule_weights
            .rows()
            .into_iter()
            .zip(signed.rows_mut())
            .enumerate()
        {
            let (mut pos, mut neg) = (0.0, 0.0);
            for (&w, s) in w_row.iter().zip(s_row.iter_mut()) {
                if w >= 0.0 {
                    pos += *s;
                } else {
                    neg += *s;
                    *s = -*s;
                }
            }
            pos_total[r] = pos;
            neg_total[r] = neg;
        }
        g_by_rule = g_by_rule.as_standard_layout().into_owned();
        Self {
            signed_g: transpose(signed.view()),
            g_by_rule,
            pos_total,
            neg_total,
        }
    }
}

/// Cache-blocked transpose into a fresh row-major array.
fn transpose(src: ArrayView2<'_, f64>) -> Array2<f64> {
    const TILE: usize = 32;
    let (rows, cols) = src.dim();
    let src = src.as_standard_layout();
    let from = src.as_slice().expect("standard layout");
    let mut out = Array2::zeros((cols, rows));
    let to = out.as_slice_mut().expect("fresh array");
    for i0 in (0..rows).step_by(TILE) {
        for j0 in (0..cols).step_by(TILE) {
            for i in i0..(i0 + TILE).min(rows) {
                for j in j0..(j0 + TILE).min(cols) {
                    to[j * rows + i] = from[i * cols + j];
                }
            }
        }
    }
    out
}

/// Weight gradients of one rule from `dL/dG(|w_i|)`, given `g_i = G(|w_i|)`:
/// `(λ∧ + d_i)·G'(|w_i|)` for `w_i >= 0` and `(d_i − λ∨)·G'(|w_i|)` otherwise.
/// Matches [`g_slope`] exactly while reusing `g` instead of a second logarithm.
fn weight_grad_row(w: &[f64], g: &[f64], d: &[f64], lambda_and: f64, lambda_or: f64, out: &mut [f64]) {
    for (((o, &w), &g), &d) in out.iter_mut().zip(w).zip(g).zip(d) {
        let d_g = if w >= 0.0 { lambda_and + d } else { d - lambda_or };
        let one_minus = 1.0 - w.abs().min(1.0);
        let slope = if one_minus > G_GUARD { 1.0 / (2.0 * g * one_minus) } else { 0.0 };
        *o = d_g * slope;
    }
    for ((o, &w), &d) in out.iter_mut().zip(w).zip(d).filter(|((_, w), _)| w.abs() < G_SLOPE_FLOOR) {
        let d_g = if w >= 0.0 { lambda_and + d } else { d - lambda_or };
        *o = d_g * g_slope(w.abs());
    }
}

/// Cached intermediates of a forward pass, consumed by [`backward`].
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    pub rows: Vec<Vec<u32>>,
    pub tables: RelaxedRules,
    /// `S^∨`: argument (negated) of `P` inside `Disj+`, `B×K`.
    pub sum_or: Array2<f64>,
    /// `S^∧`: argument (negated) of `P` inside `Conj+`, `B×K`.
    pub sum_and: Array2<f64>,
    pub conj: Array2<f64>,
    pub disj: Array2<f64>,
    /// `σ(g_k)`.
    pub gate_blend: Array1<f64>,
    /// `r̃`, `B×K`.
    pub continuous: Array2<f64>,
    /// `r̄`, `B×K`.
    pub discrete: Array2<f64>,
    /// `W°·r̃ + b`; only filled by [`forward_continuous`].
    pub continuous_scores: Option<Array2<f64>>,
    /// Scores carried forward by the grafted pass, equal to the discrete scores.
    pub grafted_scores: Array2<f64>,
}

impl ForwardTrace {
    pub fn batch_size(&self) -> usize {
        self.rows.len()
    }

    pub fn rows(&self) -> Vec<&[u32]> {
        self.rows.iter().map(Vec::as_slice).collect()
    }
}

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn relaxed_trace(params: &ModelParams, rows: &[&[u32]]) -> Result<ForwardTrace> {
    let (k, n) = (params.n_rules(), params.n_items());
    let b = rows.len();
    let tables = RelaxedRules::new(params);
    let g1 = g_one();
    let gate_blend = params.gates.mapv(sigmoid);

    let mut sum_or = Array2::zeros((b, k));
    let mut sum_and = Array2::zeros((b, k));
    let mut conj = Array2::zeros((b, k));
    let mut disj = Array2::zeros((b, k));
    let mut continuous = Array2::zeros((b, k));
    let mut h = vec![0.0; k];
    for (u, row) in rows.iter().enumerate() {
        h.fill(0.0);
        for &i in row.iter() {
            if i as usize >= n {
                return Err(Error::InvalidArgument(format!("item {i} out of range for {n} items")));
            }
            let src = tables.signed_g.row(i as usize);
            for (acc, &v) in h.iter_mut().zip(src.as_slice().expect("row-major table")) {
                *acc += v;
            }
        }
        for r in 0..k {
            let s_or = (g1 * (tables.neg_total[r] + h[r])).max(0.0);
            let s_and = (g1 * (tables.pos_total[r] - h[r])).max(0.0);
            let c = 1.0 / (1.0 + s_and);
            let d = 1.0 - 1.0 / (1.0 + s_or);
            let sig = gate_blend[r];
            let act = sig * c + (1.0 - sig) * d;
            if !act.is_finite() {
                return Err(Error::NonFinite {
                    what: "continuous rule activation",
                    rule: r,
                });
            }
            sum_or[[u, r]] = s_or;
            sum_and[[u, r]] = s_and;
            conj[[u, r]] = c;
            disj[[u, r]] = d;
            continuous[[u, r]] = act;
        }
    }

    let discrete = forward_discrete(params, rows);
    Ok(ForwardTrace {
        rows: rows.iter().map(|r| r.to_vec()).collect(),
        tables,
        sum_or,
        sum_and,
        conj,
        disj,
        gate_blend,
        continuous,
        discrete: discrete.activations,
        continuous_scores: None,
        grafted_scores: discrete.scores,
    })
}

/// `scores = activations · readout + b` for `B×K` activations.
fn linear_readout(params: &ModelParams, activations: ArrayView2<'_, f64>) -> Array2<f64> {
    let mut scores = activations.dot(&params.readout);
    scores += &params.bias.view().insert_axis(Axis(0));
    scores
}

/// Output of the continuous pass.
#[derive(Debug, Clone)]
pub struct ContinuousOutput {
    /// `r̃`, `B×K`, entries in `[0, 1]`.
    pub activations: Array2<f64>,
    /// `W°·r̃ + b`, `B×N`.
    pub scores: Array2<f64>,
    pub trace: ForwardTrace,
}

pub fn forward_continuous(params: &ModelParams, rows: &[&[u32]]) -> Result<ContinuousOutput> {
    let mut trace = relaxed_trace(params, rows)?;
    let scores = linear_readout(params, trace.continuous.view());
    trace.continuous_scores = Some(scores.clone());
    Ok(ContinuousOutput {
        activations: trace.continuous.clone(),
        scores,
        trace,
    })
}

/// Grafted pass: values are the discrete scores, sensitivities come from the
/// relaxation via [`backward`].
pub fn forward_grafted(params: &ModelParams, rows: &[&[u32]]) -> Result<(Array2<f64>, ForwardTrace)> {
    let trace = relaxed_trace(params, rows)?;
    Ok((trace.grafted_scores.clone(), trace))
}

/// Gradients for every parameter group, shaped like [`ModelParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub rule_weights: Array2<f64>,
    pub gates: Array1<f64>,
    pub readout: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Gradients {
    pub fn zeros_like(params: &ModelParams) -> Self {
        Self {
            rule_weights: Array2::zeros(params.rule_weights.raw_dim()),
            gates: Array1::zeros(params.gates.raw_dim()),
            readout: Array2::zeros(params.readout.raw_dim()),
            bias: Array1::zeros(params.bias.raw_dim()),
        }
    }

    /// Named flat views of the four groups.
    pub fn groups(&self) -> [(&'static str, &[f64]); 4] {
        [
            ("rule_weights", self.rule_weights.as_slice().expect("contiguous")),
            ("gates", self.gates.as_slice().expect("contiguous")),
            ("readout", self.readout.as_slice().expect("contiguous")),
            ("bias", self.bias.as_slice().expect("contiguous")),
        ]
    }

    pub fn is_finite(&self) -> bool {
        self.groups().iter().all(|(_, g)| g.iter().all(|v| v.is_finite()))
    }
}

/// Hand-derived backward pass of the grafted forward.
///
/// The readout sees the discrete activations as its input
/// (`dW° = dL/dŝ · r̄ᵀ`) while the rule layer receives `W°ᵀ · dL/dŝ` as the
/// gradient of its continuous output. Literal signs are constant within a
/// step, and `d|w|/dw` uses `sign(0) = +1`.
pub fn backward(params: &ModelParams, trace: &ForwardTrace, d_scores: ArrayView2<'_, f64>) -> Result<Gradients> {
    let (k, n) = (params.n_rules(), params.n_items());
    let b = trace.batch_size();
    if d_scores.dim() != (b, n) {
        return Err(Error::Shape {
            expected: format!("{b}x{n}"),
            actual: format!("{}x{}", d_scores.nrows(), d_scores.ncols()),
        });
    }
    if trace.continuous.dim() != (b, k) || trace.tables.signed_g.dim() != (n, k) {
        return Err(Error::Shape {
            expected: format!("trace for K={k}, N={n}"),
            actual: format!("{:?}", trace.tables.signed_g.dim()),
        });
    }

    let mut grads = Gradients::zeros_like(params);
    grads.bias = d_scores.sum_axis(Axis(0));
    grads.readout = trace.discrete.t().dot(&d_scores);
    let d_rules = d_scores.dot(&params.readout.t());

    let g1 = g_one();
    let mut lambda_and_total = Array1::<f64>::zeros(k);
    let mut lambda_or_total = Array1::<f64>::zeros(k);
    // per user and rule, dL/d(Σ_i x_i·signed_g[i, r])
    let mut diff = Array2::<f64>::zeros((b, k));
    let mut inputs = Array2::<f64>::zeros((b, n));
    for u in 0..b {
        for r in 0..k {
            let e = d_rules[[u, r]];
            let sig = trace.gate_blend[r];
            let c = trace.conj[[u, r]];
            let d = trace.disj[[u, r]];
            // clamped sums have zero slope
            let and_live = if trace.sum_and[[u, r]] > 0.0 { 1.0 } else { 0.0 };
            let or_live = if trace.sum_or[[u, r]] > 0.0 { 1.0 } else { 0.0 };
            let l_and = -e * sig * c * c * g1 * and_live;
            let l_or = e * (1.0 - sig) * (1.0 - d) * (1.0 - d) * g1 * or_live;
            lambda_and_total[r] += l_and;
            lambda_or_total[r] += l_or;
            diff[[u, r]] = l_or - l_and;
            grads.gates[r] += e * sig * (1.0 - sig) * (c - d);
        }
        for &i in &trace.rows[u] {
            inputs[[u, i as usize]] = 1.0;
        }
    }

    // dL/d signed_g, rule-major
    let d_signed = diff.t().dot(&inputs);
    for (r, ((w_row, g_row), (mut out, d_row))) in params
        .rule_weights
        .rows()
        .into_iter()
        .zip(trace.tables.g_by_rule.rows())
        .zip(grads.rule_weights.rows_mut().into_iter().zip(d_signed.rows()))
        .enumerate()
    {
        weight_grad_row(
            w_row.as_slice().expect("row-major weights"),
            g_row.as_slice().expect("row-major table"),
            d_row.as_slice().expect("row-major product"),
            lambda_and_total[r],
            lambda_or_total[r],
            out.as_slice_mut().expect("row-major gradient"),
        );
    }

    if !grads.is_finite() {
        for (name, g) in grads.groups() {
            if g.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteGradient(name));
            }
        }
    }
    Ok(grads)
}

/// Scores with the discrete activation pattern frozen at `frozen` and the
/// continuous activations taken at `params`:
/// `W°·(r̄₀ + r̃(θ) − r̃₀) + b`. This is the function whose gradient at the
/// frozen point is exactly what [`backward`] returns, which makes it the
/// target of finite-difference checks.
pub fn grafted_surrogate_scores(
    params: &ModelParams,
    rows: &[&[u32]],
    frozen: &ForwardTrace,
) -> Result<Array2<f64>> {
    let now = relaxed_trace(params, rows)?;
    let act = &frozen.discrete + &now.continuous - &frozen.continuous;
    Ok(linear_readout(params, act.view()))
}

/// Discrete scores for all rows of a matrix, computed in fixed-size chunks.
pub fn score_all(params: &ModelParams, rows: &[&[u32]], chunk: usize) -> Array2<f64> {
    let compiled = CompiledRules::from_params(params);
    let mut out = Array2::zeros((rows.len(), params.n_items()));
    for (c, block) in rows.chunks(chunk.max(1)).enumerate() {
        let part = forward_discrete_compiled(params, &compiled, block);
        let start = c * chunk.max(1);
        out.slice_mut(s![start..start + block.len(), ..]).assign(&part.scores);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::logic::{conj_plus, disj_plus, literalize};
    use approx::assert_abs_diff_eq;

    fn toy_params() -> ModelParams {
        let mut p = ModelParams::zeros(2, 3);
        p.rule_weights = ndarray::arr2(&[[0.6, -0.7, 0.5], [0.9, 0.2, -0.1]]);
        p.gates = ndarray::arr1(&[1.0, -1.0]);
        p.readout = ndarray::arr2(&[[0.5, -0.25, 1.0], [0.125, 0.75, -0.5]]);
        p.bias = ndarray::arr1(&[0.01, 0.02, 0.03]);
        p
    }

    #[test]
    fn init_places_requested_literals() {
        let mut cfg = ModelConfig::new(2, 10, 1);
        cfg.active_literals_per_rule = 3;
        let p = init(&cfg).unwrap();
        for row in p.rule_weights.rows() {
            assert_eq!(row.iter().filter(|w| w.abs() > TAU).count(), 3);
            assert!(row.iter().all(|w| w.abs() < 0.95));
        }
        assert_eq!(p.bias.sum(), 0.0);
        assert_eq!(p, init(&cfg).unwrap());
        cfg.active_literals_per_rule = 11;
        assert!(init(&cfg).is_err());
        assert_eq!(ModelConfig::new(DEFAULT_RULES, 5, 0).n_rules, 2000);
    }

    #[test]
    fn binarize_boundary_and_gate() {
        let rules = binarize_weights(&toy_params());
        assert_eq!(rules[0].operator, Operator::And);
        assert_eq!(rules[0].positives, vec![0]);
        assert_eq!(rules[0].negatives, vec![1]);
        assert_eq!(rules[1].operator, Operator::Or);
        assert_eq!(rules[1].positives, vec![0]);
        assert!(rules[1].negatives.is_empty());

        let mut p = ModelParams::zeros(1, 3);
        p.rule_weights.fill(0.5);
        assert!(binarize_weights(&p)[0].is_empty());
        assert_eq!(binarize_weights(&p)[0].operator, Operator::Or);
    }

    #[test]
    fn no_rule_fires_gives_bias() {
        let p = toy_params();
        // rule 0 needs item 0 and not item 1; rule 1 needs item 0
        let out = forward_discrete(&p, &[&[2]]);
        assert_eq!(out.activations.row(0).to_vec(), vec![0.0, 0.0]);
        assert_eq!(out.scores.row(0).to_vec(), p.bias.to_vec());
    }

    #[test]
    fn and_rule_over_full_history_fires() {
        let p = toy_params();
        let out = forward_discrete(&p, &[&[0, 2]]);
        assert_eq!(out.activations.row(0).to_vec(), vec![1.0, 1.0]);
        for j in 0..3 {
            let expect = (0.0 + p.readout[[0, j]] + p.readout[[1, j]]) + p.bias[j];
            assert_eq!(out.scores[[0, j]], expect);
        }
    }

    #[test]
    fn two_rule_score_decomposition() {
        let mut p = ModelParams::zeros(2, 2);
        p.rule_weights = ndarray::arr2(&[[0.9, 0.0], [0.0, 0.9]]);
        p.gates = ndarray::arr1(&[-1.0, -1.0]);
        p.readout = ndarray::arr2(&[[0.82, 0.0], [-0.55, 0.0]]);
        let out = forward_discrete(&p, &[&[0, 1]]);
        assert_abs_diff_eq!(out.scores[[0, 0]], 0.27, epsilon = 1e-12);
    }

    #[test]
    fn zero_params_give_zero_continuous_scores() {
        let p = ModelParams::zeros(3, 4);
        let out = forward_continuous(&p, &[&[0, 2], &[]]).unwrap();
        assert!(out.scores.iter().all(|&s| s == 0.0));
    }

    #[test]
    fn batched_continuous_matches_scalar_kernels() {
        let cfg = ModelConfig::new(5, 9, 4);
        let mut p = init(&cfg).unwrap();
        p.gates = ndarray::arr1(&[-2.0, -0.5, 0.0, 0.7, 3.0]);
        let rows: [&[u32]; 3] = [&[0, 3, 8], &[], &[1, 2, 4, 5, 6, 7]];
        let out = forward_continuous(&p, &rows).unwrap();
        for (u, row) in rows.iter().enumerate() {
            let x: Vec<bool> = (0..9u32).map(|i| row.contains(&i)).collect();
            for r in 0..5 {
                let w = p.rule_weights.row(r).to_vec();
                let lit = literalize(&x, &w);
                let sig = sigmoid(p.gates[r]);
                let expect = sig * conj_plus(&lit.a, &lit.m) + (1.0 - sig) * disj_plus(&lit.a, &lit.m);
                assert_abs_diff_eq!(out.activations[[u, r]], expect, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn weight_grad_row_matches_direct_slope() {
        let vs = [0.0, 1e-13, 1e-12, 1e-6, 0.05, 0.3, 0.5, 0.9, 1.0 - 1e-9, 1.0 - 1e-10, 1.0 - 1e-11, 1.0];
        let w: Vec<f64> = vs.iter().flat_map(|&v| [v, -v]).collect();
        let g: Vec<f64> = w.iter().map(|w| g_transform(w.abs())).collect();
        let d: Vec<f64> = (0..w.len()).map(|i| 0.37 * i as f64 - 2.0).collect();
        let (l_and, l_or) = (0.8, -1.3);
        let mut out = vec![0.0; w.len()];
        weight_grad_row(&w, &g, &d, l_and, l_or, &mut out);
        for i in 0..w.len() {
            let direct = if w[i] >= 0.0 {
                (l_and + d[i]) * g_slope(w[i])
            } else {
                -((l_or - d[i]) * g_slope(-w[i]))
            };
            assert_eq!(out[i].to_bits(), direct.to_bits(), "w = {}", w[i]);
        }
    }

    #[test]
    fn blocked_transpose() {
        let a = Array2::from_shape_fn((37, 70), |(i, j)| (i * 100 + j) as f64);
        assert_eq!(transpose(a.view()), a.t());
    }

    #[test]
    fn gate_limits() {
        let mut cfg = ModelConfig::new(1, 6, 9);
        cfg.active_literals_per_rule = 3;
        let mut p = init(&cfg).unwrap();
        let rows: [&[u32]; 1] = [&[1, 4]];
        p.gates[0] = 60.0;
        let t = forward_continuous(&p, &rows).unwrap().trace;
        assert_abs_diff_eq!(t.continuous[[0, 0]], t.conj[[0, 0]], epsilon = 1e-15);
        p.gates[0] = 0.0;
        let t = forward_continuous(&p, &rows).unwrap().trace;
        assert_abs_diff_eq!(t.continuous[[0, 0]], 0.5 * (t.conj[[0, 0]] + t.disj[[0, 0]]), epsilon = 1e-15);
    }

    #[test]
    fn grafted_values_equal_discrete() {
        let p = init(&ModelConfig::new(16, 20, 2)).unwrap();
        let rows: [&[u32]; 3] = [&[0, 1, 2], &[5, 19], &[]];
        let (g, trace) = forward_grafted(&p, &rows).unwrap();
        assert_eq!(g, forward_discrete(&p, &rows).scores);
        assert!(trace.continuous.iter().all(|v| (0.0..=1.0).contains(v)));
        assert!(trace.discrete.iter().all(|&v| v == 0.0 || v == 1.0));
    }

    #[test]
    fn zero_upstream_gradient_gives_zero_gradients() {
        let mut cfg = ModelConfig::new(4, 7, 3);
        cfg.active_literals_per_rule = 3;
        let p = init(&cfg).unwrap();
        let rows: [&[u32]; 2] = [&[0, 6], &[2]];
        let (_, trace) = forward_grafted(&p, &rows).unwrap();
        let g = backward(&p, &trace, Array2::zeros((2, 7)).view()).unwrap();
        assert_eq!(g, Gradients::zeros_like(&p));
        assert!(backward(&p, &trace, Array2::zeros((3, 7)).view()).is_err());
    }

    #[test]
    fn score_all_chunks_match_single_pass() {
        let p = init(&ModelConfig::new(6, 10, 5)).unwrap();
        let rows: Vec<&[u32]> = vec![&[0], &[1, 2], &[], &[9], &[3, 4, 5]];
        assert_eq!(score_all(&p, &rows, 2), forward_discrete(&p, &rows).scores);
    }
}
