//! Differentiable AND/OR activations and their exact boolean counterparts.
//!
//! A rule's weight row `w ∈ [-1, 1]^N` carries two things per item: the
//! magnitude `|w_i|` says how strongly item `i` participates, the sign says
//! whether it appears as a positive literal (user interacted) or a negated
//! one (user did not). After binarization only magnitudes strictly above
//! [`TAU`] survive as literals.
//!
//! The relaxations are built from two element-wise maps
//!
//! ```text
//! G(v) = sqrt(-ln(max(1 - v, 1e-10)))     v in [0, 1]
//! P(v) = 1 / (1 - v)                      v <= 0
//! Q(z, m) = P(-sum_i G(z_i) G(m_i))
//! Conj+(a, m) = Q(1 - a, m)
//! Disj+(a, m) = 1 - Q(a, m)
//! ```
//!
//! `G(0) = 0`, so an inactive literal (`m_i = 0`) or a satisfied literal
//! contributes nothing to the conjunction's sum and `Conj+` is exactly 1 when
//! every participating literal holds. Symmetrically `Disj+` is exactly 0 when
//! no participating literal holds.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Binarization threshold on weight magnitude.
pub const TAU: f64 = 0.5;

/// Guard inside the logarithm of [`g_transform`].
pub const G_GUARD: f64 = 1e-10;

/// Smallest magnitude at which the slope of `G` is evaluated; `G'` diverges at 0.
pub const G_SLOPE_FLOOR: f64 = 1e-12;

/// `G(v) = sqrt(-ln(max(1 - v, ε)))` with `v` clamped to `[0, 1]`.
#[inline]
pub fn g_transform(v: f64) -> f64 {
    let v = v.clamp(0.0, 1.0);
    (-(1.0 - v).max(G_GUARD).ln()).sqrt()
}

/// `G(1)`, the transformed value of a binary one.
#[inline]
pub fn g_one() -> f64 {
    g_transform(1.0)
}

/// Derivative of [`g_transform`]. Zero where the guard is active, and
/// evaluated at [`G_SLOPE_FLOOR`] below it so that it stays finite at 0.
#[inline]
pub fn g_slope(v: f64) -> f64 {
    let v = v.clamp(G_SLOPE_FLOOR, 1.0);
    let one_minus = 1.0 - v;
    if one_minus <= G_GUARD {
        return 0.0;
    }
    let g = (-one_minus.ln()).sqrt();
    1.0 / (2.0 * g * one_minus)
}

/// `P(v) = 1 / (1 - v)` for `v <= 0`.
pub fn p_project(v: f64) -> Result<f64> {
    if v > 0.0 || v.is_nan() {
        return Err(Error::Contract(format!("P is defined on v <= 0, got {v}")));
    }
    Ok(p_unchecked(v))
}

#[inline]
pub(crate) fn p_unchecked(v: f64) -> f64 {
    1.0 / (1.0 - v)
}

/// `Q(z, m) = P(-Σ G(z_i)·G(m_i))` for a binary `z`.
pub fn q_row(z: &[bool], m: &[f64]) -> f64 {
    debug_assert_eq!(z.len(), m.len());
    let g1 = g_one();
    let sum: f64 = z
        .iter()
        .zip(m)
        .filter(|(&zi, _)| zi)
        .map(|(_, &mi)| g1 * g_transform(mi))
        .sum();
    p_unchecked(-sum)
}

/// Relaxed conjunction over literal values `a` with participation `m`.
pub fn conj_plus(a: &[bool], m: &[f64]) -> f64 {
    let violated: Vec<bool> = a.iter().map(|&ai| !ai).collect();
    q_row(&violated, m)
}

/// Relaxed disjunction over literal values `a` with participation `m`.
pub fn disj_plus(a: &[bool], m: &[f64]) -> f64 {
    1.0 - q_row(a, m)
}

/// Logical operator selected by a rule's gate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Operator {
    And,
    Or,
}

impl Operator {
    /// Hard gate: AND iff `g > 0`.
    pub fn from_gate(g: f64) -> Self {
        if g > 0.0 {
            Operator::And
        } else {
            Operator::Or
        }
    }
}

impl fmt::Display for Operator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Operator::And => "AND",
            Operator::Or => "OR",
        })
    }
}

/// A rule after thresholding: operator plus sorted positive and negated item sets.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BinarizedRule {
    pub operator: Operator,
    pub positives: Vec<u32>,
    pub negatives: Vec<u32>,
}

impl BinarizedRule {
    /// Thresholds one weight row at `tau` with strict inequalities.
    pub fn from_weights(weights: &[f64], gate: f64, tau: f64) -> Self {
        let mut positives = Vec::new();
        let mut negatives = Vec::new();
        for (i, &w) in weights.iter().enumerate() {
            if w > tau {
                positives.push(i as u32);
            } else if w < -tau {
                negatives.push(i as u32);
            }
        }
        Self {
            operator: Operator::from_gate(gate),
            positives,
            negatives,
        }
    }

    pub fn n_literals(&self) -> usize {
        self.positives.len() + self.negatives.len()
    }

    pub fn is_empty(&self) -> bool {
        self.n_literals() == 0
    }

    /// Evaluates the rule on a sorted sparse row of interacted items.
    pub fn fires(&self, row: &[u32]) -> bool {
        let has = |i: &u32| row.binary_search(i).is_ok();
        match self.operator {
            Operator::And => self.positives.iter().all(has) && !self.negatives.iter().any(has),
            Operator::Or => self.positives.iter().any(has) || !self.negatives.iter().all(has),
        }
    }

    /// Literals in item order as `(item, is_positive)`.
    pub fn literals(&self) -> Vec<(u32, bool)> {
        let mut lits: Vec<(u32, bool)> = self
            .positives
            .iter()
            .map(|&i| (i, true))
            .chain(self.negatives.iter().map(|&i| (i, false)))
            .collect();
        lits.sort_unstable();
        lits
    }
}

/// Exact boolean evaluation of `rule` on a dense binary row.
///
/// Empty AND is true and empty OR is false.
pub fn boolean_eval(x: &[bool], rule: &BinarizedRule) -> bool {
    let lit = |i: u32, positive: bool| x[i as usize] == positive;
    let mut literals = rule
        .positives
        .iter()
        .map(|&i| lit(i, true))
        .chain(rule.negatives.iter().map(|&i| lit(i, false)));
    match rule.operator {
        Operator::And => literals.all(|l| l),
        Operator::Or => literals.any(|l| l),
    }
}

/// Sign-adjusted inputs and participation magnitudes for one rule.
#[derive(Debug, Clone, PartialEq)]
pub struct LiteralRow {
    pub a: Vec<bool>,
    pub m: Vec<f64>,
}

/// `a_i = x_i` for `w_i >= 0`, `1 - x_i` otherwise; `m_i = |w_i|`.
pub fn literalize(x: &[bool], w: &[f64]) -> LiteralRow {
    debug_assert_eq!(x.len(), w.len());
    let a = x
        .iter()
        .zip(w)
        .map(|(&xi, &wi)| if wi >= 0.0 { xi } else { !xi })
        .collect();
    let m = w.iter().map(|wi| wi.abs()).collect();
    LiteralRow { a, m }
}
