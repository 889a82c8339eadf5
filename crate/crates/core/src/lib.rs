//! Interpretable collaborative filtering with learned logical rules.
//!
//! A user's interaction history is a binary vector over items. A layer of
//! rule neurons reads it: each rule is a signed weight row (the sign of a
//! weight marks a negated literal, its magnitude above `τ = 0.5` marks
//! participation) plus a gate that selects AND or OR. The firing pattern of
//! the rules is mapped back to item scores by a linear readout, so every
//! score is exactly the sum of the readout weights of the rules that fired
//! plus a per-item bias.
//!
//! Training runs a continuous relaxation of the rules next to the discrete
//! ones and grafts the relaxation's gradients onto the discrete outputs.
//!
//! Modules, bottom up:
//!
//! * [`dataset`] loads interaction logs and splits them 70/10/20.
//! * [`logic`] holds the relaxed AND/OR activations and boolean evaluation.
//! * [`model`] holds parameters, forward passes and the backward pass.
//! * [`training`] has the loss, Adam, the epoch loop and a gradient checker.
//! * [`evaluation`] computes NDCG@k and a popularity baseline.
//! * [`rulebook`] extracts, prunes, renders and explains rules.
//! * [`checkpoint`] reads and writes the binary parameter container.
//! * [`config`] and [`pipeline`] drive end-to-end runs for the `lia` binary.

pub mod checkpoint;
pub mod config;
pub mod dataset;
pub mod error;
pub mod evaluation;
pub mod logic;
pub mod model;
pub mod pipeline;
pub mod rulebook;
pub mod training;

pub use error::{Error, Result};
