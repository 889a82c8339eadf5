//! Human-readable rules read off trained parameters, and exact explanations.
//!
//! Extraction binarizes every rule, measures how often it fires over the
//! training rows, and then
//!
//! * drops rules that never fire (including empty ORs),
//! * folds rules that always fire (including empty ANDs) into the bias,
//! * keeps everything else as a live rule.
//!
//! Folded rules stay in the book with their readout rows so that explanations
//! can reproduce model scores exactly: an explanation's total is the readout
//! of every firing live or folded rule, summed in rule order, plus the bias.
//! That is the same sequence of floating-point additions the discrete
//! forward pass performs.

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::{IdMap, SparseBinaryMatrix};
use crate::error::{Error, Result};
use crate::logic::{BinarizedRule, Operator};
use crate::model::{binarize_weights, CompiledRules, ModelParams};

/// Version of the exported JSON layout.
pub const RULEBOOK_VERSION: u32 = 1;
const RULEBOOK_FORMAT: &str = "lia-rulebook";

/// Display names for item indices.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ItemLabels {
    names: HashMap<u32, String>,
}

impl ItemLabels {
    pub fn new(names: HashMap<u32, String>) -> Self {
        Self { names }
    }

    pub fn get(&self, item: u32) -> Option<&str> {
        self.names.get(&item).map(String::as_str)
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    /// Reads a sidecar of `original_id<sep>title[...]` lines, `|` or tab
    /// separated (MovieLens `u.item` / `movies.dat` work as-is), and keys the
    /// titles by item index through `items`. Unknown ids are ignored.
    pub fn load(path: impl AsRef<Path>, items: &IdMap) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let text = String::from_utf8(bytes)
            .unwrap_or_else(|e| e.into_bytes().iter().map(|&b| b as char).collect());
        let mut names = HashMap::new();
        for line in text.lines() {
            let mut fields = if line.contains("::") {
                line.splitn(3, "::").collect::<Vec<_>>()
            } else if line.contains('|') {
                line.splitn(3, '|').collect()
            } else {
                line.splitn(3, '\t').collect()
            };
            if fields.len() < 2 {
                continue;
            }
            fields.truncate(2);
            if let Some(idx) = items.get(fields[0].trim()) {
                names.insert(idx, fields[1].trim().to_owned());
            }
        }
        Ok(Self { names })
    }
}

/// Canonical text of a rule: `AND(Item5, NOT Item12)`; literals in item order.
pub fn render_rule(rule: &BinarizedRule, labels: Option<&ItemLabels>) -> String {
    let literals: Vec<String> = rule
        .literals()
        .into_iter()
        .map(|(item, positive)| {
            let name = labels
                .and_then(|l| l.get(item))
                .map(str::to_owned)
                .unwrap_or_else(|| format!("Item{item}"));
            if positive {
                name
            } else {
                format!("NOT {name}")
            }
        })
        .collect();
    format!("{}({})", rule.operator, literals.join(", "))
}

/// One extracted rule and its readout row.
#[derive(Debug, Clone, PartialEq)]
pub struct RuleEntry {
    /// Index of the rule neuron in the model.
    pub id: usize,
    pub rule: BinarizedRule,
    /// Fraction of training rows on which the rule fires.
    pub activation_rate: f64,
    /// `W°_{·,id}`, one weight per item.
    pub readout: Vec<f64>,
}

/// Live rules, always-on rules folded into the bias, and the bias itself.
#[derive(Debug, Clone, PartialEq)]
pub struct RuleBook {
    pub rules: Vec<RuleEntry>,
    pub folded: Vec<RuleEntry>,
    pub bias: Vec<f64>,
    pub n_items: usize,
    pub labels: Option<ItemLabels>,
}

/// Fraction of rows on which each rule fires.
pub fn activation_rates(params: &ModelParams, train: &SparseBinaryMatrix) -> Vec<f64> {
    let compiled = CompiledRules::from_params(params);
    let k = params.n_rules();
    let mut counts = vec![0usize; k];
    let mut fired = vec![false; k];
    for row in train.rows() {
        compiled.activations_into(row, &mut fired);
        for (c, &f) in counts.iter_mut().zip(&fired) {
            *c += f as usize;
        }
    }
    let n = train.n_rows().max(1) as f64;
    counts.into_iter().map(|c| c as f64 / n).collect()
}

/// Number of rules that would survive extraction.
pub fn count_live_rules(params: &ModelParams, train: &SparseBinaryMatrix) -> usize {
    let rules = binarize_weights(params);
    activation_rates(params, train)
        .iter()
        .zip(&rules)
        .filter(|(&r, rule)| r > 0.0 && r < 1.0 && !rule.is_empty())
        .count()
}

/// Reads the rule set off trained parameters and prunes dead rules.
pub fn extract_rules(params: &ModelParams, train: &SparseBinaryMatrix) -> Result<RuleBook> {
    let rules = binarize_weights(params);
    let rates = activation_rates(params, train);
    let mut live = Vec::new();
    let mut folded = Vec::new();
    for (id, (rule, rate)) in rules.into_iter().zip(rates).enumerate() {
        let entry = || RuleEntry {
            id,
            rule: rule.clone(),
            activation_rate: rate,
            readout: params.readout.row(id).to_vec(),
        };
        if rate >= 1.0 {
            folded.push(entry());
        } else if rate > 0.0 && !rule.is_empty() {
            live.push(entry());
        }
    }
    if live.is_empty() {
        return Err(Error::AllRulesPruned);
    }
    Ok(RuleBook {
        rules: live,
        folded,
        bias: params.bias.to_vec(),
        n_items: params.n_items(),
        labels: None,
    })
}

/// A rule that fired for the explained user, with its weight on the item.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiredRule {
    pub id: usize,
    pub formula: String,
    pub weight: f64,
}

/// Additive decomposition of one score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Explanation {
    pub user: Option<usize>,
    /// The user's id in the dataset, when known.
    #[serde(default)]
    pub user_label: Option<String>,
    pub item: usize,
    pub item_label: Option<String>,
    /// Firing live rules, largest |weight| first.
    pub fired: Vec<FiredRule>,
    /// Bias plus the weights of firing folded rules.
    pub bias_contribution: f64,
    pub total: f64,
    /// 1-based position among candidate items, when known.
    pub rank: Option<usize>,
    /// The item is already in the user's history.
    pub already_seen: bool,
}

impl RuleBook {
    pub fn with_labels(mut self, labels: ItemLabels) -> Self {
        self.labels = Some(labels);
        self
    }

    pub fn render(&self, entry: &RuleEntry) -> String {
        render_rule(&entry.rule, self.labels.as_ref())
    }

    /// Bias with every folded rule's readout added.
    pub fn effective_bias(&self) -> Vec<f64> {
        let mut b = self.bias.clone();
        for entry in &self.folded {
            for (bj, w) in b.iter_mut().zip(&entry.readout) {
                *bj += w;
            }
        }
        b
    }

    /// Scores every item for `user_row` using the book alone.
    pub fn score_row(&self, user_row: &[u32]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_items];
        for entry in self.firing_in_order(user_row) {
            for (o, w) in out.iter_mut().zip(&entry.readout) {
                *o += w;
            }
        }
        for (o, b) in out.iter_mut().zip(&self.bias) {
            *o += b;
        }
        out
    }

    fn firing_in_order<'a>(&'a self, user_row: &'a [u32]) -> impl Iterator<Item = &'a RuleEntry> + 'a {
        let mut all: Vec<&RuleEntry> = self.rules.iter().chain(&self.folded).collect();
        all.sort_by_key(|e| e.id);
        all.into_iter().filter(move |e| e.rule.fires(user_row))
    }

    /// Explains the score of `item` for a user with history `user_row`.
    pub fn explain(&self, user_row: &[u32], item: usize) -> Result<Explanation> {
        if item >= self.n_items {
            return Err(Error::InvalidArgument(format!(
                "item {item} out of range for {} items",
                self.n_items
            )));
        }
        let mut acc = 0.0;
        let mut folded_part = 0.0;
        let mut fired = Vec::new();
        let live_ids: std::collections::HashSet<usize> = self.rules.iter().map(|e| e.id).collect();
        for entry in self.firing_in_order(user_row) {
            let w = entry.readout[item];
            acc += w;
            if live_ids.contains(&entry.id) {
                fired.push(FiredRule {
                    id: entry.id,
                    formula: self.render(entry),
                    weight: w,
                });
            } else {
                folded_part += w;
            }
        }
        fired.sort_by(|a, b| b.weight.abs().total_cmp(&a.weight.abs()).then(a.id.cmp(&b.id)));
        Ok(Explanation {
            user: None,
            user_label: None,
            item,
            item_label: self
                .labels
                .as_ref()
                .and_then(|l| l.get(item as u32))
                .map(str::to_owned),
            fired,
            bias_contribution: self.bias[item] + folded_part,
            total: acc + self.bias[item],
            rank: None,
            already_seen: user_row.binary_search(&(item as u32)).is_ok(),
        })
    }

    pub fn export(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let json = serde_json::to_string_pretty(&self.to_document())
            .map_err(|e| Error::Rulebook(e.to_string()))?;
        fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn import(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let doc: RulebookDocument =
            serde_json::from_str(&text).map_err(|e| Error::Rulebook(format!("{}: {e}", path.display())))?;
        Self::from_document(doc)
    }

    fn to_document(&self) -> RulebookDocument {
        let rule_doc = |e: &RuleEntry, folded: bool| RuleDocument {
            id: e.id,
            operator: e.rule.operator,
            literals: e
                .rule
                .literals()
                .into_iter()
                .map(|(item, positive)| LiteralDocument {
                    item,
                    polarity: if positive { Polarity::Positive } else { Polarity::Negative },
                    label: self.labels.as_ref().and_then(|l| l.get(item)).map(str::to_owned),
                })
                .collect(),
            formula: self.render(e),
            activation_rate: e.activation_rate,
            folded_into_bias: folded,
            readout: e.readout.clone(),
        };
        RulebookDocument {
            format: RULEBOOK_FORMAT.into(),
            version: RULEBOOK_VERSION,
            n_items: self.n_items,
            bias: self.bias.clone(),
            rules: self
                .rules
                .iter()
                .map(|e| rule_doc(e, false))
                .chain(self.folded.iter().map(|e| rule_doc(e, true)))
                .collect(),
            labels: self.labels.as_ref().map(|l| {
                let mut v: Vec<(u32, String)> = l.names.iter().map(|(&k, v)| (k, v.clone())).collect();
                v.sort();
                v
            }),
        }
    }

    fn from_document(doc: RulebookDocument) -> Result<Self> {
        if doc.format != RULEBOOK_FORMAT {
            return Err(Error::Rulebook(format!("unexpected format tag `{}`", doc.format)));
        }
        if doc.version != RULEBOOK_VERSION {
            return Err(Error::Rulebook(format!(
                "unsupported version {} (expected {RULEBOOK_VERSION})",
                doc.version
            )));
        }
        if doc.bias.len() != doc.n_items {
            return Err(Error::Rulebook("bias length does not match n_items".into()));
        }
        let mut book = RuleBook {
            rules: Vec::new(),
            folded: Vec::new(),
            bias: doc.bias,
            n_items: doc.n_items,
            labels: doc.labels.map(|v| ItemLabels::new(v.into_iter().collect())),
        };
        for r in doc.rules {
            if r.readout.len() != doc.n_items {
                return Err(Error::Rulebook(format!("rule {} readout has wrong length", r.id)));
            }
            let mut positives = Vec::new();
            let mut negatives = Vec::new();
            for lit in &r.literals {
                if lit.item as usize >= doc.n_items {
                    return Err(Error::Rulebook(format!("rule {} literal out of range", r.id)));
                }
                match lit.polarity {
                    Polarity::Positive => positives.push(lit.item),
                    Polarity::Negative => negatives.push(lit.item),
                }
            }
            positives.sort_unstable();
            negatives.sort_unstable();
            let entry = RuleEntry {
                id: r.id,
                rule: BinarizedRule {
                    operator: r.operator,
                    positives,
                    negatives,
                },
                activation_rate: r.activation_rate,
                readout: r.readout,
            };
            if r.folded_into_bias {
                book.folded.push(entry);
            } else {
                book.rules.push(entry);
            }
        }
        Ok(book)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum Polarity {
    Positive,
    Negative,
}

#[derive(Debug, Serialize, Deserialize)]
struct LiteralDocument {
    item: u32,
    polarity: Polarity,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    label: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
struct RuleDocument {
    id: usize,
    operator: Operator,
    literals: Vec<LiteralDocument>,
    /// Rendered form, informational only.
    formula: String,
    activation_rate: f64,
    folded_into_bias: bool,
    readout: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct RulebookDocument {
    format: String,
    version: u32,
    n_items: usize,
    bias: Vec<f64>,
    rules: Vec<RuleDocument>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    labels: Option<Vec<(u32, String)>>,
}

impl fmt::Display for Explanation {
    /// Plain-text report: one line per firing rule with its signed contribution.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let who = match (&self.user_label, self.user) {
            (Some(l), _) => format!("user {l}"),
            (None, Some(u)) => format!("user #{u}"),
            (None, None) => "user".into(),
        };
        let what = match &self.item_label {
            Some(l) => l.clone(),
            None => format!("item #{}", self.item),
        };
        write!(f, "Explanation for {what}, {who}")?;
        if let Some(r) = self.rank {
            write!(f, " [rank {r}]")?;
        }
        writeln!(f)?;
        if self.already_seen {
            writeln!(f, "  note: the item is already in this user's history")?;
        }
        if self.fired.is_empty() {
            writeln!(f, "  no rule fires")?;
        }
        for (n, rule) in self.fired.iter().enumerate() {
            writeln!(f, "  Rule {} (#{}): {}  contributes {:+.4}", n + 1, rule.id, rule.formula, rule.weight)?;
        }
        writeln!(f, "  bias{:>width$}{:+.4}", "", self.bias_contribution, width = 2)?;
        write!(f, "  score = {:+.4}", self.total)
    }
}
