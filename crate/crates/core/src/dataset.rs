//! Interaction logs, the 70/10/20 split, and sparse per-user rows.
//!
//! Every distinct `(user, item)` pair in the source file is one positive
//! interaction; ratings and timestamps are read past and ignored. Users and
//! items are indexed contiguously in order of first appearance, and all
//! three folds of a split share the source's index spaces so that the item
//! count `N` never changes between folds.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Fraction of interactions in the training fold.
pub const TRAIN_RATIO: f64 = 0.7;
/// Fraction of interactions in the validation fold.
pub const VALIDATION_RATIO: f64 = 0.1;
/// Fraction of interactions in the test fold.
pub const TEST_RATIO: f64 = 0.2;

/// On-disk layout of an interaction log.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    /// Tab-separated `user item [rating [timestamp]]`, as in MovieLens `u.data`.
    MovielensTab,
    /// `::`-separated, as in MovieLens 1M `ratings.dat`.
    MovielensDat,
    /// Comma-separated `user,item[,rating[,timestamp]]`.
    Csv,
}

impl Format {
    fn separator(self) -> &'static str {
        match self {
            Format::MovielensTab => "\t",
            Format::MovielensDat => "::",
            Format::Csv => ",",
        }
    }
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "movielens-tab" | "tab" | "tsv" => Ok(Format::MovielensTab),
            "movielens-dat" | "dat" => Ok(Format::MovielensDat),
            "csv" => Ok(Format::Csv),
            other => Err(Error::InvalidArgument(format!(
                "unknown format `{other}` (expected movielens-tab, movielens-dat or csv)"
            ))),
        }
    }
}

impl fmt::Display for Format {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Format::MovielensTab => "movielens-tab",
            Format::MovielensDat => "movielens-dat",
            Format::Csv => "csv",
        })
    }
}

/// Bijection between original labels and contiguous indices.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IdMap {
    labels: Vec<String>,
    index: HashMap<String, u32>,
}

impl IdMap {
    /// Returns the index for `label`, assigning the next free one on first sight.
    pub fn intern(&mut self, label: &str) -> u32 {
        if let Some(&idx) = self.index.get(label) {
            return idx;
        }
        let idx = self.labels.len() as u32;
        self.labels.push(label.to_owned());
        self.index.insert(label.to_owned(), idx);
        idx
    }

    pub fn get(&self, label: &str) -> Option<u32> {
        self.index.get(label).copied()
    }

    pub fn label(&self, idx: u32) -> Option<&str> {
        self.labels.get(idx as usize).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// User and item label maps shared by every fold of a dataset.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IdMaps {
    pub users: IdMap,
    pub items: IdMap,
}

/// A set of distinct binary user-item interactions over fixed index spaces.
#[derive(Debug, Clone, PartialEq)]
pub struct InteractionSet {
    ids: Arc<IdMaps>,
    pairs: Vec<(u32, u32)>,
}

impl InteractionSet {
    /// Builds a set from already-indexed pairs. Duplicates are collapsed,
    /// keeping the first occurrence.
    pub fn new(ids: Arc<IdMaps>, pairs: impl IntoIterator<Item = (u32, u32)>) -> Result<Self> {
        let n_users = ids.users.len() as u32;
        let n_items = ids.items.len() as u32;
        let mut seen = HashSet::new();
        let mut kept = Vec::new();
        for (u, i) in pairs {
            if u >= n_users || i >= n_items {
                return Err(Error::InvalidArgument(format!(
                    "pair ({u}, {i}) outside index space {n_users}x{n_items}"
                )));
            }
            if seen.insert((u, i)) {
                kept.push((u, i));
            }
        }
        Ok(Self { ids, pairs: kept })
    }

    /// Interactions in first-appearance order.
    pub fn pairs(&self) -> &[(u32, u32)] {
        &self.pairs
    }

    pub fn ids(&self) -> &Arc<IdMaps> {
        &self.ids
    }

    pub fn n_users(&self) -> usize {
        self.ids.users.len()
    }

    pub fn n_items(&self) -> usize {
        self.ids.items.len()
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn to_rows(&self) -> SparseBinaryMatrix {
        to_rows(self)
    }

    pub fn stats(&self) -> DatasetStats {
        stats(self)
    }
}

/// Reads an interaction log.
///
/// Blank lines and lines starting with `#` are skipped. Any line with fewer
/// than two non-empty fields is an error that carries its 1-based line number.
pub fn load_interactions(path: impl AsRef<Path>, format: Format) -> Result<InteractionSet> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    // MovieLens files are Latin-1; labels only need to be stable, not pretty.
    let text = String::from_utf8(bytes)
        .unwrap_or_else(|e| e.into_bytes().iter().map(|&b| b as char).collect());
    parse_interactions(&text, format, path)
}

fn parse_interactions(text: &str, format: Format, path: &Path) -> Result<InteractionSet> {
    let sep = format.separator();
    let mut ids = IdMaps::default();
    let mut pairs = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let mut fields = line.split(sep).map(str::trim);
        let (user, item) = match (fields.next(), fields.next()) {
            (Some(u), Some(i)) if !u.is_empty() && !i.is_empty() => (u, i),
            _ => {
                return Err(Error::Parse {
                    path: path.to_owned(),
                    line: lineno + 1,
                    message: format!("expected at least user{sep}item, got `{line}`"),
                })
            }
        };
        let u = ids.users.intern(user);
        let i = ids.items.intern(item);
        pairs.push((u, i));
    }
    if pairs.is_empty() {
        return Err(Error::EmptyDataset(path.to_owned()));
    }
    InteractionSet::new(Arc::new(ids), pairs)
}

/// Which of the three folds an interaction belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Fold {
    Train,
    Validation,
    Test,
}

impl fmt::Display for Fold {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Fold::Train => "train",
            Fold::Validation => "validation",
            Fold::Test => "test",
        })
    }
}

impl FromStr for Fold {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Fold::Train),
            "validation" | "valid" | "val" => Ok(Fold::Validation),
            "test" => Ok(Fold::Test),
            other => Err(Error::InvalidArgument(format!("unknown fold `{other}`"))),
        }
    }
}

/// Three disjoint folds over the same index spaces.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitDataset {
    pub train: InteractionSet,
    pub validation: InteractionSet,
    pub test: InteractionSet,
    pub seed: u64,
    pub ratios: (f64, f64, f64),
    assignment: Vec<((u32, u32), Fold)>,
}

/// Random interaction-level split: a seeded shuffle sliced at `⌊0.7n⌋` and `⌊0.8n⌋`.
pub fn split(data: &InteractionSet, seed: u64) -> SplitDataset {
    let n = data.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);

    let train_end = n * 7 / 10;
    let val_end = n * 8 / 10;
    let mut folds = vec![Fold::Test; n];
    for (pos, &idx) in order.iter().enumerate() {
        folds[idx] = if pos < train_end {
            Fold::Train
        } else if pos < val_end {
            Fold::Validation
        } else {
            Fold::Test
        };
    }
    split_from_folds(data, &folds, seed)
}

fn split_from_folds(data: &InteractionSet, folds: &[Fold], seed: u64) -> SplitDataset {
    let pick = |want: Fold| InteractionSet {
        ids: Arc::clone(&data.ids),
        pairs: data
            .pairs
            .iter()
            .zip(folds)
            .filter(|(_, &f)| f == want)
            .map(|(&p, _)| p)
            .collect(),
    };
    SplitDataset {
        train: pick(Fold::Train),
        validation: pick(Fold::Validation),
        test: pick(Fold::Test),
        seed,
        ratios: (TRAIN_RATIO, VALIDATION_RATIO, TEST_RATIO),
        assignment: data.pairs.iter().copied().zip(folds.iter().copied()).collect(),
    }
}

impl SplitDataset {
    pub fn n_users(&self) -> usize {
        self.train.n_users()
    }

    pub fn n_items(&self) -> usize {
        self.train.n_items()
    }

    pub fn fold(&self, fold: Fold) -> &InteractionSet {
        match fold {
            Fold::Train => &self.train,
            Fold::Validation => &self.validation,
            Fold::Test => &self.test,
        }
    }

    /// Sparse rows of all three folds.
    pub fn rows(&self) -> SplitRows {
        SplitRows {
            train: self.train.to_rows(),
            validation: self.validation.to_rows(),
            test: self.test.to_rows(),
        }
    }

    /// Writes the split manifest: one `user<TAB>item<TAB>fold` line per
    /// interaction, using original labels, in source order.
    pub fn write_manifest(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        let ids = self.train.ids();
        let write = |out: &mut BufWriter<fs::File>| -> std::io::Result<()> {
            writeln!(out, "# user\titem\tfold\tseed={}", self.seed)?;
            for &((u, i), fold) in &self.assignment {
                writeln!(
                    out,
                    "{}\t{}\t{}",
                    ids.users.label(u).unwrap_or_default(),
                    ids.items.label(i).unwrap_or_default(),
                    fold
                )?;
            }
            out.flush()
        };
        write(&mut out).map_err(|e| Error::io(path, e))
    }

    /// Restores a split from a manifest written by [`SplitDataset::write_manifest`].
    /// Index assignment is identical to the original load.
    pub fn read_manifest(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut seed = 0;
        let mut ids = IdMaps::default();
        let mut pairs = Vec::new();
        let mut folds = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            if let Some(header) = line.strip_prefix('#') {
                if let Some(s) = header.split("seed=").nth(1) {
                    seed = s.trim().parse().unwrap_or(0);
                }
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            let parse_err = |message: String| Error::Parse {
                path: path.to_owned(),
                line: lineno + 1,
                message,
            };
            if fields.len() != 3 {
                return Err(parse_err(format!("expected 3 fields, got {}", fields.len())));
            }
            let fold: Fold = fields[2].parse().map_err(|e: Error| parse_err(e.to_string()))?;
            pairs.push((ids.users.intern(fields[0]), ids.items.intern(fields[1])));
            folds.push(fold);
        }
        if pairs.is_empty() {
            return Err(Error::EmptyDataset(path.to_owned()));
        }
        let source = InteractionSet::new(Arc::new(ids), pairs)?;
        if source.len() != folds.len() {
            return Err(Error::Parse {
                path: path.to_owned(),
                line: 0,
                message: "manifest lists a pair twice".into(),
            });
        }
        Ok(split_from_folds(&source, &folds, seed))
    }
}

/// Rows of the three folds, ready for scoring and evaluation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitRows {
    pub train: SparseBinaryMatrix,
    pub validation: SparseBinaryMatrix,
    pub test: SparseBinaryMatrix,
}

impl SplitRows {
    pub fn fold(&self, fold: Fold) -> &SparseBinaryMatrix {
        match fold {
            Fold::Train => &self.train,
            Fold::Validation => &self.validation,
            Fold::Test => &self.test,
        }
    }
}

/// Row-compressed binary matrix: each user's interacted items, sorted and unique.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SparseBinaryMatrix {
    rows: Vec<Vec<u32>>,
    n_items: usize,
}

impl SparseBinaryMatrix {
    /// Builds a matrix from arbitrary rows; each row is sorted and deduplicated.
    pub fn from_rows(mut rows: Vec<Vec<u32>>, n_items: usize) -> Result<Self> {
        for row in &mut rows {
            row.sort_unstable();
            row.dedup();
            if let Some(&last) = row.last() {
                if last as usize >= n_items {
                    return Err(Error::InvalidArgument(format!(
                        "item {last} out of range for {n_items} items"
                    )));
                }
            }
        }
        Ok(Self { rows, n_items })
    }

    pub fn row(&self, user: usize) -> &[u32] {
        &self.rows[user]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[u32]> {
        self.rows.iter().map(Vec::as_slice)
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_items(&self) -> usize {
        self.n_items
    }

    pub fn nnz(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    pub fn contains(&self, user: usize, item: u32) -> bool {
        self.rows[user].binary_search(&item).is_ok()
    }

    /// Flattens back to `(user, item)` pairs in row-major order.
    pub fn pairs(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        self.rows
            .iter()
            .enumerate()
            .flat_map(|(u, row)| row.iter().map(move |&i| (u as u32, i)))
    }

    /// Dense boolean view of one row.
    pub fn dense_row(&self, user: usize) -> Vec<bool> {
        let mut dense = vec![false; self.n_items];
        for &i in &self.rows[user] {
            dense[i as usize] = true;
        }
        dense
    }
}

pub fn to_rows(data: &InteractionSet) -> SparseBinaryMatrix {
    let mut rows = vec![Vec::new(); data.n_users()];
    for &(u, i) in data.pairs() {
        rows[u as usize].push(i);
    }
    for row in &mut rows {
        row.sort_unstable();
    }
    SparseBinaryMatrix {
        rows,
        n_items: data.n_items(),
    }
}

/// Size and density of an interaction set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DatasetStats {
    pub n_users: usize,
    pub n_items: usize,
    pub n_interactions: usize,
    pub density: f64,
}

pub fn stats(data: &InteractionSet) -> DatasetStats {
    let cells = data.n_users() as f64 * data.n_items() as f64;
    DatasetStats {
        n_users: data.n_users(),
        n_items: data.n_items(),
        n_interactions: data.len(),
        density: if cells > 0.0 {
            data.len() as f64 / cells
        } else {
            0.0
        },
    }
}

impl fmt::Display for DatasetStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "users={} items={} interactions={} density={:.2}%",
            self.n_users,
            self.n_items,
            self.n_interactions,
            self.density * 100.0
        )
    }
}
