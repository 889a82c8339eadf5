//! Full-ranking NDCG@k with training-item masking, and a popularity floor.
//!
//! Scores come from the user's training row. Candidates are all items except
//! the training items (and, on the test fold, the validation items); the
//! relevant set is the fold's items. Users whose fold row is empty are left
//! out of the mean.

use std::fmt;
use std::fs;
use std::path::Path;

use ndarray::ArrayView1;

use crate::dataset::{Fold, SparseBinaryMatrix, SplitRows};
use crate::error::{Error, Result};
use crate::model::{score_all, ModelParams};

/// Default ranking cutoff.
pub const DEFAULT_K: usize = 20;

const SCORE_CHUNK: usize = 256;

/// Items not in `mask`, by descending score with ties broken by ascending index.
///
/// `mask` must be sorted.
pub fn rank_items(scores: &[f64], mask: &[u32]) -> Vec<u32> {
    let mut ranked: Vec<u32> = (0..scores.len() as u32)
        .filter(|i| mask.binary_search(i).is_err())
        .collect();
    ranked.sort_by(|&a, &b| {
        scores[b as usize]
            .total_cmp(&scores[a as usize])
            .then(a.cmp(&b))
    });
    ranked
}

/// Same order as [`rank_items`], truncated to the first `k`.
pub fn top_k(scores: &[f64], mask: &[u32], k: usize) -> Vec<u32> {
    let mut ranked = rank_items(scores, mask);
    ranked.truncate(k);
    ranked
}

/// Binary-gain NDCG with a log2 discount; `relevant` must be sorted and non-empty.
pub fn ndcg_at_k(ranked: &[u32], relevant: &[u32], k: usize) -> f64 {
    debug_assert!(!relevant.is_empty());
    let dcg: f64 = ranked
        .iter()
        .take(k)
        .enumerate()
        .filter(|(_, i)| relevant.binary_search(i).is_ok())
        .map(|(p, _)| 1.0 / ((p + 2) as f64).log2())
        .sum();
    let idcg: f64 = (0..k.min(relevant.len()))
        .map(|p| 1.0 / ((p + 2) as f64).log2())
        .sum();
    dcg / idcg
}

/// Mean NDCG@k over evaluated users.
#[derive(Debug, Clone, PartialEq)]
pub struct Metrics {
    pub ndcg: f64,
    pub k: usize,
    pub fold: Fold,
    pub users_evaluated: usize,
    /// `(user, ndcg)` for every evaluated user.
    pub per_user: Vec<(u32, f64)>,
}

impl Metrics {
    /// Machine-readable `key=value` lines.
    pub fn to_key_values(&self, seed: u64) -> String {
        format!(
            "metric=ndcg\nk={}\nfold={}\nvalue={:.6}\nusers_evaluated={}\nseed={}\n",
            self.k, self.fold, self.ndcg, self.users_evaluated, seed
        )
    }

    pub fn write_report(&self, path: impl AsRef<Path>, seed: u64) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_key_values(seed)).map_err(|e| Error::io(path, e))
    }
}

impl fmt::Display for Metrics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<12} {:>4} {:>10} {:>8}", "fold", "k", "NDCG@k", "users")?;
        write!(
            f,
            "{:<12} {:>4} {:>10.4} {:>8}",
            self.fold.to_string(),
            self.k,
            self.ndcg,
            self.users_evaluated
        )
    }
}

fn candidate_mask(rows: &SplitRows, fold: Fold, user: usize) -> Vec<u32> {
    let mut mask = rows.train.row(user).to_vec();
    if fold == Fold::Test {
        mask.extend_from_slice(rows.validation.row(user));
        mask.sort_unstable();
    }
    mask
}

/// Evaluates an arbitrary scorer. `score_rows` receives a block of training
/// rows and returns one score vector per row.
pub fn evaluate_with<F>(rows: &SplitRows, k: usize, fold: Fold, mut score_rows: F) -> Metrics
where
    F: FnMut(&[&[u32]]) -> Vec<Vec<f64>>,
{
    let target: &SparseBinaryMatrix = rows.fold(fold);
    let users: Vec<usize> = (0..target.n_rows()).filter(|&u| !target.row(u).is_empty()).collect();
    let mut per_user = Vec::with_capacity(users.len());
    for block in users.chunks(SCORE_CHUNK) {
        let inputs: Vec<&[u32]> = block.iter().map(|&u| rows.train.row(u)).collect();
        let scores = score_rows(&inputs);
        for (&u, s) in block.iter().zip(&scores) {
            let ranked = top_k(s, &candidate_mask(rows, fold, u), k);
            per_user.push((u as u32, ndcg_at_k(&ranked, target.row(u), k)));
        }
    }
    let n = per_user.len();
    Metrics {
        ndcg: if n == 0 {
            0.0
        } else {
            per_user.iter().map(|(_, v)| v).sum::<f64>() / n as f64
        },
        k,
        fold,
        users_evaluated: n,
        per_user,
    }
}

/// NDCG@k of the model's discrete scores on `fold`.
pub fn evaluate(params: &ModelParams, rows: &SplitRows, k: usize, fold: Fold) -> Metrics {
    evaluate_with(rows, k, fold, |block| {
        score_all(params, block, SCORE_CHUNK)
            .rows()
            .into_iter()
            .map(|r: ArrayView1<'_, f64>| r.to_vec())
            .collect()
    })
}

/// Training interaction count per item.
pub fn popularity_baseline(train: &SparseBinaryMatrix) -> Vec<f64> {
    let mut counts = vec![0.0; train.n_items()];
    for row in train.rows() {
        for &i in row {
            counts[i as usize] += 1.0;
        }
    }
    counts
}

/// NDCG@k of the popularity ranking on `fold`.
pub fn evaluate_popularity(rows: &SplitRows, k: usize, fold: Fold) -> Metrics {
    let pop = popularity_baseline(&rows.train);
    evaluate_with(rows, k, fold, |block| vec![pop.clone(); block.len()])
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn rank_examples() {
        assert_eq!(rank_items(&[1.0; 4], &[]), vec![0, 1, 2, 3]);
        assert!(rank_items(&[0.3, 0.1], &[0, 1]).is_empty());
        assert_eq!(rank_items(&[0.1, 0.9, 0.5], &[1]), vec![2, 0]);
    }

    #[test]
    fn ndcg_examples() {
        assert_eq!(ndcg_at_k(&[4, 1, 2], &[4], 20), 1.0);
        assert_abs_diff_eq!(ndcg_at_k(&[1, 4, 2], &[4], 20), 1.0 / 3f64.log2(), epsilon = 1e-15);
        assert_abs_diff_eq!(ndcg_at_k(&[1, 4, 2], &[4], 20), 0.63093, epsilon = 1e-5);
        assert_abs_diff_eq!(ndcg_at_k(&[0, 1, 2, 7], &[0, 1, 2], 20), 1.0, epsilon = 1e-15);
        assert_eq!(ndcg_at_k(&[1, 4], &[4], 1), 0.0);
    }

    #[test]
    fn popularity_counts() {
        let train = SparseBinaryMatrix::from_rows(vec![vec![0, 1], vec![0], vec![]], 3).unwrap();
        assert_eq!(popularity_baseline(&train), vec![2.0, 1.0, 0.0]);
        let empty = SparseBinaryMatrix::from_rows(vec![vec![]], 4).unwrap();
        assert_eq!(popularity_baseline(&empty), vec![0.0; 4]);
    }

    fn rows(train: Vec<Vec<u32>>, val: Vec<Vec<u32>>, test: Vec<Vec<u32>>, n: usize) -> SplitRows {
        SplitRows {
            train: SparseBinaryMatrix::from_rows(train, n).unwrap(),
            validation: SparseBinaryMatrix::from_rows(val, n).unwrap(),
            test: SparseBinaryMatrix::from_rows(test, n).unwrap(),
        }
    }

    #[test]
    fn two_user_toy_by_hand() {
        // items 0..5, popularity from train: item0=2, item1=1, others 0
        let split = rows(
            vec![vec![0, 1], vec![0]],
            vec![vec![], vec![2]],
            vec![vec![3], vec![4]],
            5,
        );
        // user 0 test ranking: candidates {2,3,4} by (0,0,0) -> [2,3,4]; item 3 at rank 2
        // user 1 test ranking: candidates {1,3,4} -> [1,3,4]; item 4 at rank 3
        let m = evaluate_popularity(&split, 20, Fold::Test);
        let expect = (1.0 / 3f64.log2() + 1.0 / 4f64.log2()) / 2.0;
        assert_abs_diff_eq!(m.ndcg, expect, epsilon = 1e-15);
        assert_eq!(m.users_evaluated, 2);

        // validation: only user 1; candidates {1,2,3,4} -> [1,2,3,4], item 2 at rank 2
        let m = evaluate_popularity(&split, 20, Fold::Validation);
        assert_eq!(m.users_evaluated, 1);
        assert_abs_diff_eq!(m.ndcg, 1.0 / 3f64.log2(), epsilon = 1e-15);
    }

    #[test]
    fn perfect_scorer_gets_one() {
        let split = rows(vec![vec![0], vec![1]], vec![vec![], vec![]], vec![vec![2, 3], vec![4]], 5);
        let m = evaluate_with(&split, 20, Fold::Test, |block| {
            block
                .iter()
                .map(|train| {
                    let mut s = vec![0.0; 5];
                    if train == &[0] {
                        s[2] = 1.0;
                        s[3] = 1.0;
                    } else {
                        s[4] = 1.0;
                    }
                    s
                })
                .collect()
        });
        assert_eq!(m.ndcg, 1.0);
    }

    proptest! {
        #[test]
        fn ranking_scale_invariant_and_masked(scores in proptest::collection::vec(-5.0f64..5.0, 1..30),
                                              c in 0.01f64..100.0,
                                              mask_bits in proptest::collection::vec(any::<bool>(), 30)) {
            let mask: Vec<u32> = (0..scores.len() as u32).filter(|&i| mask_bits[i as usize]).collect();
            let scaled: Vec<f64> = scores.iter().map(|s| s * c).collect();
            let a = rank_items(&scores, &mask);
            prop_assert_eq!(&a, &rank_items(&scaled, &mask));
            prop_assert!(a.iter().all(|i| mask.binary_search(i).is_err()));
            prop_assert_eq!(a.len() + mask.len(), scores.len());
        }
    }
}
