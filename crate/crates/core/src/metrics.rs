//! Top-k ranking and the Recall / NDCG holdout protocol.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashSet};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{dot, Matrix};
use crate::model::SolverConfig;
use crate::pipeline::{HoldoutSplit, UserProjector};

/// Descending score, then ascending item index.
#[inline]
fn rank_order(scores: &[f64], a: usize, b: usize) -> Ordering {
    scores[b].total_cmp(&scores[a]).then(a.cmp(&b))
}

/// Top `k` item indices by score, skipping `exclude`. Returns the whole
/// candidate pool, ranked, when it has fewer than `k` items.
pub fn top_k(scores: &[f64], exclude: &HashSet<usize>, k: usize) -> Vec<usize> {
    let mut candidates: Vec<usize> = (0..scores.len()).filter(|i| !exclude.contains(i)).collect();
    if k == 0 {
        return Vec::new();
    }
    if k < candidates.len() {
        candidates.select_nth_unstable_by(k - 1, |&a, &b| rank_order(scores, a, b));
        candidates.truncate(k);
    }
    candidates.sort_unstable_by(|&a, &b| rank_order(scores, a, b));
    candidates
}

/// Scores every item against `user` and returns the top `k`.
pub fn rank_items(user: &[f64], items: &Matrix, exclude: &HashSet<usize>, k: usize) -> Vec<usize> {
    let scores: Vec<f64> = items.iter_rows().map(|h| dot(user, h)).collect();
    top_k(&scores, exclude, k)
}

/// `|topk[..k] ∩ targets| / min(k, |targets|)`
pub fn recall_at_k(topk: &[usize], targets: &HashSet<usize>, k: usize) -> f64 {
    if targets.is_empty() || k == 0 {
        return 0.0;
    }
    let hits = topk.iter().take(k).filter(|i| targets.contains(i)).count();
    hits as f64 / k.min(targets.len()) as f64
}

/// Truncated NDCG with binary relevance.
pub fn ndcg_at_k(topk: &[usize], targets: &HashSet<usize>, k: usize) -> f64 {
    if targets.is_empty() || k == 0 {
        return 0.0;
    }
    let discount = |pos: usize| 1.0 / ((pos + 2) as f64).log2();
    let dcg: f64 = topk
        .iter()
        .take(k)
        .enumerate()
        .filter(|(_, i)| targets.contains(i))
        .map(|(p, _)| discount(p))
        .sum();
    let idcg: f64 = (0..k.min(targets.len())).map(discount).sum();
    dcg / idcg
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalConfig {
    pub recall_ks: Vec<usize>,
    pub ndcg_ks: Vec<usize>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            recall_ks: vec![20, 50],
            ndcg_ks: vec![100],
        }
    }
}

impl EvalConfig {
    fn max_k(&self) -> usize {
        self.recall_ks.iter().chain(&self.ndcg_ks).copied().max().unwrap_or(0)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MetricReport {
    pub recall_at: BTreeMap<usize, f64>,
    pub ndcg_at: BTreeMap<usize, f64>,
    pub num_users_evaluated: usize,
}

impl MetricReport {
    pub fn recall(&self, k: usize) -> Option<f64> {
        self.recall_at.get(&k).copied()
    }

    pub fn ndcg(&self, k: usize) -> Option<f64> {
        self.ndcg_at.get(&k).copied()
    }
}

/// Per-user metric values in the order of `config.recall_ks` then `config.ndcg_ks`.
pub fn user_metrics(topk: &[usize], targets: &HashSet<usize>, config: &EvalConfig) -> Vec<f64> {
    config
        .recall_ks
        .iter()
        .map(|&k| recall_at_k(topk, targets, k))
        .chain(config.ndcg_ks.iter().map(|&k| ndcg_at_k(topk, targets, k)))
        .collect()
}

/// Folds in every evaluated holdout user, ranks all items outside its input
/// fold and averages the metrics over users.
pub fn evaluate_holdout(
    items: &Matrix,
    split: &HoldoutSplit,
    config: &SolverConfig,
    eval: &EvalConfig,
) -> Result<MetricReport> {
    if eval.recall_ks.is_empty() && eval.ndcg_ks.is_empty() {
        return Err(Error::structure("no cutoffs to evaluate"));
    }
    let users: Vec<_> = split.evaluated_users().collect();
    if users.is_empty() {
        return Err(Error::structure("no evaluated holdout users"));
    }
    let projector = UserProjector::new(items, config);
    let d = items.cols();
    let max_k = eval.max_k();

    let per_user: Vec<Vec<f64>> = users
        .par_iter()
        .map_init(
            || vec![0.0; d * d],
            |scratch, user| -> Result<Vec<f64>> {
                let w = projector.project_into(&user.input, scratch)?;
                let exclude: HashSet<usize> = user.input.iter().map(|e| e.item).collect();
                let targets: HashSet<usize> = user.target.iter().map(|e| e.item).collect();
                let topk = rank_items(&w, items, &exclude, max_k);
                Ok(user_metrics(&topk, &targets, eval))
            },
        )
        .collect::<Result<_>>()?;

    // sequential reduction keeps the sum independent of the thread count
    let width = eval.recall_ks.len() + eval.ndcg_ks.len();
    let mut sums = vec![0.0; width];
    for m in &per_user {
        for (s, v) in sums.iter_mut().zip(m) {
            *s += v;
        }
    }
    let n = per_user.len() as f64;
    let mut report = MetricReport {
        num_users_evaluated: per_user.len(),
        ..MetricReport::default()
    };
    for (j, &k) in eval.recall_ks.iter().enumerate() {
        report.recall_at.insert(k, sums[j] / n);
    }
    for (j, &k) in eval.ndcg_ks.iter().enumerate() {
        report.ndcg_at.insert(k, sums[eval.recall_ks.len() + j] / n);
    }
    Ok(report)
}
