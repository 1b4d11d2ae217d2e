//! Rank-based metrics and Wu–Palmer accuracy.
//!
//! Rank lists hold, for each query, the 1-based rank of every gold parent
//! among all candidates.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::infer::RankResult;
use crate::taxonomy::{ConceptId, Taxonomy};

fn check(ranks: &[Vec<usize>]) -> Result<()> {
    for (i, r) in ranks.iter().enumerate() {
        if r.is_empty() {
            return Err(Error::InvalidArgument(format!("query {i} has no gold parent ranks")));
        }
        if r.contains(&0) {
            return Err(Error::InvalidArgument(format!("query {i} has a rank of 0; ranks start at 1")));
        }
    }
    Ok(())
}

/// Mean rank pooled over every (query, gold parent) pair.
pub fn mean_rank(ranks: &[Vec<usize>]) -> Result<f64> {
    check(ranks)?;
    let pairs: usize = ranks.iter().map(Vec::len).sum();
    if pairs == 0 {
        return Err(Error::InvalidArgument("mean rank of no queries".into()));
    }
    let total: usize = ranks.iter().flatten().sum();
    Ok(total as f64 / pairs as f64)
}

/// Fraction of queries with at least one gold parent in the top `k`.
pub fn hit_at_k(ranks: &[Vec<usize>], k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::InvalidArgument("Hit@k needs k ≥ 1".into()));
    }
    check(ranks)?;
    if ranks.is_empty() {
        return Ok(0.0);
    }
    let hits = ranks.iter().filter(|r| r.iter().any(|&x| x <= k)).count();
    Ok(hits as f64 / ranks.len() as f64)
}

/// `(1/|C|) Σ_c (1/|parents(c)|) Σ_i 1/⌈R_ic / 10⌉`.
pub fn scaled_mrr(ranks: &[Vec<usize>]) -> Result<f64> {
    check(ranks)?;
    if ranks.is_empty() {
        return Err(Error::InvalidArgument("MRR of no queries".into()));
    }
    let total: f64 = ranks
        .iter()
        .map(|r| r.iter().map(|&x| 1.0 / x.div_ceil(10) as f64).sum::<f64>() / r.len() as f64)
        .sum();
    Ok(total / ranks.len() as f64)
}

/// Wu–Palmer similarity `2·depth(LCA) / (depth(p) + depth(g))`. In a
/// multi-root taxonomy the virtual root (depth 1) is the LCA of nodes with
/// no real common ancestor.
pub fn wup(t: &Taxonomy, predicted: ConceptId, gold: ConceptId) -> Result<f64> {
    let lca_depth = match t.lca(predicted, gold)? {
        Some(l) => t.depth(l)?,
        None => 1,
    };
    Ok(2.0 * lca_depth as f64 / (t.depth(predicted)? + t.depth(gold)?) as f64)
}

/// Recall `placed/total` and the harmonic mean of Wu&P accuracy and recall.
pub fn recall_and_f1(placed: usize, total: usize, mean_wup: f64) -> Result<(f64, f64)> {
    if total == 0 {
        return Err(Error::InvalidArgument("recall over zero concepts".into()));
    }
    if placed > total {
        return Err(Error::InvalidArgument(format!("placed {placed} exceeds total {total}")));
    }
    let recall = placed as f64 / total as f64;
    let f1 = if recall + mean_wup == 0.0 {
        0.0
    } else {
        2.0 * mean_wup * recall / (mean_wup + recall)
    };
    Ok((recall, f1))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub queries: usize,
    #[serde(rename = "MR")]
    pub mr: f64,
    #[serde(rename = "Hit@1")]
    pub hit_at_1: f64,
    #[serde(rename = "Hit@3")]
    pub hit_at_3: f64,
    #[serde(rename = "Hit@5")]
    pub hit_at_5: f64,
    #[serde(rename = "MRR")]
    pub mrr: f64,
    #[serde(rename = "Wu&P", skip_serializing_if = "Option::is_none", default)]
    pub wup: Option<f64>,
    #[serde(rename = "Recall", skip_serializing_if = "Option::is_none", default)]
    pub recall: Option<f64>,
    #[serde(rename = "F1", skip_serializing_if = "Option::is_none", default)]
    pub f1: Option<f64>,
}

impl MetricsReport {
    pub fn from_ranks(ranks: &[Vec<usize>]) -> Result<Self> {
        Ok(MetricsReport {
            queries: ranks.len(),
            mr: mean_rank(ranks)?,
            hit_at_1: hit_at_k(ranks, 1)?,
            hit_at_3: hit_at_k(ranks, 3)?,
            hit_at_5: hit_at_k(ranks, 5)?,
            mrr: scaled_mrr(ranks)?,
            wup: None,
            recall: None,
            f1: None,
        })
    }

    pub fn from_results(results: &[RankResult]) -> Result<Self> {
        let ranks: Vec<Vec<usize>> = results.iter().map(|r| r.gold_ranks.clone()).collect();
        Self::from_ranks(&ranks)
    }

    /// Adds Wu&P of each query's top-1 prediction against its closest gold
    /// parent, with recall and F1. Every query is placed, so recall is 1.
    pub fn with_wup(mut self, t: &Taxonomy, results: &[RankResult], gold: &[Vec<ConceptId>]) -> Result<Self> {
        if results.len() != gold.len() || results.is_empty() {
            return Err(Error::InvalidArgument("Wu&P needs one gold set per ranked query".into()));
        }
        let mut total = 0.0;
        for (r, g) in results.iter().zip(gold) {
            let top = r
                .top()
                .ok_or_else(|| Error::InvalidArgument(format!("query {} has no candidates", r.query)))?;
            let best = g
                .iter()
                .map(|&p| wup(t, top, p))
                .collect::<Result<Vec<_>>>()?
                .into_iter()
                .fold(0.0, f64::max);
            total += best;
        }
        let w = total / results.len() as f64;
        let (recall, f1) = recall_and_f1(results.len(), results.len(), w)?;
        self.wup = Some(w);
        self.recall = Some(recall);
        self.f1 = Some(f1);
        Ok(self)
    }
}
