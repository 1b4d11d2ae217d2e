//! Self-cleaning: flag existing leaf edges that the model itself finds
//! implausible.
//!
//! The maskable leaves are partitioned into folds. For each fold the model is
//! trained on the taxonomy without that fold, then every masked leaf is ranked
//! against all remaining anchors. A leaf whose current parent lands far down
//! its own ranking is suspicious.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::infer::{rank_queries, AnchorCache};
use crate::model::ModelConfig;
use crate::rng::SeedStream;
use crate::split::{maskable_leaves, Query, TaxonomySplit};
use crate::taxonomy::{ConceptId, Taxonomy};
use crate::train::{fit, TrainConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CleanConfig {
    pub folds: usize,
    /// Edges whose parent ranks strictly worse than this are flagged.
    pub threshold: usize,
    /// Suggested parents kept per entry.
    pub suggestions: usize,
    /// Seeds the fold partition.
    pub seed: u64,
}

impl Default for CleanConfig {
    fn default() -> Self {
        CleanConfig {
            folds: 5,
            threshold: 1000,
            suggestions: 3,
            seed: 0,
        }
    }
}

/// One existing `⟨parent, leaf⟩` edge as judged by a model that never saw it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CleanEntry {
    pub leaf: ConceptId,
    pub parent: ConceptId,
    /// Rank of `parent` among all anchors of the fold's taxonomy.
    pub rank: usize,
    pub fold: usize,
    /// Best-ranked anchors for the leaf.
    pub suggestions: Vec<ConceptId>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CleanReport {
    pub threshold: usize,
    /// Every evaluated edge, most suspicious (largest rank) first, ties by
    /// leaf id then parent id.
    pub entries: Vec<CleanEntry>,
}

impl CleanReport {
    pub fn flagged(&self) -> impl Iterator<Item = &CleanEntry> {
        self.entries.iter().filter(move |e| e.rank > self.threshold)
    }

    /// The `n` most suspicious edges regardless of the threshold.
    pub fn most_suspicious(&self, n: usize) -> &[CleanEntry] {
        &self.entries[..n.min(self.entries.len())]
    }
}

/// Partition of the maskable leaves of `t` into `folds` groups of sizes
/// differing by at most one. Each group is sorted.
pub fn leaf_folds(t: &Taxonomy, folds: usize, seed: u64) -> Result<Vec<Vec<ConceptId>>> {
    let mut leaves = maskable_leaves(t);
    if folds < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 folds, got {folds}")));
    }
    if leaves.len() < folds {
        return Err(Error::InvalidArgument(format!(
            "{} maskable leaves cannot fill {folds} folds",
            leaves.len()
        )));
    }
    leaves.shuffle(&mut SeedStream::new(seed).split_str("folds").rng());
    let mut out = vec![Vec::new(); folds];
    for (i, leaf) in leaves.into_iter().enumerate() {
        out[i % folds].push(leaf);
    }
    for f in &mut out {
        f.sort_unstable();
    }
    Ok(out)
}

/// Runs the k-fold re-ranking; `on_fold` is called with each finished fold
/// index.
pub fn self_clean(
    t: &Taxonomy,
    clean: &CleanConfig,
    model: &ModelConfig,
    train: &TrainConfig,
    mut on_fold: impl FnMut(usize) -> Result<()>,
) -> Result<CleanReport> {
    let folds = leaf_folds(t, clean.folds, clean.seed)?;
    let mut entries = Vec::new();
    for (f, fold) in folds.iter().enumerate() {
        let removed: BTreeSet<ConceptId> = fold.iter().copied().collect();
        let existing = t.without(&removed)?;
        if existing.edge_count() == 0 {
            return Err(Error::InvalidArgument(format!("fold {f} leaves no edges to train on")));
        }
        let queries = fold
            .iter()
            .map(|&id| {
                Ok(Query {
                    concept: t.concept(id)?.clone(),
                    gold: t.parents(id)?.to_vec(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let split = TaxonomySplit::unmasked(existing);
        let trained = fit(&split, model, train)?;
        let cache = AnchorCache::build(&split.existing, &trained.best, &train.egonet_options())?;
        for (q, r) in queries.iter().zip(rank_queries(&queries, &cache, &trained.best)?) {
            let suggestions: Vec<ConceptId> = r.top_k(clean.suggestions).iter().map(|e| e.anchor).collect();
            for (&parent, &rank) in q.gold.iter().zip(&r.gold_ranks) {
                entries.push(CleanEntry {
                    leaf: q.concept.id,
                    parent,
                    rank,
                    fold: f,
                    suggestions: suggestions.clone(),
                });
            }
        }
        on_fold(f)?;
    }
    entries.sort_by(|a, b| b.rank.cmp(&a.rank).then(a.leaf.cmp(&b.leaf)).then(a.parent.cmp(&b.parent)));
    Ok(CleanReport {
        threshold: clean.threshold,
        entries,
    })
}
