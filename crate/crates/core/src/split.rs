//! Held-out query construction by masking leaves of a taxonomy.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::rng::SeedStream;
use crate::taxonomy::{Concept, ConceptId, Taxonomy};

/// A new concept to place, with its gold parents in the existing taxonomy.
#[derive(Clone, Debug, PartialEq)]
pub struct Query {
    pub concept: Concept,
    pub gold: Vec<ConceptId>,
}

#[derive(Clone, Debug)]
pub struct TaxonomySplit {
    pub existing: Taxonomy,
    pub validation: Vec<Query>,
    pub test: Vec<Query>,
}

impl TaxonomySplit {
    /// The split with no held-out queries.
    pub fn unmasked(existing: Taxonomy) -> Self {
        TaxonomySplit {
            existing,
            validation: Vec::new(),
            test: Vec::new(),
        }
    }

    pub fn queries(&self) -> impl Iterator<Item = &Query> {
        self.validation.iter().chain(&self.test)
    }

    /// Reinserts every masked query under its gold parents.
    pub fn reconstruct(&self) -> Result<Taxonomy> {
        let concepts: Vec<Concept> = self.queries().map(|q| q.concept.clone()).collect();
        let edges: Vec<_> = self
            .queries()
            .flat_map(|q| q.gold.iter().map(move |&p| (p, q.concept.id)))
            .collect();
        self.existing.extended(concepts, edges)
    }
}

/// Leaves that have at least one parent; only these can be masked.
pub fn maskable_leaves(t: &Taxonomy) -> Vec<ConceptId> {
    t.leaves()
        .filter(|&id| !t.parents(id).expect("own id").is_empty())
        .collect()
}

fn ratio_count(ratio: f64, total: usize) -> usize {
    (ratio * total as f64).round() as usize
}

/// Masks `round(ratio × leaves)` random leaves for validation and for testing,
/// removing them and their edges from the existing taxonomy.
pub fn mask_leaves(t: &Taxonomy, val_ratio: f64, test_ratio: f64, seed: u64) -> Result<TaxonomySplit> {
    for (what, r) in [("validation", val_ratio), ("test", test_ratio)] {
        if !(0.0..1.0).contains(&r) {
            return Err(Error::InvalidArgument(format!("{what} ratio {r} not in [0, 1)")));
        }
    }
    if val_ratio + test_ratio >= 1.0 {
        return Err(Error::InvalidArgument(format!(
            "validation + test ratios must be below 1, got {}",
            val_ratio + test_ratio
        )));
    }
    let leaves = maskable_leaves(t).len();
    mask_leaf_counts(t, ratio_count(val_ratio, leaves), ratio_count(test_ratio, leaves), seed)
}

/// Like [`mask_leaves`] with explicit query counts.
pub fn mask_leaf_counts(t: &Taxonomy, n_val: usize, n_test: usize, seed: u64) -> Result<TaxonomySplit> {
    let mut leaves = maskable_leaves(t);
    if n_val + n_test > 0 && leaves.is_empty() {
        return Err(Error::InvalidArgument("taxonomy has no maskable leaves".into()));
    }
    if n_val + n_test > leaves.len() {
        return Err(Error::InvalidArgument(format!(
            "cannot mask {} leaves out of {}",
            n_val + n_test,
            leaves.len()
        )));
    }
    let mut rng = SeedStream::new(seed).split_str("mask_leaves").rng();
    leaves.shuffle(&mut rng);
    let mut val: Vec<ConceptId> = leaves[..n_val].to_vec();
    let mut test: Vec<ConceptId> = leaves[n_val..n_val + n_test].to_vec();
    val.sort_unstable();
    test.sort_unstable();

    let removed: BTreeSet<ConceptId> = val.iter().chain(&test).copied().collect();
    let existing = t.without(&removed)?;
    let to_queries = |ids: &[ConceptId]| -> Result<Vec<Query>> {
        ids.iter()
            .map(|&id| {
                Ok(Query {
                    concept: t.concept(id)?.clone(),
                    gold: t.parents(id)?.to_vec(),
                })
            })
            .collect()
    };
    Ok(TaxonomySplit {
        validation: to_queries(&val)?,
        test: to_queries(&test)?,
        existing,
    })
}
