use std::collections::BTreeSet;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SeedStream;
use crate::taxonomy::{ConceptId, Taxonomy};

/// One positive edge `⟨parent, query⟩` grouped with negatives for the same
/// query.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainInstance {
    pub query: ConceptId,
    pub positive: ConceptId,
    pub negatives: Vec<ConceptId>,
}

impl TrainInstance {
    /// Positive first, then negatives.
    pub fn anchors(&self) -> impl Iterator<Item = ConceptId> + '_ {
        std::iter::once(self.positive).chain(self.negatives.iter().copied())
    }
}

/// Draws `n` distinct anchors uniformly from the nodes that are neither the
/// query, nor one of its parents, nor one of its descendants.
pub fn sample_negatives(t: &Taxonomy, query: ConceptId, n: usize, rng: &mut impl Rng) -> Result<Vec<ConceptId>> {
    let mut excluded: BTreeSet<ConceptId> = t.descendants(query)?;
    excluded.insert(query);
    excluded.extend(t.parents(query)?.iter().copied());
    let eligible = t.len() - excluded.len();
    if eligible < n {
        return Err(Error::InsufficientNegatives {
            query,
            eligible,
            requested: n,
        });
    }
    let concepts = t.concepts();
    if 2 * eligible >= t.len() {
        // Rejection keeps the cost proportional to n rather than |N⁰|.
        let mut picked = Vec::with_capacity(n);
        let mut seen = BTreeSet::new();
        while picked.len() < n {
            let id = concepts[rng.random_range(0..concepts.len())].id;
            if !excluded.contains(&id) && seen.insert(id) {
                picked.push(id);
            }
        }
        Ok(picked)
    } else {
        let pool: Vec<ConceptId> = concepts.iter().map(|c| c.id).filter(|id| !excluded.contains(id)).collect();
        Ok(pool.choose_multiple(rng, n).copied().collect())
    }
}

/// One instance per edge of `t`, in shuffled order, each with `n` fresh
/// negatives. Deterministic for a given stream.
pub fn generate_instances(t: &Taxonomy, n: usize, stream: SeedStream) -> Result<Vec<TrainInstance>> {
    let mut edges: Vec<(ConceptId, ConceptId)> = t.edges().collect();
    edges.shuffle(&mut stream.split_str("shuffle").rng());
    let mut rng = stream.split_str("negatives").rng();
    edges
        .into_iter()
        .map(|(parent, child)| {
            Ok(TrainInstance {
                query: child,
                positive: parent,
                negatives: sample_negatives(t, child, n, &mut rng)?,
            })
        })
        .collect()
}
