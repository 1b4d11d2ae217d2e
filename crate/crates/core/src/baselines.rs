//! Rule-based rankers over initial embeddings.

use crate::error::Result;
use crate::infer::RankResult;
use crate::taxonomy::{ConceptId, Taxonomy};

/// `1 − cos(a, b)`; 1 when either vector has zero norm.
pub fn cosine_distance(a: &[f64], b: &[f64]) -> f64 {
    let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return 1.0;
    }
    1.0 - dot / (na.sqrt() * nb.sqrt())
}

fn by_distance(t: &Taxonomy, query: ConceptId, distance: impl Fn(ConceptId) -> Result<f64>) -> Result<RankResult> {
    let ids: Vec<ConceptId> = t.ids().collect();
    let keys = ids
        .iter()
        .map(|&a| distance(a).map(|d| -d))
        .collect::<Result<Vec<_>>>()?;
    Ok(RankResult::from_logits(query, &ids, &keys, |k| k))
}

/// Ranks anchors by ascending cosine distance to the query.
pub fn closest_parent(t: &Taxonomy, query: ConceptId, embedding: &[f64]) -> Result<RankResult> {
    by_distance(t, query, |a| Ok(cosine_distance(t.embedding(a)?, embedding)))
}

/// Ranks anchors by their own distance to the query plus the mean distance
/// of their children (0 for leaves).
pub fn closest_neighbor(t: &Taxonomy, query: ConceptId, embedding: &[f64]) -> Result<RankResult> {
    by_distance(t, query, |a| {
        let own = cosine_distance(t.embedding(a)?, embedding);
        let children = t.children(a)?;
        if children.is_empty() {
            return Ok(own);
        }
        let mut sum = 0.0;
        for &c in children {
            sum += cosine_distance(t.embedding(c)?, embedding);
        }
        Ok(own + sum / children.len() as f64)
    })
}
