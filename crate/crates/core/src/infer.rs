//! Ranking candidate parents with cached anchor representations, and
//! expanding a taxonomy with new concepts.
//!
//! Propagation and readout do not depend on the query, so every anchor of
//! the existing taxonomy is encoded once into an [`AnchorCache`]; ranking a
//! query then costs one matcher evaluation per anchor.

use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diff::Matrix;
use crate::egonet::{batch_for_anchors, EgonetOptions};
use crate::error::{Error, Result};
use crate::model::{Matcher, ModelParams, MATCHER_B1, MATCHER_B2, MATCHER_W1, MATCHER_W2, MATCHER_WEIGHT};
use crate::split::Query;
use crate::taxonomy::{Concept, ConceptId, Taxonomy};

/// Anchors encoded per batch when building a cache.
const CACHE_CHUNK: usize = 256;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankEntry {
    pub anchor: ConceptId,
    /// Matching score `f(a, n)`; for the rule baselines, the negated distance.
    pub score: f64,
    /// Sort key, strictly increasing in `score`: the matcher logit, or the
    /// negated distance for the rule baselines.
    pub logit: f64,
}

/// All candidates for one query, best first.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankResult {
    pub query: ConceptId,
    pub entries: Vec<RankEntry>,
    /// 1-based rank of each gold parent, in gold order; empty until
    /// [`RankResult::with_gold`] is called.
    pub gold_ranks: Vec<usize>,
}

fn sort_key(x: f64) -> f64 {
    if x.is_nan() {
        f64::NEG_INFINITY
    } else {
        x
    }
}

impl RankResult {
    /// Sorts candidates by descending logit, ties by ascending anchor id.
    pub fn from_logits(query: ConceptId, anchors: &[ConceptId], logits: &[f64], score: impl Fn(f64) -> f64) -> Self {
        let mut entries: Vec<RankEntry> = anchors
            .iter()
            .zip(logits)
            .map(|(&anchor, &logit)| RankEntry {
                anchor,
                score: score(logit),
                logit,
            })
            .collect();
        entries.sort_by(|a, b| {
            sort_key(b.logit)
                .partial_cmp(&sort_key(a.logit))
                .unwrap_or(Ordering::Equal)
                .then(a.anchor.cmp(&b.anchor))
        });
        RankResult {
            query,
            entries,
            gold_ranks: Vec::new(),
        }
    }

    /// Records the ranks of `gold`; every gold parent must be a candidate.
    pub fn with_gold(mut self, gold: &[ConceptId]) -> Result<Self> {
        self.gold_ranks = gold
            .iter()
            .map(|&g| {
                self.rank_of(g).ok_or(Error::MissingGoldParent {
                    query: self.query.to_string(),
                    parent: g,
                })
            })
            .collect::<Result<_>>()?;
        Ok(self)
    }

    pub fn rank_of(&self, anchor: ConceptId) -> Option<usize> {
        self.entries.iter().position(|e| e.anchor == anchor).map(|i| i + 1)
    }

    pub fn top(&self) -> Option<ConceptId> {
        self.entries.first().map(|e| e.anchor)
    }

    pub fn top_k(&self, k: usize) -> &[RankEntry] {
        &self.entries[..k.min(self.entries.len())]
    }
}

/// Query-independent representations of every anchor of a taxonomy.
#[derive(Clone, Debug)]
pub struct AnchorCache {
    ids: Vec<ConceptId>,
    reps: Matrix,
    /// MLP only: `reps · W₁[anchor rows]`, the anchor half of the hidden
    /// pre-activation.
    projected: Option<Matrix>,
    params_fingerprint: u64,
    taxonomy_fingerprint: u64,
}

impl AnchorCache {
    /// Encodes every node of `t` with dropout off.
    pub fn build(t: &Taxonomy, params: &ModelParams, opts: &EgonetOptions) -> Result<Self> {
        if t.dimension() != params.input_dim {
            return Err(Error::Shape {
                op: "build_anchor_cache",
                lhs: (t.len(), t.dimension()),
                rhs: (1, params.input_dim),
            });
        }
        let ids: Vec<ConceptId> = t.ids().collect();
        let d2 = params.config.anchor_dim();
        let chunks = ids
            .par_chunks(CACHE_CHUNK)
            .map(|chunk| params.anchor_representations(&batch_for_anchors(t, chunk, opts)?))
            .collect::<Result<Vec<_>>>()?;
        let mut data = Vec::with_capacity(ids.len() * d2);
        for c in chunks {
            data.extend(c.into_vec());
        }
        let reps = Matrix::from_vec(ids.len(), d2, data)?;
        let projected = match params.config.matcher {
            Matcher::Lbm => None,
            Matcher::Mlp => {
                let w1 = params.get(MATCHER_W1)?;
                let top = Matrix::from_fn(d2, w1.cols(), |i, j| w1[(i, j)]);
                Some(reps.matmul(&top)?)
            }
        };
        Ok(AnchorCache {
            ids,
            reps,
            projected,
            params_fingerprint: params.fingerprint(),
            taxonomy_fingerprint: t.fingerprint(),
        })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[ConceptId] {
        &self.ids
    }

    pub fn representations(&self) -> &Matrix {
        &self.reps
    }

    pub fn representation(&self, anchor: ConceptId) -> Option<&[f64]> {
        self.ids.binary_search(&anchor).ok().map(|i| self.reps.row(i))
    }

    /// Whether the cache was built from exactly this taxonomy and these
    /// parameters.
    pub fn is_current(&self, t: &Taxonomy, params: &ModelParams) -> bool {
        self.params_fingerprint == params.fingerprint() && self.taxonomy_fingerprint == t.fingerprint()
    }

    fn check(&self, params: &ModelParams) -> Result<()> {
        if self.params_fingerprint != params.fingerprint() {
            return Err(Error::StaleCache);
        }
        Ok(())
    }

    /// Matcher logits of `query` against every cached anchor, in id order.
    pub fn logits(&self, params: &ModelParams, query: &[f64]) -> Result<Vec<f64>> {
        self.check(params)?;
        self.logits_unchecked(params, query)
    }

    fn logits_unchecked(&self, params: &ModelParams, query: &[f64]) -> Result<Vec<f64>> {
        if query.len() != params.input_dim {
            return Err(Error::Shape {
                op: "rank_anchors",
                lhs: (1, params.input_dim),
                rhs: (1, query.len()),
            });
        }
        let q = Matrix::from_vec(query.len(), 1, query.to_vec())?;
        match &self.projected {
            None => {
                let wq = params.get(MATCHER_WEIGHT)?.matmul(&q)?;
                Ok(self.reps.matmul(&wq)?.into_vec())
            }
            Some(p) => {
                let w1 = params.get(MATCHER_W1)?;
                let (b1, w2) = (params.get(MATCHER_B1)?, params.get(MATCHER_W2)?);
                let b2 = params.get(MATCHER_B2)?.item();
                let d2 = self.reps.cols();
                let h = w1.cols();
                let mut qb = b1.as_slice().to_vec();
                for (j, qj) in query.iter().enumerate() {
                    for (o, w) in qb.iter_mut().zip(w1.row(d2 + j)) {
                        *o += qj * w;
                    }
                }
                let slope = params.config.leaky_slope;
                Ok((0..p.rows())
                    .map(|a| {
                        let row = p.row(a);
                        let mut acc = 0.0;
                        for k in 0..h {
                            let z = row[k] + qb[k];
                            let z = if z >= 0.0 { z } else { slope * z };
                            acc += z * w2[(k, 0)];
                        }
                        acc + b2
                    })
                    .collect())
            }
        }
    }

    fn rank_unchecked(&self, params: &ModelParams, query: ConceptId, embedding: &[f64]) -> Result<RankResult> {
        let logits = self.logits_unchecked(params, embedding)?;
        let matcher = params.config.matcher;
        Ok(RankResult::from_logits(query, &self.ids, &logits, |l| matcher.score(l)))
    }
}

/// Ranks every cached anchor for one query.
pub fn rank_anchors(query: ConceptId, embedding: &[f64], cache: &AnchorCache, params: &ModelParams) -> Result<RankResult> {
    cache.check(params)?;
    cache.rank_unchecked(params, query, embedding)
}

/// Ranks every query (in parallel) and records its gold ranks.
pub fn rank_queries(queries: &[Query], cache: &AnchorCache, params: &ModelParams) -> Result<Vec<RankResult>> {
    cache.check(params)?;
    queries
        .par_iter()
        .map(|q| {
            cache
                .rank_unchecked(params, q.concept.id, &q.concept.embedding)?
                .with_gold(&q.gold)
        })
        .collect()
}

/// Logits of `query` against every anchor of `t`, re-encoding each anchor's
/// egonet instead of reading a cache. In id order.
pub fn uncached_logits(t: &Taxonomy, params: &ModelParams, query: &[f64], opts: &EgonetOptions) -> Result<Vec<f64>> {
    let ids: Vec<ConceptId> = t.ids().collect();
    let mut out = Vec::with_capacity(ids.len());
    for chunk in ids.chunks(CACHE_CHUNK) {
        let batch = batch_for_anchors(t, chunk, opts)?;
        let reps = params.anchor_representations(&batch)?;
        let queries = Matrix::from_fn(chunk.len(), query.len(), |_, j| query[j]);
        out.extend(params.logits(&reps, &queries)?);
    }
    Ok(out)
}

/// Where one new concept was placed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Placement {
    pub query: ConceptId,
    pub parent: ConceptId,
    /// The best `top_k` candidates, the attached parent first.
    pub candidates: Vec<RankEntry>,
}

#[derive(Clone, Debug)]
pub struct Expansion {
    pub taxonomy: Taxonomy,
    pub placements: Vec<Placement>,
}

/// Attaches each query under its top-ranked anchor of `t`. New concepts are
/// never candidates for one another, and existing edges are kept as they are.
pub fn expand(
    t: &Taxonomy,
    queries: &[Concept],
    params: &ModelParams,
    opts: &EgonetOptions,
    top_k: usize,
) -> Result<Expansion> {
    if queries.is_empty() {
        return Ok(Expansion {
            taxonomy: t.clone(),
            placements: Vec::new(),
        });
    }
    if t.is_empty() {
        return Err(Error::InvalidArgument("cannot expand an empty taxonomy".into()));
    }
    let cache = AnchorCache::build(t, params, opts)?;
    let placements = queries
        .par_iter()
        .map(|q| {
            let r = cache.rank_unchecked(params, q.id, &q.embedding)?;
            Ok(Placement {
                query: q.id,
                parent: r.top().expect("nonempty taxonomy"),
                candidates: r.top_k(top_k.max(1)).to_vec(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let taxonomy = t.extended(queries.iter().cloned(), placements.iter().map(|p| (p.parent, p.query)))?;
    Ok(Expansion { taxonomy, placements })
}
