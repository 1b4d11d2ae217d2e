//! Ego networks of anchor concepts and their block-diagonal batching.
//!
//! The ego network of an anchor is the anchor itself, its taxonomy parents
//! (the query's would-be grand-parents) and its children (the query's
//! would-be siblings). Edges join the anchor to each other member and are
//! treated as undirected; every node also has an implicit self-loop, so the
//! aggregation neighborhood of the anchor is the whole ego network while any
//! other member sees only itself and the anchor.

use std::sync::Arc;

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::diff::Matrix;
use crate::error::{Error, Result};
use crate::rng::SeedStream;
use crate::taxonomy::{ConceptId, Taxonomy};

/// Relative position of an ego-network member with respect to a query placed
/// under the anchor.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PositionLabel {
    GrandParent,
    Anchor,
    Sibling,
}

impl PositionLabel {
    pub const ALL: [PositionLabel; 3] = [PositionLabel::GrandParent, PositionLabel::Anchor, PositionLabel::Sibling];
    pub const COUNT: usize = 3;

    /// Row of this position in position-embedding tables.
    pub fn index(self) -> usize {
        match self {
            PositionLabel::GrandParent => 0,
            PositionLabel::Anchor => 1,
            PositionLabel::Sibling => 2,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EgonetNode {
    pub concept: ConceptId,
    pub position: PositionLabel,
    pub features: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Egonet {
    pub anchor: ConceptId,
    pub nodes: Vec<EgonetNode>,
    /// Undirected edges as pairs of indices into `nodes`.
    pub edges: Vec<(usize, usize)>,
}

impl Egonet {
    /// Aggregation neighborhood `N(u) ∪ {u}` of every node, self first, then
    /// neighbors in ascending index order.
    pub fn neighborhoods(&self) -> Vec<Vec<usize>> {
        let mut hoods: Vec<Vec<usize>> = (0..self.nodes.len()).map(|u| vec![u]).collect();
        for &(a, b) in &self.edges {
            if a != b {
                hoods[a].push(b);
                hoods[b].push(a);
            }
        }
        for h in &mut hoods {
            h[1..].sort_unstable();
            h.dedup();
        }
        hoods
    }

    pub fn count(&self, position: PositionLabel) -> usize {
        self.nodes.iter().filter(|n| n.position == position).count()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EgonetOptions {
    /// Anchors with more children keep a uniform sample of this many.
    pub max_siblings: usize,
    /// Seed for sibling subsampling.
    pub seed: u64,
}

impl Default for EgonetOptions {
    fn default() -> Self {
        EgonetOptions {
            max_siblings: 1000,
            seed: 0,
        }
    }
}

pub fn extract_egonet(t: &Taxonomy, anchor: ConceptId) -> Result<Egonet> {
    extract_egonet_with(t, anchor, &EgonetOptions::default())
}

pub fn extract_egonet_with(t: &Taxonomy, anchor: ConceptId, opts: &EgonetOptions) -> Result<Egonet> {
    let node = |id: ConceptId, position| -> Result<EgonetNode> {
        Ok(EgonetNode {
            concept: id,
            position,
            features: t.embedding(id)?.to_vec(),
        })
    };
    let mut nodes = vec![node(anchor, PositionLabel::Anchor)?];
    for &p in t.parents(anchor)? {
        nodes.push(node(p, PositionLabel::GrandParent)?);
    }
    let children = t.children(anchor)?;
    let kept: Vec<ConceptId> = if children.len() > opts.max_siblings {
        let mut rng = SeedStream::new(opts.seed)
            .split_str("siblings")
            .split(u64::from(anchor.0))
            .rng();
        let mut picked = index::sample(&mut rng, children.len(), opts.max_siblings).into_vec();
        picked.sort_unstable();
        picked.into_iter().map(|i| children[i]).collect()
    } else {
        children.to_vec()
    };
    for c in kept {
        nodes.push(node(c, PositionLabel::Sibling)?);
    }
    let edges = (1..nodes.len()).map(|i| (0, i)).collect();
    Ok(Egonet { anchor, nodes, edges })
}

/// Disjoint union of ego networks laid out for message passing.
///
/// Node `i` of the batch belongs to egonet `segments[i]`; message `m` carries
/// node `msg_src[m]` into node `msg_dst[m]`, one message per member of each
/// aggregation neighborhood.
#[derive(Clone, Debug)]
pub struct EgonetBatch {
    pub anchors: Vec<ConceptId>,
    pub features: Matrix,
    pub positions: Arc<[usize]>,
    pub segments: Arc<[usize]>,
    pub msg_dst: Arc<[usize]>,
    pub msg_src: Arc<[usize]>,
    /// Symmetric normalisation `1/sqrt(|Ñ(u)|·|Ñ(v)|)` per message.
    pub gcn_coef: Vec<f64>,
    pub sizes: Vec<usize>,
}

impl EgonetBatch {
    pub fn len(&self) -> usize {
        self.anchors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.anchors.is_empty()
    }

    pub fn node_count(&self) -> usize {
        self.features.rows()
    }
}

pub fn batch_egonets(egonets: &[Egonet]) -> Result<EgonetBatch> {
    let first = egonets
        .first()
        .ok_or_else(|| Error::InvalidArgument("cannot batch an empty list of egonets".into()))?;
    let dim = first.nodes.first().map_or(0, |n| n.features.len());
    let total: usize = egonets.iter().map(|e| e.nodes.len()).sum();
    let mut features = Vec::with_capacity(total * dim);
    let mut positions = Vec::with_capacity(total);
    let mut segments = Vec::with_capacity(total);
    let (mut dst, mut src, mut coef) = (Vec::new(), Vec::new(), Vec::new());
    let mut offset = 0;
    for (g, ego) in egonets.iter().enumerate() {
        if ego.nodes.is_empty() {
            return Err(Error::InvalidArgument(format!("egonet of {} has no nodes", ego.anchor)));
        }
        for n in &ego.nodes {
            if n.features.len() != dim {
                return Err(Error::Shape {
                    op: "batch_egonets",
                    lhs: (1, dim),
                    rhs: (1, n.features.len()),
                });
            }
            features.extend_from_slice(&n.features);
            positions.push(n.position.index());
            segments.push(g);
        }
        let hoods = ego.neighborhoods();
        for (u, hood) in hoods.iter().enumerate() {
            for &v in hood {
                dst.push(offset + u);
                src.push(offset + v);
                coef.push(1.0 / ((hood.len() * hoods[v].len()) as f64).sqrt());
            }
        }
        offset += ego.nodes.len();
    }
    Ok(EgonetBatch {
        anchors: egonets.iter().map(|e| e.anchor).collect(),
        features: Matrix::from_vec(total, dim, features)?,
        positions: positions.into(),
        segments: segments.into(),
        msg_dst: dst.into(),
        msg_src: src.into(),
        gcn_coef: coef,
        sizes: egonets.iter().map(|e| e.nodes.len()).collect(),
    })
}

/// Extracts and batches the ego networks of `anchors`.
pub fn batch_for_anchors(t: &Taxonomy, anchors: &[ConceptId], opts: &EgonetOptions) -> Result<EgonetBatch> {
    let egonets = anchors
        .iter()
        .map(|&a| extract_egonet_with(t, a, opts))
        .collect::<Result<Vec<_>>>()?;
    batch_egonets(&egonets)
}
