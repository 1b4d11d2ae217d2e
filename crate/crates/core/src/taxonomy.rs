//! Taxonomy graph: concepts with initial embeddings and parent→child edges.

use std::collections::{BTreeSet, HashMap, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Concept identifier, unique within a taxonomy. Ordering doubles as the
/// deterministic tie-break everywhere ranks or ancestors tie.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ConceptId(pub u32);

impl fmt::Display for ConceptId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Concept {
    pub id: ConceptId,
    pub name: String,
    pub embedding: Vec<f64>,
}

impl Concept {
    pub fn new(id: ConceptId, name: impl Into<String>, embedding: Vec<f64>) -> Self {
        Concept {
            id,
            name: name.into(),
            embedding,
        }
    }
}

/// Immutable DAG of concepts. Edges point from parent to child.
///
/// Concepts are stored in ascending id order; adjacency lists are sorted by id.
#[derive(Clone, Debug)]
pub struct Taxonomy {
    dimension: usize,
    concepts: Vec<Concept>,
    index: HashMap<ConceptId, usize>,
    by_name: HashMap<String, usize>,
    parents: Vec<Vec<ConceptId>>,
    children: Vec<Vec<ConceptId>>,
    edge_count: usize,
}

impl Taxonomy {
    /// Validates and indexes a concept set and edge list. Duplicate edges are
    /// collapsed.
    pub fn new(
        dimension: usize,
        mut concepts: Vec<Concept>,
        edges: impl IntoIterator<Item = (ConceptId, ConceptId)>,
    ) -> Result<Self> {
        concepts.sort_by_key(|c| c.id);
        let mut index = HashMap::with_capacity(concepts.len());
        let mut by_name = HashMap::with_capacity(concepts.len());
        for (i, c) in concepts.iter().enumerate() {
            if c.embedding.len() != dimension {
                return Err(Error::DimensionMismatch {
                    name: c.name.clone(),
                    expected: dimension,
                    found: c.embedding.len(),
                });
            }
            if index.insert(c.id, i).is_some() {
                return Err(Error::InvalidArgument(format!("duplicate concept id {}", c.id)));
            }
            if by_name.insert(c.name.clone(), i).is_some() {
                return Err(Error::DuplicateName(c.name.clone()));
            }
        }
        let mut parents = vec![Vec::new(); concepts.len()];
        let mut children = vec![Vec::new(); concepts.len()];
        let mut seen = BTreeSet::new();
        for (p, c) in edges {
            let pi = *index.get(&p).ok_or(Error::UnknownConcept(p))?;
            let ci = *index.get(&c).ok_or(Error::UnknownConcept(c))?;
            if p == c {
                return Err(Error::Cycle(concepts[pi].name.clone()));
            }
            if seen.insert((p, c)) {
                children[pi].push(c);
                parents[ci].push(p);
            }
        }
        for list in parents.iter_mut().chain(children.iter_mut()) {
            list.sort_unstable();
        }
        let taxonomy = Taxonomy {
            dimension,
            concepts,
            index,
            by_name,
            parents,
            children,
            edge_count: seen.len(),
        };
        taxonomy.check_acyclic()?;
        Ok(taxonomy)
    }

    fn check_acyclic(&self) -> Result<()> {
        let mut indegree: Vec<usize> = self.parents.iter().map(Vec::len).collect();
        let mut queue: VecDeque<usize> = (0..self.len()).filter(|&i| indegree[i] == 0).collect();
        let mut visited = 0;
        while let Some(i) = queue.pop_front() {
            visited += 1;
            for c in &self.children[i] {
                let ci = self.index[c];
                indegree[ci] -= 1;
                if indegree[ci] == 0 {
                    queue.push_back(ci);
                }
            }
        }
        if visited == self.len() {
            return Ok(());
        }
        let stuck = (0..self.len()).find(|&i| indegree[i] > 0).expect("unvisited node");
        Err(Error::Cycle(self.concepts[stuck].name.clone()))
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    /// Number of concepts.
    pub fn len(&self) -> usize {
        self.concepts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.concepts.is_empty()
    }

    pub fn edge_count(&self) -> usize {
        self.edge_count
    }

    /// Concepts in ascending id order.
    pub fn concepts(&self) -> &[Concept] {
        &self.concepts
    }

    pub fn ids(&self) -> impl Iterator<Item = ConceptId> + '_ {
        self.concepts.iter().map(|c| c.id)
    }

    /// Edges as `(parent, child)`, sorted.
    pub fn edges(&self) -> impl Iterator<Item = (ConceptId, ConceptId)> + '_ {
        self.concepts
            .iter()
            .zip(&self.children)
            .flat_map(|(p, cs)| cs.iter().map(move |&c| (p.id, c)))
    }

    pub fn contains(&self, id: ConceptId) -> bool {
        self.index.contains_key(&id)
    }

    /// Dense position of `id` in [`Taxonomy::concepts`].
    pub fn position(&self, id: ConceptId) -> Result<usize> {
        self.index.get(&id).copied().ok_or(Error::UnknownConcept(id))
    }

    pub fn concept(&self, id: ConceptId) -> Result<&Concept> {
        Ok(&self.concepts[self.position(id)?])
    }

    pub fn id_of(&self, name: &str) -> Option<ConceptId> {
        self.by_name.get(name).map(|&i| self.concepts[i].id)
    }

    pub fn name(&self, id: ConceptId) -> Result<&str> {
        Ok(&self.concept(id)?.name)
    }

    pub fn embedding(&self, id: ConceptId) -> Result<&[f64]> {
        Ok(&self.concept(id)?.embedding)
    }

    pub fn parents(&self, id: ConceptId) -> Result<&[ConceptId]> {
        Ok(&self.parents[self.position(id)?])
    }

    pub fn children(&self, id: ConceptId) -> Result<&[ConceptId]> {
        Ok(&self.children[self.position(id)?])
    }

    pub fn roots(&self) -> impl Iterator<Item = ConceptId> + '_ {
        self.concepts
            .iter()
            .zip(&self.parents)
            .filter(|(_, ps)| ps.is_empty())
            .map(|(c, _)| c.id)
    }

    /// Concepts without children.
    pub fn leaves(&self) -> impl Iterator<Item = ConceptId> + '_ {
        self.concepts
            .iter()
            .zip(&self.children)
            .filter(|(_, cs)| cs.is_empty())
            .map(|(c, _)| c.id)
    }

    pub fn is_multi_root(&self) -> bool {
        self.roots().nth(1).is_some()
    }

    fn reach(&self, start: ConceptId, up: bool) -> Result<BTreeSet<ConceptId>> {
        let mut seen = BTreeSet::new();
        let mut stack = vec![start];
        while let Some(n) = stack.pop() {
            let next = if up { self.parents(n)? } else { self.children(n)? };
            for &m in next {
                if seen.insert(m) {
                    stack.push(m);
                }
            }
        }
        Ok(seen)
    }

    /// Every concept reachable from `id` along parent→child edges, excluding `id`.
    pub fn descendants(&self, id: ConceptId) -> Result<BTreeSet<ConceptId>> {
        self.reach(id, false)
    }

    /// Every concept from which `id` is reachable, excluding `id`.
    pub fn ancestors(&self, id: ConceptId) -> Result<BTreeSet<ConceptId>> {
        self.reach(id, true)
    }

    /// Length of the shortest root-to-`id` path counting nodes, so a root has
    /// depth 1. With several roots, an implicit virtual root of depth 1 sits
    /// above them and real roots have depth 2.
    pub fn depth(&self, id: ConceptId) -> Result<usize> {
        let offset = if self.is_multi_root() { 2 } else { 1 };
        let mut frontier = vec![id];
        let mut seen = BTreeSet::from([id]);
        let mut dist = 0;
        loop {
            let mut next = Vec::new();
            for &n in &frontier {
                let ps = self.parents(n)?;
                if ps.is_empty() {
                    return Ok(dist + offset);
                }
                for &p in ps {
                    if seen.insert(p) {
                        next.push(p);
                    }
                }
            }
            frontier = next;
            dist += 1;
        }
    }

    /// Deepest common ancestor-or-self of `a` and `b`, ties broken by the
    /// smallest id. `None` means the only common ancestor is the virtual root
    /// of a multi-root taxonomy.
    pub fn lca(&self, a: ConceptId, b: ConceptId) -> Result<Option<ConceptId>> {
        let mut up_a = self.ancestors(a)?;
        up_a.insert(a);
        let mut up_b = self.ancestors(b)?;
        up_b.insert(b);
        let mut best: Option<(usize, ConceptId)> = None;
        for &c in up_a.intersection(&up_b) {
            let d = self.depth(c)?;
            // BTreeSet iterates ids in ascending order, so only a strictly
            // deeper candidate replaces the current one.
            if best.is_none_or(|(bd, _)| d > bd) {
                best = Some((d, c));
            }
        }
        Ok(best.map(|(_, c)| c))
    }

    /// Copy of this taxonomy without `removed` and all their incident edges.
    pub fn without(&self, removed: &BTreeSet<ConceptId>) -> Result<Taxonomy> {
        let concepts = self
            .concepts
            .iter()
            .filter(|c| !removed.contains(&c.id))
            .cloned()
            .collect();
        let edges: Vec<_> = self
            .edges()
            .filter(|(p, c)| !removed.contains(p) && !removed.contains(c))
            .collect();
        Taxonomy::new(self.dimension, concepts, edges)
    }

    /// Copy of this taxonomy with extra concepts and edges.
    pub fn extended(
        &self,
        concepts: impl IntoIterator<Item = Concept>,
        edges: impl IntoIterator<Item = (ConceptId, ConceptId)>,
    ) -> Result<Taxonomy> {
        let all: Vec<Concept> = self.concepts.iter().cloned().chain(concepts).collect();
        let all_edges: Vec<_> = self.edges().chain(edges).collect();
        Taxonomy::new(self.dimension, all, all_edges)
    }

    /// Hash of every concept (id, name, embedding bits) and edge.
    pub fn fingerprint(&self) -> u64 {
        use std::hash::Hasher;
        let mut h = std::collections::hash_map::DefaultHasher::new();
        h.write_usize(self.dimension);
        for c in &self.concepts {
            h.write_u32(c.id.0);
            h.write(c.name.as_bytes());
            for x in &c.embedding {
                h.write_u64(x.to_bits());
            }
        }
        for (p, c) in self.edges() {
            h.write_u32(p.0);
            h.write_u32(c.0);
        }
        h.finish()
    }

    /// First id strictly greater than every id in use.
    pub fn next_id(&self) -> ConceptId {
        ConceptId(self.concepts.last().map_or(0, |c| c.id.0 + 1))
    }
}
