//! Synthetic benchmark taxonomies.
//!
//! A root has `groups` children, each group has `categories_per_group`
//! categories, and each category has `leaves_per_category` leaves. Every
//! category owns a random unit *theme* in the first `signal_dims`
//! coordinates; its leaves are noisy copies of that theme. A category's own
//! embedding, however, carries the theme of a *different* category, so the
//! right parent for a new leaf can only be recognised through its would-be
//! siblings. The remaining coordinates are pure noise.

use std::collections::BTreeSet;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SeedStream;
use crate::taxonomy::{Concept, ConceptId, Taxonomy};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub groups: usize,
    pub categories_per_group: usize,
    pub leaves_per_category: usize,
    pub dim: usize,
    pub signal_dims: usize,
    /// Standard deviation of leaf noise around the theme, per signal dim.
    pub leaf_noise: f64,
    /// Standard deviation of the noise coordinates.
    pub noise_scale: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    /// About 500 nodes with 64-d embeddings.
    fn default() -> Self {
        SyntheticConfig {
            groups: 6,
            categories_per_group: 7,
            leaves_per_category: 11,
            dim: 64,
            signal_dims: 16,
            leaf_noise: 0.08,
            noise_scale: 0.08,
            seed: 0,
        }
    }
}

impl SyntheticConfig {
    pub fn categories(&self) -> usize {
        self.groups * self.categories_per_group
    }

    pub fn node_count(&self) -> usize {
        1 + self.groups + self.categories() * (1 + self.leaves_per_category)
    }

    pub fn edge_count(&self) -> usize {
        self.node_count() - 1
    }
}

fn unit(rng: &mut impl Rng, normal: &Normal<f64>, n: usize) -> Vec<f64> {
    let v: Vec<f64> = (0..n).map(|_| normal.sample(rng)).collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / norm).collect()
}

/// Generates the benchmark taxonomy. Names are `root`, `g{i}`, `c{i}` and
/// `c{i}.l{j}`.
pub fn benchmark(cfg: &SyntheticConfig) -> Result<Taxonomy> {
    if cfg.signal_dims == 0 || cfg.signal_dims > cfg.dim {
        return Err(Error::InvalidArgument(format!(
            "signal_dims {} must be in 1..={}",
            cfg.signal_dims, cfg.dim
        )));
    }
    if cfg.groups == 0 || cfg.categories_per_group == 0 || cfg.categories() < 2 {
        return Err(Error::InvalidArgument("benchmark needs at least two categories".into()));
    }
    let stream = SeedStream::new(cfg.seed).split_str("synthetic");
    let mut rng = stream.rng();
    let std = Normal::new(0.0, 1.0).expect("valid");
    let noise = Normal::new(0.0, cfg.noise_scale.max(f64::MIN_POSITIVE)).expect("valid");
    let leaf_noise = Normal::new(0.0, cfg.leaf_noise.max(f64::MIN_POSITIVE)).expect("valid");

    let themes: Vec<Vec<f64>> = (0..cfg.categories()).map(|_| unit(&mut rng, &std, cfg.signal_dims)).collect();
    // Category i wears the theme of decoy[i] ≠ i.
    let mut decoy: Vec<usize> = (0..cfg.categories()).collect();
    decoy.shuffle(&mut rng);
    for i in 0..decoy.len() {
        if decoy[i] == i {
            let j = (i + 1) % decoy.len();
            decoy.swap(i, j);
        }
    }

    let mut concepts = Vec::with_capacity(cfg.node_count());
    let mut edges = Vec::with_capacity(cfg.edge_count());
    let mut push = |name: String, signal: Vec<f64>, jitter: &Normal<f64>, rng: &mut rand_chacha::ChaCha8Rng| {
        let id = ConceptId(concepts.len() as u32);
        let mut v: Vec<f64> = signal.iter().map(|s| s + jitter.sample(rng)).collect();
        v.extend((cfg.signal_dims..cfg.dim).map(|_| noise.sample(rng)));
        concepts.push(Concept::new(id, name, v));
        id
    };
    let root = push("root".into(), unit(&mut rng, &std, cfg.signal_dims), &noise, &mut rng);
    for g in 0..cfg.groups {
        let cats: Vec<usize> = (g * cfg.categories_per_group..(g + 1) * cfg.categories_per_group).collect();
        let mut mean = vec![0.0; cfg.signal_dims];
        for &c in &cats {
            for (m, x) in mean.iter_mut().zip(&themes[c]) {
                *m += x / cats.len() as f64;
            }
        }
        let gid = push(format!("g{g}"), mean, &noise, &mut rng);
        edges.push((root, gid));
        for c in cats {
            let cid = push(format!("c{c}"), themes[decoy[c]].clone(), &noise, &mut rng);
            edges.push((gid, cid));
            for l in 0..cfg.leaves_per_category {
                let lid = push(format!("c{c}.l{l}"), themes[c].clone(), &leaf_noise, &mut rng);
                edges.push((cid, lid));
            }
        }
    }
    Taxonomy::new(cfg.dim, concepts, edges)
}

/// A leaf moved from its parent to another node.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rewire {
    pub leaf: ConceptId,
    pub from: ConceptId,
    pub to: ConceptId,
}

/// Moves `count` random single-parent leaves under a different random node
/// that already parents some leaf. Returns the corrupted taxonomy and the
/// moves, sorted by leaf.
pub fn rewire_leaves(t: &Taxonomy, count: usize, seed: u64) -> Result<(Taxonomy, Vec<Rewire>)> {
    let mut rng = SeedStream::new(seed).split_str("rewire").rng();
    let mut leaves: Vec<ConceptId> = t
        .leaves()
        .filter(|&l| t.parents(l).map(|p| p.len() == 1).unwrap_or(false))
        .collect();
    let targets: Vec<ConceptId> = t
        .ids()
        .filter(|&n| t.children(n).map(|c| c.iter().any(|&x| leaves.contains(&x))).unwrap_or(false))
        .collect();
    if count > leaves.len() || targets.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "cannot rewire {count} leaves: {} candidates, {} possible parents",
            leaves.len(),
            targets.len()
        )));
    }
    leaves.shuffle(&mut rng);
    let mut moves: Vec<Rewire> = leaves[..count]
        .iter()
        .map(|&leaf| {
            let from = t.parents(leaf)?[0];
            let to = loop {
                let c = *targets.choose(&mut rng).expect("nonempty");
                if c != from {
                    break c;
                }
            };
            Ok(Rewire { leaf, from, to })
        })
        .collect::<Result<_>>()?;
    moves.sort_by_key(|m| m.leaf);
    let moved: BTreeSet<(ConceptId, ConceptId)> = moves.iter().map(|m| (m.from, m.leaf)).collect();
    let edges: Vec<_> = t
        .edges()
        .filter(|e| !moved.contains(e))
        .chain(moves.iter().map(|m| (m.to, m.leaf)))
        .collect();
    Ok((Taxonomy::new(t.dimension(), t.concepts().to_vec(), edges)?, moves))
}

/// Rewires `round(fraction × candidate leaves)` leaves; see [`rewire_leaves`].
pub fn inject_label_noise(t: &Taxonomy, fraction: f64, seed: u64) -> Result<(Taxonomy, Vec<Rewire>)> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::InvalidArgument(format!("noise fraction {fraction} not in [0, 1]")));
    }
    let candidates = t
        .leaves()
        .filter(|&l| t.parents(l).map(|p| p.len() == 1).unwrap_or(false))
        .count();
    rewire_leaves(t, (fraction * candidates as f64).round() as usize, seed)
}
