//! The query–anchor matching model.
//!
//! Propagation turns the initial features of an egonet into node embeddings
//! (GCN, GAT, or their position-enhanced variants that append a per-layer
//! position embedding to every node before each layer). A readout pools the
//! node embeddings into the anchor representation, and a matcher scores it
//! against the raw query embedding.
//!
//! All matrices act on row vectors, so a batch of `n` nodes with `d` features
//! is an `n×d` matrix and a layer weight is `d_in × d_out`.
//!
//! ```
//! use taxo_expand::egonet::{batch_egonets, extract_egonet};
//! use taxo_expand::model::{ModelConfig, ModelParams};
//! use taxo_expand::{Concept, ConceptId, Taxonomy};
//!
//! let concepts = vec![
//!     Concept::new(ConceptId(0), "room", vec![1.0, 0.0]),
//!     Concept::new(ConceptId(1), "ward", vec![0.0, 1.0]),
//! ];
//! let t = Taxonomy::new(2, concepts, [(ConceptId(0), ConceptId(1))]).unwrap();
//! let config = ModelConfig { heads: vec![2, 1], hidden: vec![4, 3], position_dim: 2, ..Default::default() };
//! let params = ModelParams::init(&config, 2, 7).unwrap();
//! let batch = batch_egonets(&[extract_egonet(&t, ConceptId(0)).unwrap()]).unwrap();
//! let reps = params.anchor_representations(&batch).unwrap();
//! assert_eq!(reps.shape(), (1, 3));
//! ```

mod config;
mod forward;
mod params;

use rand::Rng;

pub use config::{Arch, Matcher, ModelConfig, Readout};
pub use forward::{
    attention_weights, encode_anchors, gat_head, gcn_aggregate, log_score, match_logits, propagate, readout, Bound,
};
pub use params::{
    head_attention, head_weight, layer_position, layer_weight, ModelParams, MATCHER_B1, MATCHER_B2, MATCHER_W1,
    MATCHER_W2, MATCHER_WEIGHT, READOUT_POSITION_WEIGHT,
};

use crate::diff::gradcheck::{self, GradCheck};
use crate::diff::{Matrix, Tape, Var};
use crate::egonet::{batch_egonets, Egonet, EgonetBatch, EgonetNode, PositionLabel};
use crate::error::{Error, Result};
use crate::rng::SeedStream;
use crate::taxonomy::ConceptId;

/// Smallest rectifier margin accepted for a gradient-check fixture.
const KINK_MARGIN: f64 = 1e-3;

/// Egonet with the given numbers of grand-parents and siblings and random
/// features in `[-1, 1)`.
pub fn random_egonet(rng: &mut impl Rng, anchor: u32, parents: usize, siblings: usize, dim: usize) -> Egonet {
    let mut node = |id: u32, position| EgonetNode {
        concept: ConceptId(id),
        position,
        features: (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect(),
    };
    let mut nodes = vec![node(anchor, PositionLabel::Anchor)];
    for i in 0..parents {
        nodes.push(node(1000 + i as u32, PositionLabel::GrandParent));
    }
    for i in 0..siblings {
        nodes.push(node(2000 + i as u32, PositionLabel::Sibling));
    }
    let edges = (1..nodes.len()).map(|i| (0, i)).collect();
    Egonet {
        anchor: ConceptId(anchor),
        nodes,
        edges,
    }
}

fn random_params(config: &ModelConfig, input_dim: usize, rng: &mut impl Rng) -> Result<ModelParams> {
    let mut p = ModelParams::init(config, input_dim, rng.random())?;
    let names: Vec<String> = p.names().map(str::to_string).collect();
    for n in names {
        for x in p.get_mut(&n)?.as_mut_slice() {
            *x = rng.random_range(-0.6..0.6);
        }
    }
    Ok(p)
}

/// Contrastive loss of the first pair against the others plus a fixed random
/// weighting of every log score, so each logit gets a distinct gradient.
fn fixture_loss(
    tape: &mut Tape,
    params: &ModelParams,
    bound: &Bound,
    batch: &EgonetBatch,
    queries: &Matrix,
    weights: &Matrix,
) -> Result<Var> {
    let a = encode_anchors(tape, &params.config, bound, batch, None)?;
    let q = tape.constant(queries.clone());
    let l = match_logits(tape, &params.config, bound, a, q)?;
    let ls = log_score(tape, params.config.matcher, l);
    let lse = tape.segment_logsumexp(ls, vec![0; batch.len()], 1)?;
    let first = tape.gather_rows(ls, vec![0])?;
    let nce = tape.sub(lse, first)?;
    let w = tape.constant(weights.clone());
    let weighted = tape.mul(ls, w)?;
    let extra = tape.sum(weighted);
    tape.add(nce, extra)
}

/// `base` under every architecture, readout and matcher combination.
pub fn all_variants(base: &ModelConfig) -> Vec<ModelConfig> {
    let mut out = Vec::new();
    for arch in [Arch::Gcn, Arch::Gat, Arch::Pgcn, Arch::Pgat] {
        for readout in [Readout::Mean, Readout::Wmr, Readout::Cr] {
            for matcher in [Matcher::Mlp, Matcher::Lbm] {
                out.push(ModelConfig {
                    readout,
                    matcher,
                    ..base.clone().with_arch(arch)
                });
            }
        }
    }
    out
}

/// End-to-end finite-difference check of every model parameter on a
/// three-egonet batch, one [`GradCheck`] per parameter tensor.
pub fn model_gradcheck(config: &ModelConfig, input_dim: usize, stream: SeedStream) -> Result<Vec<GradCheck>> {
    for attempt in 0..100 {
        let mut rng = stream.split(attempt).rng();
        let params = random_params(config, input_dim, &mut rng)?;
        let egonets = [
            random_egonet(&mut rng, 0, 2, 2, input_dim),
            random_egonet(&mut rng, 1, 0, 0, input_dim),
            random_egonet(&mut rng, 2, 1, 3, input_dim),
        ];
        let batch = batch_egonets(&egonets)?;
        let queries = Matrix::from_fn(3, input_dim, |_, _| rng.random_range(-1.0..1.0));
        let weights = Matrix::from_fn(3, 1, |_, _| rng.random_range(-1.0..1.0));

        let mut probe = Tape::new();
        let bound = Bound::frozen(&mut probe, &params);
        fixture_loss(&mut probe, &params, &bound, &batch, &queries, &weights)?;
        if probe.kink_margin() < KINK_MARGIN {
            continue;
        }

        return params
            .names()
            .map(|name| {
                let input = params.get(name)?.clone();
                gradcheck::check(name, &[input], gradcheck::DEFAULT_STEP, |tape, vars| {
                    let bound = Bound::frozen(tape, &params).with(name, vars[0]);
                    fixture_loss(tape, &params, &bound, &batch, &queries, &weights)
                })
            })
            .collect();
    }
    Err(Error::InvalidArgument(
        "no gradient-check fixture clear of rectifier kinks in 100 draws".into(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::taxonomy::tests::named;
    use crate::egonet::extract_egonet;

    fn tiny(arch: Arch, readout: Readout, matcher: Matcher) -> ModelConfig {
        ModelConfig {
            heads: vec![2, 1],
            hidden: vec![3, 3],
            position_dim: 2,
            readout,
            matcher,
            matcher_hidden: 4,
            ..ModelConfig::default()
        }
        .with_arch(arch)
    }

    #[test]
    fn every_combination_passes_gradcheck() {
        for arch in [Arch::Gcn, Arch::Gat, Arch::Pgcn, Arch::Pgat] {
            for readout in [Readout::Mean, Readout::Wmr, Readout::Cr] {
                for matcher in [Matcher::Mlp, Matcher::Lbm] {
                    let c = tiny(arch, readout, matcher);
                    for g in model_gradcheck(&c, 3, SeedStream::new(11)).unwrap() {
                        assert!(g.passed(1e-4), "{arch} {readout} {matcher} {}: {}", g.name, g.max_relative_error);
                    }
                }
            }
        }
    }

    #[test]
    fn lbm_identity_scores() {
        let c = ModelConfig {
            heads: vec![1],
            hidden: vec![2],
            position_dim: 1,
            ..ModelConfig::default()
        };
        let mut p = ModelParams::init(&c, 2, 0).unwrap();
        *p.get_mut(MATCHER_WEIGHT).unwrap() = Matrix::identity(2);
        let e1 = Matrix::from_rows(&[[1.0, 0.0]]).unwrap();
        let s = p.logits(&e1, &e1).unwrap();
        assert!((c.matcher.score(s[0]) - std::f64::consts::E).abs() < 1e-12);
        let zero = Matrix::zeros(1, 2);
        let q = Matrix::from_rows(&[[3.0, -7.0]]).unwrap();
        assert_eq!(c.matcher.score(p.logits(&zero, &q).unwrap()[0]), 1.0);
    }

    #[test]
    fn mlp_scores_are_probabilities() {
        let c = tiny(Arch::Pgat, Readout::Wmr, Matcher::Mlp);
        let mut rng = SeedStream::new(3).rng();
        let p = random_params(&c, 3, &mut rng).unwrap();
        let a = Matrix::from_fn(10_000, 3, |_, _| rng.random_range(-5.0..5.0));
        let q = Matrix::from_fn(10_000, 3, |_, _| rng.random_range(-5.0..5.0));
        for l in p.logits(&a, &q).unwrap() {
            let s = Matcher::Mlp.score(l);
            assert!(s > 0.0 && s < 1.0);
        }
    }

    #[test]
    fn identical_pairs_score_identically() {
        let t = named(&[("g", "a"), ("a", "c1"), ("a", "c2")]);
        let c = tiny(Arch::Pgat, Readout::Wmr, Matcher::Lbm);
        let p = ModelParams::init(&c, 2, 5).unwrap();
        let e = extract_egonet(&t, t.id_of("a").unwrap()).unwrap();
        let batch = batch_egonets(&vec![e; 32]).unwrap();
        let reps = p.anchor_representations(&batch).unwrap();
        for r in 1..32 {
            assert_eq!(reps.row(r), reps.row(0));
        }
        let q = Matrix::from_fn(32, 2, |_, j| j as f64 - 0.5);
        let s = p.forward(&batch, &q).unwrap();
        assert!(s.iter().all(|&x| x == s[0]));
    }
}
