//! Independent reference implementations shared by the integration tests.
//!
//! Everything here works node by node on plain vectors, with none of the
//! batching, gathering or tape machinery of the library.

#![allow(dead_code)]

use std::collections::BTreeSet;

use rand::Rng;
use taxo_expand::egonet::{Egonet, PositionLabel};
use taxo_expand::model::{
    head_attention, head_weight, layer_position, layer_weight, Arch, Matcher, ModelConfig, ModelParams, Readout,
    MATCHER_B1, MATCHER_B2, MATCHER_W1, MATCHER_W2, MATCHER_WEIGHT, READOUT_POSITION_WEIGHT,
};
use taxo_expand::diff::Matrix;

pub type Rows = Vec<Vec<f64>>;

pub fn to_rows(m: &Matrix) -> Rows {
    (0..m.rows()).map(|r| m.row(r).to_vec()).collect()
}

/// `x · W` for a row vector.
pub fn vec_mat(x: &[f64], w: &Matrix) -> Vec<f64> {
    assert_eq!(x.len(), w.rows());
    (0..w.cols())
        .map(|j| (0..x.len()).map(|i| x[i] * w[(i, j)]).sum())
        .collect()
}

pub fn leaky(x: f64, slope: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        slope * x
    }
}

pub fn softplus(x: f64) -> f64 {
    (1.0 + x.exp()).ln()
}

/// `{u} ∪ N(u)` for every node, read straight off the edge list.
pub fn hoods(ego: &Egonet) -> Vec<BTreeSet<usize>> {
    let mut h: Vec<BTreeSet<usize>> = (0..ego.nodes.len()).map(|u| BTreeSet::from([u])).collect();
    for &(a, b) in &ego.edges {
        h[a].insert(b);
        h[b].insert(a);
    }
    h
}

/// GCN aggregation before the nonlinearity.
pub fn gcn_layer(ego: &Egonet, x: &Rows, w: &Matrix) -> Rows {
    let h = hoods(ego);
    let xw: Rows = x.iter().map(|r| vec_mat(r, w)).collect();
    (0..x.len())
        .map(|u| {
            let mut out = vec![0.0; w.cols()];
            for &v in &h[u] {
                let c = 1.0 / ((h[u].len() * h[v].len()) as f64).sqrt();
                for (o, y) in out.iter_mut().zip(&xw[v]) {
                    *o += c * y;
                }
            }
            out
        })
        .collect()
}

/// One attention head before the nonlinearity.
pub fn gat_head(ego: &Egonet, x: &Rows, w: &Matrix, z: &Matrix, slope: f64) -> Rows {
    let h = hoods(ego);
    let xw: Rows = x.iter().map(|r| vec_mat(r, w)).collect();
    let d = w.cols();
    (0..x.len())
        .map(|u| {
            let e: Vec<(usize, f64)> = h[u]
                .iter()
                .map(|&v| {
                    let s: f64 = (0..d).map(|i| z[(i, 0)] * xw[u][i] + z[(d + i, 0)] * xw[v][i]).sum();
                    (v, leaky(s, slope).exp())
                })
                .collect();
            let total: f64 = e.iter().map(|p| p.1).sum();
            let mut out = vec![0.0; d];
            for (v, ev) in e {
                for (o, y) in out.iter_mut().zip(&xw[v]) {
                    *o += ev / total * y;
                }
            }
            out
        })
        .collect()
}

pub fn relu_rows(x: Rows) -> Rows {
    x.into_iter().map(|r| r.into_iter().map(|v| v.max(0.0)).collect()).collect()
}

/// Node embeddings after every layer of `p`.
pub fn propagate(p: &ModelParams, ego: &Egonet) -> Rows {
    let c = &p.config;
    let mut h: Rows = ego.nodes.iter().map(|n| n.features.clone()).collect();
    for k in 0..c.layers() {
        let x: Rows = if c.arch.is_positional() {
            let table = p.get(&layer_position(k)).unwrap();
            h.iter()
                .zip(&ego.nodes)
                .map(|(r, n)| {
                    let mut v = r.clone();
                    v.extend_from_slice(table.row(n.position.index()));
                    v
                })
                .collect()
        } else {
            h.clone()
        };
        let pre = match c.arch {
            Arch::Gcn | Arch::Pgcn => gcn_layer(ego, &x, p.get(&layer_weight(k)).unwrap()),
            Arch::Gat | Arch::Pgat => {
                let heads: Vec<Rows> = (0..c.heads[k])
                    .map(|m| {
                        gat_head(
                            ego,
                            &x,
                            p.get(&head_weight(k, m)).unwrap(),
                            p.get(&head_attention(k, m)).unwrap(),
                            c.leaky_slope,
                        )
                    })
                    .collect();
                (0..x.len()).map(|u| heads.iter().flat_map(|hd| hd[u].clone()).collect()).collect()
            }
        };
        h = relu_rows(pre);
    }
    h
}

pub fn mean(rows: &[&Vec<f64>], dim: usize) -> Vec<f64> {
    let mut out = vec![0.0; dim];
    for r in rows {
        for (o, v) in out.iter_mut().zip(r.iter()) {
            *o += v / rows.len() as f64;
        }
    }
    out
}

/// Pooling of node embeddings `h` into one vector.
pub fn readout(kind: Readout, ego: &Egonet, h: &Rows, alpha: Option<&Matrix>) -> Vec<f64> {
    let d = h[0].len();
    match kind {
        Readout::Mean => mean(&h.iter().collect::<Vec<_>>(), d),
        Readout::Wmr => {
            let a = alpha.expect("WMR needs α");
            let w: Vec<f64> = ego.nodes.iter().map(|n| softplus(a[(n.position.index(), 0)])).collect();
            let total: f64 = w.iter().sum();
            (0..d).map(|j| (0..h.len()).map(|u| w[u] * h[u][j]).sum::<f64>() / total).collect()
        }
        Readout::Cr => PositionLabel::ALL
            .iter()
            .flat_map(|&p| {
                let members: Vec<&Vec<f64>> = h.iter().zip(&ego.nodes).filter(|(_, n)| n.position == p).map(|(r, _)| r).collect();
                // An absent position contributes zeros.
                if members.is_empty() {
                    vec![0.0; d]
                } else {
                    mean(&members, d)
                }
            })
            .collect(),
    }
}

pub fn anchor(p: &ModelParams, ego: &Egonet) -> Vec<f64> {
    let h = propagate(p, ego);
    let alpha = match p.config.readout {
        Readout::Wmr => Some(p.get(READOUT_POSITION_WEIGHT).unwrap()),
        _ => None,
    };
    readout(p.config.readout, ego, &h, alpha)
}

/// Matcher logit: `aᵀWn` for LBM, the pre-sigmoid output for MLP.
pub fn logit(p: &ModelParams, a: &[f64], q: &[f64]) -> f64 {
    match p.config.matcher {
        Matcher::Lbm => {
            let w = p.get(MATCHER_WEIGHT).unwrap();
            let aw = vec_mat(a, w);
            aw.iter().zip(q).map(|(x, y)| x * y).sum()
        }
        Matcher::Mlp => {
            let x: Vec<f64> = a.iter().chain(q).copied().collect();
            let b1 = p.get(MATCHER_B1).unwrap();
            let hidden: Vec<f64> = vec_mat(&x, p.get(MATCHER_W1).unwrap())
                .iter()
                .enumerate()
                .map(|(j, v)| leaky(v + b1[(0, j)], p.config.leaky_slope))
                .collect();
            vec_mat(&hidden, p.get(MATCHER_W2).unwrap())[0] + p.get(MATCHER_B2).unwrap()[(0, 0)]
        }
    }
}

pub fn infonce(scores: &[f64], positive: usize) -> f64 {
    -(scores[positive] / scores.iter().sum::<f64>()).ln()
}

/// Parameters with every entry, including zero-initialised ones, redrawn
/// from `U(-1, 1)`.
pub fn random_params(c: &ModelConfig, dim: usize, rng: &mut impl Rng) -> ModelParams {
    let mut p = ModelParams::init(c, dim, rng.random()).unwrap();
    let names: Vec<String> = p.names().map(str::to_string).collect();
    for n in names {
        for x in p.get_mut(&n).unwrap().as_mut_slice() {
            *x = rng.random_range(-1.0..1.0);
        }
    }
    p
}

pub fn small_config(arch: Arch, readout: Readout, matcher: Matcher) -> ModelConfig {
    ModelConfig {
        heads: vec![2, 1],
        hidden: vec![3, 4],
        position_dim: 2,
        readout,
        matcher,
        matcher_hidden: 5,
        ..ModelConfig::default()
    }
    .with_arch(arch)
}

// Metrics, written as plain loops.

pub fn mean_rank(ranks: &[Vec<usize>]) -> f64 {
    let mut total = 0usize;
    let mut pairs = 0usize;
    for r in ranks {
        for &x in r {
            total += x;
            pairs += 1;
        }
    }
    total as f64 / pairs as f64
}

pub fn hit_at(ranks: &[Vec<usize>], k: usize) -> f64 {
    let mut hits = 0;
    for r in ranks {
        let mut best = usize::MAX;
        for &x in r {
            best = best.min(x);
        }
        if best <= k {
            hits += 1;
        }
    }
    hits as f64 / ranks.len() as f64
}

pub fn scaled_mrr(ranks: &[Vec<usize>]) -> f64 {
    let mut total = 0.0;
    for r in ranks {
        let mut inner = 0.0;
        for &x in r {
            let bucket = (x + 9) / 10;
            inner += 1.0 / bucket as f64;
        }
        total += inner / r.len() as f64;
    }
    total / ranks.len() as f64
}

/// Scaled MRR as an exact fraction `(numerator, denominator)`.
pub fn scaled_mrr_exact(ranks: &[Vec<usize>]) -> (u128, u128) {
    fn gcd(a: u128, b: u128) -> u128 {
        if b == 0 {
            a
        } else {
            gcd(b, a % b)
        }
    }
    fn add((a, b): (u128, u128), (c, d): (u128, u128)) -> (u128, u128) {
        let (n, m) = (a * d + c * b, b * d);
        let g = gcd(n, m).max(1);
        (n / g, m / g)
    }
    let mut total = (0, 1);
    for r in ranks {
        for &x in r {
            total = add(total, (1, (x.div_ceil(10) * r.len()) as u128));
        }
    }
    let g = gcd(total.0, total.1 * ranks.len() as u128).max(1);
    (total.0 / g, total.1 * ranks.len() as u128 / g)
}
