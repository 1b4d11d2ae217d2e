use std::collections::BTreeMap;

use rand_chacha::ChaCha8Rng;

use super::config::{Arch, Matcher, ModelConfig, Readout};
use super::params::{self, ModelParams};
use crate::diff::{Matrix, Tape, Var};
use crate::egonet::{EgonetBatch, PositionLabel};
use crate::error::{Error, Result};

/// Model parameters recorded on a tape.
#[derive(Clone, Debug)]
pub struct Bound {
    vars: BTreeMap<String, Var>,
}

impl Bound {
    /// Records every parameter as trainable.
    pub fn trainable(tape: &mut Tape, params: &ModelParams) -> Self {
        Bound {
            vars: params.iter().map(|(n, m)| (n.to_string(), tape.param(m.clone()))).collect(),
        }
    }

    /// Records every parameter as a constant.
    pub fn frozen(tape: &mut Tape, params: &ModelParams) -> Self {
        Bound {
            vars: params.iter().map(|(n, m)| (n.to_string(), tape.constant(m.clone()))).collect(),
        }
    }

    /// Pairs parameter names with already recorded vars.
    pub fn from_vars<'a>(names: impl IntoIterator<Item = &'a str>, vars: &[Var]) -> Self {
        Bound {
            vars: names.into_iter().map(str::to_string).zip(vars.iter().copied()).collect(),
        }
    }

    pub fn get(&self, name: &str) -> Result<Var> {
        self.vars
            .get(name)
            .copied()
            .ok_or_else(|| Error::InvalidArgument(format!("parameter {name} not bound")))
    }

    /// Replaces the var bound to `name`.
    pub fn with(mut self, name: &str, var: Var) -> Self {
        self.vars.insert(name.to_string(), var);
        self
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, Var)> {
        self.vars.iter().map(|(k, v)| (k.as_str(), *v))
    }
}

/// Aggregation with fixed symmetric-normalised coefficients:
/// `h'_u = Σ_{v∈Ñ(u)} c_uv · (x·W)_v`, before the nonlinearity.
pub fn gcn_aggregate(tape: &mut Tape, batch: &EgonetBatch, x: Var, weight: Var) -> Result<Var> {
    let xw = tape.matmul(x, weight)?;
    let msgs = tape.gather_rows(xw, batch.msg_src.clone())?;
    let coef = tape.constant(Matrix::column(batch.gcn_coef.clone()));
    tape.segment_weighted_sum(msgs, coef, batch.msg_dst.clone(), batch.node_count())
}

/// One attention head, before the nonlinearity. The logit of message `v→u`
/// is `LeakyReLU(z · [xW_u ‖ xW_v])`, normalised by softmax over `Ñ(u)`.
pub fn gat_head(tape: &mut Tape, batch: &EgonetBatch, x: Var, weight: Var, attention: Var, slope: f64) -> Result<Var> {
    let (dst, src, n) = (batch.msg_dst.clone(), batch.msg_src.clone(), batch.node_count());
    let xw = tape.matmul(x, weight)?;
    let at_dst = tape.gather_rows(xw, dst.clone())?;
    let at_src = tape.gather_rows(xw, src)?;
    let pair = tape.concat_cols(&[at_dst, at_src])?;
    let raw = tape.matmul(pair, attention)?;
    let logits = tape.leaky_relu(raw, slope);
    let alpha = tape.segment_softmax(logits, dst.clone(), n)?;
    tape.segment_weighted_sum(at_src, alpha, dst, n)
}

/// Attention coefficients of one head, one per message, without recording
/// anything reusable. Used to inspect the softmax normalisation.
pub fn attention_weights(
    batch: &EgonetBatch,
    x: &Matrix,
    weight: &Matrix,
    attention: &Matrix,
    slope: f64,
) -> Result<Vec<f64>> {
    let mut tape = Tape::new();
    let (dst, src, n) = (batch.msg_dst.clone(), batch.msg_src.clone(), batch.node_count());
    let x = tape.constant(x.clone());
    let w = tape.constant(weight.clone());
    let z = tape.constant(attention.clone());
    let xw = tape.matmul(x, w)?;
    let a = tape.gather_rows(xw, dst.clone())?;
    let b = tape.gather_rows(xw, src)?;
    let pair = tape.concat_cols(&[a, b])?;
    let raw = tape.matmul(pair, z)?;
    let logits = tape.leaky_relu(raw, slope);
    let alpha = tape.segment_softmax(logits, dst, n)?;
    Ok(tape.value(alpha).as_slice().to_vec())
}

/// Node embeddings after all propagation layers.
///
/// With `dropout` set, input features are dropped at the configured rate.
pub fn propagate(
    tape: &mut Tape,
    config: &ModelConfig,
    bound: &Bound,
    batch: &EgonetBatch,
    dropout: Option<&mut ChaCha8Rng>,
) -> Result<Var> {
    let mut h = tape.constant(batch.features.clone());
    if let Some(rng) = dropout {
        h = tape.dropout(h, config.dropout, true, rng)?;
    }
    for k in 0..config.layers() {
        let x = if config.arch.is_positional() {
            let table = bound.get(&params::layer_position(k))?;
            let p = tape.gather_rows(table, batch.positions.clone())?;
            tape.concat_cols(&[h, p])?
        } else {
            h
        };
        let pre = match config.arch {
            Arch::Gcn | Arch::Pgcn => gcn_aggregate(tape, batch, x, bound.get(&params::layer_weight(k))?)?,
            Arch::Gat | Arch::Pgat => {
                let heads = (0..config.heads[k])
                    .map(|m| {
                        let w = bound.get(&params::head_weight(k, m))?;
                        let z = bound.get(&params::head_attention(k, m))?;
                        gat_head(tape, batch, x, w, z, config.leaky_slope)
                    })
                    .collect::<Result<Vec<_>>>()?;
                if heads.len() == 1 {
                    heads[0]
                } else {
                    tape.concat_cols(&heads)?
                }
            }
        };
        h = tape.relu(pre);
    }
    Ok(h)
}

/// Pools node embeddings `h` into one row per egonet.
///
/// `position_weight` (a `3×1` column of α_p) is required for WMR only.
pub fn readout(
    tape: &mut Tape,
    batch: &EgonetBatch,
    h: Var,
    kind: Readout,
    position_weight: Option<Var>,
) -> Result<Var> {
    let b = batch.len();
    if batch.sizes.contains(&0) || batch.node_count() == 0 {
        return Err(Error::InvalidArgument("readout over an empty node set".into()));
    }
    match kind {
        Readout::Mean => {
            let w: Vec<f64> = batch.segments.iter().map(|&s| 1.0 / batch.sizes[s] as f64).collect();
            let w = tape.constant(Matrix::column(w));
            tape.segment_weighted_sum(h, w, batch.segments.clone(), b)
        }
        Readout::Wmr => {
            let alpha = position_weight
                .ok_or_else(|| Error::InvalidArgument("weighted mean readout needs position weights".into()))?;
            let per_node = tape.gather_rows(alpha, batch.positions.clone())?;
            let s = tape.softplus(per_node);
            let num = tape.segment_weighted_sum(h, s, batch.segments.clone(), b)?;
            let ones = tape.constant(Matrix::filled(batch.node_count(), 1, 1.0));
            let den = tape.segment_weighted_sum(s, ones, batch.segments.clone(), b)?;
            let inv = tape.recip(den);
            tape.scale_rows(num, inv)
        }
        Readout::Cr => {
            let mut counts = vec![[0usize; PositionLabel::COUNT]; b];
            for (&s, &p) in batch.segments.iter().zip(batch.positions.iter()) {
                counts[s][p] += 1;
            }
            let parts = (0..PositionLabel::COUNT)
                .map(|p| {
                    let w: Vec<f64> = batch
                        .segments
                        .iter()
                        .zip(batch.positions.iter())
                        .map(|(&s, &q)| if q == p { 1.0 / counts[s][p] as f64 } else { 0.0 })
                        .collect();
                    let w = tape.constant(Matrix::column(w));
                    tape.segment_weighted_sum(h, w, batch.segments.clone(), b)
                })
                .collect::<Result<Vec<_>>>()?;
            tape.concat_cols(&parts)
        }
    }
}

/// Anchor representations, one row per egonet of `batch`.
pub fn encode_anchors(
    tape: &mut Tape,
    config: &ModelConfig,
    bound: &Bound,
    batch: &EgonetBatch,
    dropout: Option<&mut ChaCha8Rng>,
) -> Result<Var> {
    let h = propagate(tape, config, bound, batch, dropout)?;
    let alpha = match config.readout {
        Readout::Wmr => Some(bound.get(params::READOUT_POSITION_WEIGHT)?),
        Readout::Mean | Readout::Cr => None,
    };
    readout(tape, batch, h, config.readout, alpha)
}

/// Matching logits for row-aligned anchor and query representations.
///
/// LBM: `aᵀWn`, whose score is its exponential. MLP: the pre-sigmoid output
/// of `W₂ γ(W₁(a‖n) + B₁) + B₂`.
pub fn match_logits(tape: &mut Tape, config: &ModelConfig, bound: &Bound, anchors: Var, queries: Var) -> Result<Var> {
    let (ra, rq) = (tape.shape(anchors).0, tape.shape(queries).0);
    if ra != rq {
        return Err(Error::Shape {
            op: "match_logits",
            lhs: tape.shape(anchors),
            rhs: tape.shape(queries),
        });
    }
    match config.matcher {
        Matcher::Lbm => {
            let aw = tape.matmul(anchors, bound.get(params::MATCHER_WEIGHT)?)?;
            let prod = tape.mul(aw, queries)?;
            Ok(tape.sum_cols(prod))
        }
        Matcher::Mlp => {
            let x = tape.concat_cols(&[anchors, queries])?;
            let h = tape.matmul(x, bound.get(params::MATCHER_W1)?)?;
            let h = tape.add_bias(h, bound.get(params::MATCHER_B1)?)?;
            let h = tape.leaky_relu(h, config.leaky_slope);
            let o = tape.matmul(h, bound.get(params::MATCHER_W2)?)?;
            tape.add_bias(o, bound.get(params::MATCHER_B2)?)
        }
    }
}

/// Log of the matching score for a logit: `l` for LBM, `ln σ(l)` for MLP.
pub fn log_score(tape: &mut Tape, matcher: Matcher, logits: Var) -> Var {
    match matcher {
        Matcher::Lbm => logits,
        Matcher::Mlp => {
            let neg = tape.scale(logits, -1.0);
            let sp = tape.softplus(neg);
            tape.scale(sp, -1.0)
        }
    }
}

impl Matcher {
    /// Score `f(a, n)` from its logit.
    pub fn score(self, logit: f64) -> f64 {
        match self {
            Matcher::Lbm => logit.exp(),
            Matcher::Mlp => crate::diff::stable_sigmoid(logit),
        }
    }

    /// `ln f(a, n)` from its logit.
    pub fn log_score(self, logit: f64) -> f64 {
        match self {
            Matcher::Lbm => logit,
            Matcher::Mlp => -crate::diff::stable_softplus(-logit),
        }
    }
}

impl ModelParams {
    /// Anchor representations for every egonet of `batch`, dropout off.
    pub fn anchor_representations(&self, batch: &EgonetBatch) -> Result<Matrix> {
        let mut tape = Tape::new();
        let bound = Bound::frozen(&mut tape, self);
        let a = encode_anchors(&mut tape, &self.config, &bound, batch, None)?;
        Ok(tape.value(a).clone())
    }

    /// Matching logits of row-aligned anchor representations and queries.
    pub fn logits(&self, anchors: &Matrix, queries: &Matrix) -> Result<Vec<f64>> {
        if anchors.cols() != self.config.anchor_dim() || queries.cols() != self.input_dim {
            return Err(Error::Shape {
                op: "logits",
                lhs: anchors.shape(),
                rhs: queries.shape(),
            });
        }
        let mut tape = Tape::new();
        let bound = Bound::frozen(&mut tape, self);
        let a = tape.constant(anchors.clone());
        let q = tape.constant(queries.clone());
        let l = match_logits(&mut tape, &self.config, &bound, a, q)?;
        Ok(tape.value(l).as_slice().to_vec())
    }

    /// Uncached scores: one query row per egonet of `batch`.
    pub fn forward(&self, batch: &EgonetBatch, queries: &Matrix) -> Result<Vec<f64>> {
        if queries.rows() != batch.len() {
            return Err(Error::Shape {
                op: "forward",
                lhs: (batch.len(), self.input_dim),
                rhs: queries.shape(),
            });
        }
        let anchors = self.anchor_representations(batch)?;
        Ok(self
            .logits(&anchors, queries)?
            .into_iter()
            .map(|l| self.config.matcher.score(l))
            .collect())
    }
}
