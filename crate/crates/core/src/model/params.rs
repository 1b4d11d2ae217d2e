use std::collections::BTreeMap;
use std::hash::Hasher;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::config::{Arch, Matcher, ModelConfig, Readout};
use crate::diff::Matrix;
use crate::egonet::PositionLabel;
use crate::error::{Error, Result};
use crate::rng::SeedStream;

/// How a parameter tensor is initialised.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Init {
    Glorot,
    Zeros,
    Normal,
}

const POSITION_INIT_STD: f64 = 0.1;

pub fn layer_weight(k: usize) -> String {
    format!("layer{k}.weight")
}

pub fn head_weight(k: usize, m: usize) -> String {
    format!("layer{k}.head{m}.weight")
}

pub fn head_attention(k: usize, m: usize) -> String {
    format!("layer{k}.head{m}.attention")
}

pub fn layer_position(k: usize) -> String {
    format!("layer{k}.position")
}

pub const READOUT_POSITION_WEIGHT: &str = "readout.position_weight";
pub const MATCHER_WEIGHT: &str = "matcher.weight";
pub const MATCHER_W1: &str = "matcher.w1";
pub const MATCHER_B1: &str = "matcher.b1";
pub const MATCHER_W2: &str = "matcher.w2";
pub const MATCHER_B2: &str = "matcher.b2";

/// Every parameter the configuration calls for, with shape and initialiser.
///
/// Matrices act on row vectors (`x·W`), so a layer weight is `in × out`. For
/// position-enhanced archs the weight is widened to `(in + position_dim) ×
/// out`; its lower block is the position transform.
fn layout(config: &ModelConfig, input_dim: usize) -> Vec<(String, (usize, usize), Init)> {
    let mut out = Vec::new();
    let pd = config.position_dim;
    for k in 0..config.layers() {
        let input = config.layer_input(k, input_dim) + pd;
        if config.arch.is_positional() {
            out.push((layer_position(k), (PositionLabel::COUNT, pd), Init::Normal));
        }
        match config.arch {
            Arch::Gcn | Arch::Pgcn => out.push((layer_weight(k), (input, config.hidden[k]), Init::Glorot)),
            Arch::Gat | Arch::Pgat => {
                for m in 0..config.heads[k] {
                    out.push((head_weight(k, m), (input, config.hidden[k]), Init::Glorot));
                    out.push((head_attention(k, m), (2 * config.hidden[k], 1), Init::Glorot));
                }
            }
        }
    }
    if config.readout == Readout::Wmr {
        out.push((READOUT_POSITION_WEIGHT.into(), (PositionLabel::COUNT, 1), Init::Zeros));
    }
    let anchor = config.anchor_dim();
    match config.matcher {
        Matcher::Lbm => out.push((MATCHER_WEIGHT.into(), (anchor, input_dim), Init::Glorot)),
        Matcher::Mlp => {
            let h = config.matcher_hidden;
            out.push((MATCHER_W1.into(), (anchor + input_dim, h), Init::Glorot));
            out.push((MATCHER_B1.into(), (1, h), Init::Zeros));
            out.push((MATCHER_W2.into(), (h, 1), Init::Glorot));
            out.push((MATCHER_B2.into(), (1, 1), Init::Zeros));
        }
    }
    out
}

/// Named learnable tensors of a model together with its configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub config: ModelConfig,
    /// Dimension of initial concept embeddings.
    pub input_dim: usize,
    tensors: BTreeMap<String, Matrix>,
}

impl ModelParams {
    /// Fresh parameters: Glorot-uniform matrices, zero biases and readout
    /// weights, `N(0, 0.1²)` position embeddings.
    pub fn init(config: &ModelConfig, input_dim: usize, seed: u64) -> Result<Self> {
        config.validate()?;
        if input_dim == 0 {
            return Err(Error::InvalidArgument("input dimension must be positive".into()));
        }
        let stream = SeedStream::new(seed).split_str("init");
        let normal = Normal::new(0.0, POSITION_INIT_STD).expect("valid std");
        let tensors = layout(config, input_dim)
            .into_iter()
            .map(|(name, (r, c), init)| {
                let mut rng = stream.split_str(&name).rng();
                let m = match init {
                    Init::Zeros => Matrix::zeros(r, c),
                    Init::Normal => Matrix::from_fn(r, c, |_, _| normal.sample(&mut rng)),
                    Init::Glorot => {
                        let limit = (6.0 / (r + c) as f64).sqrt();
                        Matrix::from_fn(r, c, |_, _| rng.random_range(-limit..limit))
                    }
                };
                (name, m)
            })
            .collect();
        Ok(ModelParams {
            config: config.clone(),
            input_dim,
            tensors,
        })
    }

    /// Builds parameters from explicit tensors, checking names and shapes
    /// against the configuration.
    pub fn from_tensors(config: ModelConfig, input_dim: usize, tensors: BTreeMap<String, Matrix>) -> Result<Self> {
        let p = ModelParams {
            config,
            input_dim,
            tensors,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        self.config.validate()?;
        let expected = layout(&self.config, self.input_dim);
        for (name, shape, _) in &expected {
            match self.tensors.get(name) {
                None => return Err(Error::Checkpoint(format!("missing parameter {name}"))),
                Some(m) if m.shape() != *shape => {
                    return Err(Error::Checkpoint(format!(
                        "parameter {name} has shape {:?}, configuration expects {shape:?}",
                        m.shape()
                    )))
                }
                Some(m) if m.as_slice().len() != shape.0 * shape.1 => {
                    return Err(Error::Checkpoint(format!(
                        "parameter {name} holds {} values for shape {shape:?}",
                        m.as_slice().len()
                    )))
                }
                Some(_) => {}
            }
        }
        if let Some(extra) = self.tensors.keys().find(|k| !expected.iter().any(|(n, _, _)| n == *k)) {
            return Err(Error::Checkpoint(format!("unexpected parameter {extra}")));
        }
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<&Matrix> {
        self.tensors
            .get(name)
            .ok_or_else(|| Error::InvalidArgument(format!("no parameter named {name}")))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Matrix> {
        self.tensors
            .get_mut(name)
            .ok_or_else(|| Error::InvalidArgument(format!("no parameter named {name}")))
    }

    /// Parameter names in sorted order.
    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Matrix)> {
        self.tensors.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn tensors(&self) -> &BTreeMap<String, Matrix> {
        &self.tensors
    }

    pub fn count(&self) -> usize {
        self.tensors.values().map(Matrix::len).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.values().all(Matrix::is_finite)
    }

    /// Hash of the configuration and every parameter bit pattern.
    pub fn fingerprint(&self) -> u64 {
        let mut h = std::collections::hash_map::DefaultHasher::new();
        h.write(serde_json::to_string(&self.config).unwrap_or_default().as_bytes());
        h.write_usize(self.input_dim);
        for (name, m) in &self.tensors {
            h.write(name.as_bytes());
            h.write_usize(m.rows());
            h.write_usize(m.cols());
            for x in m.as_slice() {
                h.write_u64(x.to_bits());
            }
        }
        h.finish()
    }
}
