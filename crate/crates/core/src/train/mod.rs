//! Self-supervised training.
//!
//! Every edge `⟨parent, child⟩` of the existing taxonomy is one positive pair
//! for query `child`; it is grouped with `N` anchors that are neither parents
//! nor descendants of the child. The model learns to pick the positive out of
//! the group (InfoNCE), or, as an ablation, to classify every pair
//! independently (binary cross entropy).

mod fit;
mod loss;
mod optim;
mod sampling;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use fit::{fit, fit_with, EpochLog, Fit, Trainer, TrainingState};
pub use loss::{bce_loss, bce_on_tape, bce_with_logits, infonce_from_log_scores, infonce_loss, infonce_on_tape};
pub use optim::{Adam, ReduceLrOnPlateau};
pub use sampling::{generate_instances, sample_negatives, TrainInstance};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Loss {
    #[default]
    InfoNce,
    Bce,
}

impl fmt::Display for Loss {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Loss::InfoNce => "infonce",
            Loss::Bce => "bce",
        })
    }
}

impl FromStr for Loss {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "infonce" => Ok(Loss::InfoNce),
            "bce" => Ok(Loss::Bce),
            _ => Err(Error::InvalidArgument(format!("unknown loss {s:?}; expected infonce or bce"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Negatives per instance.
    pub negatives: usize,
    /// Instances (edges) per gradient step.
    pub batch_size: usize,
    pub learning_rate: f64,
    pub scheduler_patience: usize,
    pub lr_factor: f64,
    pub max_epochs: usize,
    pub early_stop_patience: usize,
    pub loss: Loss,
    /// Children kept per anchor egonet.
    pub max_siblings: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            negatives: 31,
            batch_size: 64,
            learning_rate: 0.001,
            scheduler_patience: 3,
            lr_factor: 0.1,
            max_epochs: 100,
            early_stop_patience: 10,
            loss: Loss::InfoNce,
            max_siblings: 1000,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.negatives == 0 {
            return bad("negatives must be at least 1".into());
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate {} must be positive", self.learning_rate));
        }
        if !(self.lr_factor > 0.0 && self.lr_factor < 1.0) {
            return bad(format!("lr_factor {} not in (0, 1)", self.lr_factor));
        }
        if self.max_siblings == 0 {
            return bad("max_siblings must be positive".into());
        }
        Ok(())
    }

    pub fn egonet_options(&self) -> crate::egonet::EgonetOptions {
        crate::egonet::EgonetOptions {
            max_siblings: self.max_siblings,
            seed: self.seed,
        }
    }
}
