//! Run configuration: an optional JSON or TOML file, then command-line
//! overrides on top.

use std::path::Path;

use clap::Args;
use serde::{Deserialize, Serialize};
use taxo_expand::clean::CleanConfig;
use taxo_expand::model::{Arch, Matcher, ModelConfig, Readout};
use taxo_expand::train::{Loss, TrainConfig};

use crate::Failure;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub clean: CleanConfig,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, Failure> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::Usage(format!("cannot read config {}: {e}", path.display())))?;
        let bad = |e: String| Failure::Usage(format!("invalid config {}: {e}", path.display()));
        match path.extension().and_then(|e| e.to_str()) {
            Some("toml") => toml::from_str(&text).map_err(|e| bad(e.to_string())),
            _ => serde_json::from_str(&text).map_err(|e| bad(e.to_string())),
        }
    }

    pub fn validate(&self) -> Result<(), Failure> {
        self.model.validate().map_err(|e| Failure::Usage(e.to_string()))?;
        self.train.validate().map_err(|e| Failure::Usage(e.to_string()))?;
        if self.clean.folds < 2 {
            return Err(Failure::Usage("clean.folds must be at least 2".into()));
        }
        Ok(())
    }
}

/// Flags shared by every command that builds or trains a model.
#[derive(Args, Debug, Default, Clone)]
pub struct ConfigArgs {
    /// JSON or TOML file with `model`, `train` and `clean` tables.
    #[arg(long)]
    pub config: Option<std::path::PathBuf>,
    /// gcn, gat, pgcn or pgat.
    #[arg(long)]
    pub arch: Option<Arch>,
    /// Attention heads per layer, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub heads: Option<Vec<usize>>,
    /// Output width per layer, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub hidden: Option<Vec<usize>>,
    #[arg(long)]
    pub position_dim: Option<usize>,
    /// mean, wmr or cr.
    #[arg(long)]
    pub readout: Option<Readout>,
    /// mlp or lbm.
    #[arg(long)]
    pub matcher: Option<Matcher>,
    #[arg(long)]
    pub matcher_hidden: Option<usize>,
    #[arg(long)]
    pub dropout: Option<f64>,
    /// Negatives per training instance.
    #[arg(long)]
    pub negatives: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Early-stopping patience in epochs.
    #[arg(long)]
    pub patience: Option<usize>,
    /// infonce or bce.
    #[arg(long)]
    pub loss: Option<Loss>,
    #[arg(long)]
    pub max_siblings: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

impl ConfigArgs {
    /// The config file (or defaults) with every given flag applied.
    pub fn resolve(&self) -> Result<RunConfig, Failure> {
        let mut c = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        let m = &mut c.model;
        if let Some(a) = self.arch {
            *m = m.clone().with_arch(a);
        }
        if let Some(h) = &self.heads {
            m.heads = h.clone();
        }
        if let Some(h) = &self.hidden {
            m.hidden = h.clone();
        }
        if let Some(p) = self.position_dim {
            m.position_dim = p;
        }
        if let Some(r) = self.readout {
            m.readout = r;
        }
        if let Some(x) = self.matcher {
            m.matcher = x;
        }
        if let Some(h) = self.matcher_hidden {
            m.matcher_hidden = h;
        }
        if let Some(d) = self.dropout {
            m.dropout = d;
        }
        let t = &mut c.train;
        if let Some(n) = self.negatives {
            t.negatives = n;
        }
        if let Some(b) = self.batch_size {
            t.batch_size = b;
        }
        if let Some(lr) = self.lr {
            t.learning_rate = lr;
        }
        if let Some(e) = self.epochs {
            t.max_epochs = e;
        }
        if let Some(p) = self.patience {
            t.early_stop_patience = p;
        }
        if let Some(l) = self.loss {
            t.loss = l;
        }
        if let Some(s) = self.max_siblings {
            t.max_siblings = s;
        }
        if let Some(s) = self.seed {
            t.seed = s;
            c.clean.seed = s;
        }
        c.validate()?;
        Ok(c)
    }
}
