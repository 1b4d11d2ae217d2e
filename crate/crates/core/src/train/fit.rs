use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::loss::{bce_on_tape, infonce_on_tape};
use super::optim::{Adam, ReduceLrOnPlateau};
use super::sampling::{generate_instances, TrainInstance};
use super::{Loss, TrainConfig};
use crate::diff::{Matrix, Tape};
use crate::egonet::batch_for_anchors;
use crate::error::{Error, Result};
use crate::infer::{rank_queries, AnchorCache};
use crate::metrics::MetricsReport;
use crate::model::{encode_anchors, log_score, match_logits, Bound, ModelConfig, ModelParams};
use crate::rng::SeedStream;
use crate::split::TaxonomySplit;
use crate::taxonomy::{ConceptId, Taxonomy};

/// One line of the training log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    #[serde(rename = "val_MR")]
    pub val_mr: Option<f64>,
    #[serde(rename = "val_Hit@1")]
    pub val_hit_at_1: Option<f64>,
    #[serde(rename = "val_Hit@3")]
    pub val_hit_at_3: Option<f64>,
    #[serde(rename = "val_MRR")]
    pub val_mrr: Option<f64>,
    /// Learning rate used during this epoch.
    pub lr: f64,
}

/// Parameters plus optimizer: performs gradient steps on instance batches.
#[derive(Clone, Debug)]
pub struct Trainer {
    pub params: ModelParams,
    pub optimizer: Adam,
    pub config: TrainConfig,
}

impl Trainer {
    pub fn new(params: ModelParams, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        Ok(Trainer {
            optimizer: Adam::new(config.learning_rate),
            params,
            config,
        })
    }

    /// Mean loss over `instances` and its gradient for every parameter.
    /// Each distinct anchor is encoded once; `dropout` seeds the feature
    /// dropout masks, `None` disables dropout.
    pub fn loss_and_gradients(
        &self,
        t: &Taxonomy,
        instances: &[TrainInstance],
        dropout: Option<SeedStream>,
    ) -> Result<(f64, BTreeMap<String, Matrix>)> {
        if instances.is_empty() {
            return Err(Error::InvalidArgument("empty instance batch".into()));
        }
        let mut unique: Vec<ConceptId> = Vec::new();
        let mut row_of: HashMap<ConceptId, usize> = HashMap::new();
        let mut pair_rows = Vec::new();
        let mut groups = Vec::new();
        let mut positives = Vec::new();
        let mut labels = Vec::new();
        let mut query_rows: Vec<f64> = Vec::new();
        for (g, inst) in instances.iter().enumerate() {
            let q = t.embedding(inst.query)?;
            positives.push(pair_rows.len());
            for (j, a) in inst.anchors().enumerate() {
                let r = *row_of.entry(a).or_insert_with(|| {
                    unique.push(a);
                    unique.len() - 1
                });
                pair_rows.push(r);
                groups.push(g);
                labels.push(j == 0);
                query_rows.extend_from_slice(q);
            }
        }
        let batch = batch_for_anchors(t, &unique, &self.config.egonet_options())?;
        let mc = &self.params.config;

        let mut tape = Tape::new();
        let bound = Bound::trainable(&mut tape, &self.params);
        let mut rng = dropout.map(|s| s.rng());
        let reps = encode_anchors(&mut tape, mc, &bound, &batch, rng.as_mut())?;
        let anchors = tape.gather_rows(reps, pair_rows)?;
        let queries = tape.constant(Matrix::from_vec(labels.len(), t.dimension(), query_rows)?);
        let logits = match_logits(&mut tape, mc, &bound, anchors, queries)?;
        let loss = match self.config.loss {
            Loss::InfoNce => {
                let ls = log_score(&mut tape, mc.matcher, logits);
                infonce_on_tape(&mut tape, ls, groups, positives)?
            }
            Loss::Bce => bce_on_tape(&mut tape, logits, &labels)?,
        };
        let grads = tape.backward(loss)?;
        let out = bound
            .iter()
            .map(|(name, v)| {
                let g = match grads.get(v) {
                    Some(g) => g.clone(),
                    None => {
                        let (r, c) = tape.shape(v);
                        Matrix::zeros(r, c)
                    }
                };
                (name.to_string(), g)
            })
            .collect();
        Ok((tape.value(loss).item(), out))
    }

    /// One Adam update on `instances`; returns the loss before the update.
    /// Non-finite losses or gradients leave the parameters untouched.
    pub fn step(&mut self, t: &Taxonomy, instances: &[TrainInstance], dropout: Option<SeedStream>) -> Result<f64> {
        let (loss, grads) = self.loss_and_gradients(t, instances, dropout)?;
        if loss.is_finite() && grads.values().all(Matrix::is_finite) {
            self.optimizer.update(&mut self.params, &grads)?;
        }
        Ok(loss)
    }
}

/// Everything needed to continue training where it stopped.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingState {
    /// Last completed epoch (0 before training).
    pub epoch: usize,
    pub params: ModelParams,
    pub optimizer: Adam,
    pub scheduler: ReduceLrOnPlateau,
    /// Best monitored value so far: validation MRR, or the negated training
    /// loss when there are no validation queries.
    pub best_metric: Option<f64>,
    pub best_params: ModelParams,
    /// Epochs since the monitored value last improved.
    pub stale_epochs: usize,
}

impl TrainingState {
    pub fn new(model: &ModelConfig, input_dim: usize, config: &TrainConfig) -> Result<Self> {
        config.validate()?;
        let params = ModelParams::init(model, input_dim, config.seed)?;
        Ok(TrainingState {
            epoch: 0,
            best_params: params.clone(),
            params,
            optimizer: Adam::new(config.learning_rate),
            scheduler: ReduceLrOnPlateau::new(config.lr_factor, config.scheduler_patience),
            best_metric: None,
            stale_epochs: 0,
        })
    }
}

#[derive(Clone, Debug)]
pub struct Fit {
    /// Parameters of the best epoch.
    pub best: ModelParams,
    pub state: TrainingState,
    /// Epochs run by this call.
    pub log: Vec<EpochLog>,
}

/// Trains from scratch on `split.existing`, selecting the epoch with the best
/// validation MRR.
pub fn fit(split: &TaxonomySplit, model: &ModelConfig, config: &TrainConfig) -> Result<Fit> {
    let state = TrainingState::new(model, split.existing.dimension(), config)?;
    fit_with(split, config, state, |_| Ok(()))
}

/// Continues training from `state` until `config.max_epochs` or early
/// stopping, calling `on_epoch` after every epoch.
pub fn fit_with(
    split: &TaxonomySplit,
    config: &TrainConfig,
    state: TrainingState,
    mut on_epoch: impl FnMut(&EpochLog) -> Result<()>,
) -> Result<Fit> {
    config.validate()?;
    let t = &split.existing;
    if t.edge_count() == 0 {
        return Err(Error::InvalidArgument("existing taxonomy has no edges to train on".into()));
    }
    let TrainingState {
        epoch: start,
        params,
        optimizer,
        mut scheduler,
        mut best_metric,
        mut best_params,
        mut stale_epochs,
    } = state;
    let mut trainer = Trainer {
        params,
        optimizer,
        config: config.clone(),
    };
    let root = SeedStream::new(config.seed).split_str("epoch");
    let opts = config.egonet_options();
    let mut log = Vec::new();
    let mut last = start;
    for epoch in start + 1..=config.max_epochs {
        if stale_epochs >= config.early_stop_patience {
            break;
        }
        let stream = root.split(epoch as u64);
        let instances = generate_instances(t, config.negatives, stream.split_str("instances"))?;
        let lr = trainer.optimizer.lr;
        let mut total = 0.0;
        for (b, chunk) in instances.chunks(config.batch_size).enumerate() {
            let loss = trainer.step(t, chunk, Some(stream.split_str("dropout").split(b as u64)))?;
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch, batch: b });
            }
            total += loss * chunk.len() as f64;
        }
        if !trainer.params.is_finite() {
            return Err(Error::Diverged {
                epoch,
                batch: instances.len().div_ceil(config.batch_size),
            });
        }
        let train_loss = total / instances.len() as f64;

        let report = if split.validation.is_empty() {
            None
        } else {
            let cache = AnchorCache::build(t, &trainer.params, &opts)?;
            Some(MetricsReport::from_results(&rank_queries(&split.validation, &cache, &trainer.params)?)?)
        };
        let monitored = report.as_ref().map_or(-train_loss, |r| r.mrr);
        trainer.optimizer.lr = scheduler.observe(monitored, lr);
        if best_metric.is_none_or(|b| monitored > b) {
            best_metric = Some(monitored);
            best_params = trainer.params.clone();
            stale_epochs = 0;
        } else {
            stale_epochs += 1;
        }

        let entry = EpochLog {
            epoch,
            train_loss,
            val_mr: report.as_ref().map(|r| r.mr),
            val_hit_at_1: report.as_ref().map(|r| r.hit_at_1),
            val_hit_at_3: report.as_ref().map(|r| r.hit_at_3),
            val_mrr: report.as_ref().map(|r| r.mrr),
            lr,
        };
        on_epoch(&entry)?;
        log.push(entry);
        last = epoch;
    }
    Ok(Fit {
        best: best_params.clone(),
        state: TrainingState {
            epoch: last,
            params: trainer.params,
            optimizer: trainer.optimizer,
            scheduler,
            best_metric,
            best_params,
            stale_epochs,
        },
        log,
    })
}
