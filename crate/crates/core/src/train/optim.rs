use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::diff::Matrix;
use crate::error::{Error, Result};
use crate::model::ModelParams;

/// Adam with bias-corrected moment estimates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    first: BTreeMap<String, Matrix>,
    second: BTreeMap<String, Matrix>,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            first: BTreeMap::new(),
            second: BTreeMap::new(),
        }
    }

    /// Applies one update. Parameters without a gradient are left untouched
    /// and their moments are not advanced.
    pub fn update(&mut self, params: &mut ModelParams, grads: &BTreeMap<String, Matrix>) -> Result<()> {
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for (name, g) in grads {
            let p = params.get_mut(name)?;
            if p.shape() != g.shape() {
                return Err(Error::Shape {
                    op: "adam",
                    lhs: p.shape(),
                    rhs: g.shape(),
                });
            }
            let m = self
                .first
                .entry(name.clone())
                .or_insert_with(|| Matrix::zeros(g.rows(), g.cols()));
            let v = self
                .second
                .entry(name.clone())
                .or_insert_with(|| Matrix::zeros(g.rows(), g.cols()));
            for (((pi, mi), vi), gi) in p
                .as_mut_slice()
                .iter_mut()
                .zip(m.as_mut_slice())
                .zip(v.as_mut_slice())
                .zip(g.as_slice())
            {
                *mi = self.beta1 * *mi + (1.0 - self.beta1) * gi;
                *vi = self.beta2 * *vi + (1.0 - self.beta2) * gi * gi;
                let mhat = *mi / c1;
                let vhat = *vi / c2;
                *pi -= self.lr * mhat / (vhat.sqrt() + self.eps);
            }
        }
        Ok(())
    }

    /// First and second moment accumulators by parameter name.
    pub fn moments(&self, name: &str) -> Option<(&Matrix, &Matrix)> {
        self.first.get(name).zip(self.second.get(name))
    }
}

/// Multiplies the learning rate by `factor` once the monitored value has
/// failed to improve for more than `patience` consecutive epochs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReduceLrOnPlateau {
    pub factor: f64,
    pub patience: usize,
    /// Relative improvement required over the best value.
    pub threshold: f64,
    pub best: Option<f64>,
    pub bad_epochs: usize,
}

impl ReduceLrOnPlateau {
    pub fn new(factor: f64, patience: usize) -> Self {
        ReduceLrOnPlateau {
            factor,
            patience,
            threshold: 1e-4,
            best: None,
            bad_epochs: 0,
        }
    }

    /// Records a value to maximise and returns the learning rate to use next.
    pub fn observe(&mut self, value: f64, lr: f64) -> f64 {
        let improved = match self.best {
            None => true,
            Some(best) => value > best + best.abs() * self.threshold,
        };
        if improved {
            self.best = Some(value);
            self.bad_epochs = 0;
            return lr;
        }
        self.bad_epochs += 1;
        if self.bad_epochs > self.patience {
            self.bad_epochs = 0;
            lr * self.factor
        } else {
            lr
        }
    }
}
