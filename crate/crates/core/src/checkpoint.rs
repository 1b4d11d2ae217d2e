//! JSON checkpoints: model configuration, named parameters and, optionally,
//! the full training state needed to resume.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::train::{TrainConfig, TrainingState};

const FORMAT: &str = "taxo-expand-checkpoint";
const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    /// The parameters to use for inference (the best epoch).
    pub params: ModelParams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train_config: Option<TrainConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub training: Option<TrainingState>,
}

impl Checkpoint {
    pub fn new(params: ModelParams) -> Self {
        Checkpoint {
            format: FORMAT.into(),
            version: VERSION,
            params,
            train_config: None,
            training: None,
        }
    }

    pub fn with_training(mut self, config: TrainConfig, state: TrainingState) -> Self {
        self.train_config = Some(config);
        self.training = Some(state);
        self
    }

    /// Checks the header and every tensor shape against its configuration.
    pub fn validate(&self) -> Result<()> {
        if self.format != FORMAT {
            return Err(Error::Checkpoint(format!("unknown format {:?}", self.format)));
        }
        if self.version != VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {}", self.version)));
        }
        self.params.validate()?;
        if let Some(state) = &self.training {
            for p in [&state.params, &state.best_params] {
                p.validate()?;
                if p.config != self.params.config || p.input_dim != self.params.input_dim {
                    return Err(Error::Checkpoint("training state disagrees with model configuration".into()));
                }
            }
        }
        Ok(())
    }

    pub fn write_to(&self, w: impl Write) -> Result<()> {
        let mut w = BufWriter::new(w);
        serde_json::to_writer(&mut w, self).map_err(|e| Error::Checkpoint(e.to_string()))?;
        w.write_all(b"\n")
            .and_then(|_| w.flush())
            .map_err(|e| Error::Checkpoint(e.to_string()))
    }

    pub fn read_from(r: impl Read) -> Result<Self> {
        let c: Checkpoint = serde_json::from_reader(BufReader::new(r)).map_err(|e| Error::Checkpoint(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        if !self.params.is_finite() {
            return Err(Error::Checkpoint("refusing to save non-finite parameters".into()));
        }
        let path = path.as_ref();
        self.write_to(File::create(path).map_err(|e| Error::io(path, e))?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::read_from(File::open(path).map_err(|e| Error::io(path, e))?)
    }
}
