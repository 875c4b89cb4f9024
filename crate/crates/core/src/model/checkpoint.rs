use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ForecastModel, OptimizerState};
use crate::error::{Error, Result};

const FORMAT: &str = "ondat-checkpoint";
const VERSION: u32 = 1;

/// Self-describing JSON snapshot of a model and its optimiser. Floats are
/// written in shortest round-trip form, so reloading is bit-exact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub model: ForecastModel,
    pub optimizer: OptimizerState,
    pub step: u64,
    pub validation_smape: Option<f64>,
}

impl Checkpoint {
    pub fn new(model: ForecastModel, optimizer: OptimizerState, step: u64, validation_smape: Option<f64>) -> Self {
        Self {
            format: FORMAT.into(),
            version: VERSION,
            model,
            optimizer,
            step,
            validation_smape,
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        serde_json::to_writer(&mut w, self)?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let ck: Checkpoint = serde_json::from_reader(BufReader::new(file))?;
        if ck.format != FORMAT {
            return Err(Error::Checkpoint(format!("unknown format {:?}", ck.format)));
        }
        if ck.version != VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {}", ck.version)));
        }
        ck.model.config.validate()?;
        Ok(ck)
    }
}
