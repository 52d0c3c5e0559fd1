use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::io::write_atomic;

use super::{AgpError, ModelDims, StagedParams};

pub const CHECKPOINT_FORMAT: &str = "camodet-agp/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointBlock {
    pub name: String,
    /// `[rows, cols]`; biases are `[n, 1]`.
    pub shape: [usize; 2],
    pub data: Vec<f64>,
}

/// JSON form of [`StagedParams`]: a shape header plus one entry per block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub dims: ModelDims,
    pub blocks: Vec<CheckpointBlock>,
}

impl Checkpoint {
    pub fn from_params(params: &StagedParams) -> Self {
        Self {
            format: CHECKPOINT_FORMAT.to_string(),
            dims: params.dims,
            blocks: params
                .blocks()
                .iter()
                .map(|b| CheckpointBlock {
                    name: b.name.to_string(),
                    shape: [b.shape.0, b.shape.1],
                    data: b.data.to_vec(),
                })
                .collect(),
        }
    }

    pub fn into_params(self) -> Result<StagedParams, AgpError> {
        if self.format != CHECKPOINT_FORMAT {
            return Err(AgpError::Checkpoint(format!(
                "format {:?}, expected {CHECKPOINT_FORMAT:?}",
                self.format
            )));
        }
        let mut params = StagedParams::zeros(self.dims);
        let expected: Vec<(&str, (usize, usize))> =
            params.blocks().iter().map(|b| (b.name, b.shape)).collect();
        if self.blocks.len() != expected.len() {
            return Err(AgpError::Checkpoint(format!(
                "{} blocks, expected {}",
                self.blocks.len(),
                expected.len()
            )));
        }
        for ((name, shape), (dst, src)) in expected
            .into_iter()
            .zip(params.blocks_mut().into_iter().zip(&self.blocks))
        {
            if src.name != name || src.shape != [shape.0, shape.1] {
                return Err(AgpError::Checkpoint(format!(
                    "block {:?} {:?} does not match {name:?} {:?}",
                    src.name,
                    src.shape,
                    [shape.0, shape.1]
                )));
            }
            if src.data.len() != dst.data.len() {
                return Err(AgpError::Checkpoint(format!(
                    "block {name:?} has {} values, expected {}",
                    src.data.len(),
                    dst.data.len()
                )));
            }
            dst.data.copy_from_slice(&src.data);
        }
        if !params.is_finite() {
            return Err(AgpError::Checkpoint("non-finite parameter".into()));
        }
        Ok(params)
    }
}

pub fn write_checkpoint(params: &StagedParams, path: &Path) -> Result<(), AgpError> {
    let bytes = serde_json::to_vec(&Checkpoint::from_params(params))?;
    write_atomic(path, &bytes)?;
    Ok(())
}

pub fn read_checkpoint(path: &Path) -> Result<StagedParams, AgpError> {
    let bytes = std::fs::read(path)?;
    serde_json::from_slice::<Checkpoint>(&bytes)?.into_params()
}
