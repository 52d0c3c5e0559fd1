use serde::{Deserialize, Serialize};

use crate::geometry::BBox;

use super::SfrError;

/// `g x g` layout on an `S x S` canvas with square cells of `floor(S / g)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridSpec {
    g: u32,
    canvas_size: u32,
}

impl GridSpec {
    pub fn new(g: u32, canvas_size: u32) -> Result<Self, SfrError> {
        if g < 2 {
            return Err(SfrError::InvalidGrid(format!(
                "grid dimension {g} must be at least 2"
            )));
        }
        if canvas_size < g {
            return Err(SfrError::InvalidGrid(format!(
                "canvas size {canvas_size} is smaller than grid dimension {g}"
            )));
        }
        Ok(Self { g, canvas_size })
    }

    pub fn g(&self) -> u32 {
        self.g
    }

    pub fn canvas_size(&self) -> u32 {
        self.canvas_size
    }

    pub fn cell_size(&self) -> u32 {
        self.canvas_size / self.g
    }

    pub fn cells(&self) -> usize {
        (self.g * self.g) as usize
    }

    /// Rectangle of row-major cell `index`.
    pub fn cell_rect(&self, index: usize) -> BBox {
        let (r, c) = (index as u32 / self.g, index as u32 % self.g);
        let s = self.cell_size() as f64;
        let (x, y) = (c as f64 * s, r as f64 * s);
        BBox::new(x, y, x + s, y + s).expect("cell size is at least one pixel")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct PoolPartition {
    pub canvases: usize,
    pub black_cells: usize,
}

/// How many `g x g` canvases a pool of `n_boxes` fills, and how many cells
/// stay black.
pub fn partition_pool(n_boxes: usize, g: u32) -> Result<PoolPartition, SfrError> {
    if n_boxes == 0 {
        return Err(SfrError::EmptyPool);
    }
    if g < 2 {
        return Err(SfrError::InvalidGrid(format!(
            "grid dimension {g} must be at least 2"
        )));
    }
    let per = (g * g) as usize;
    let canvases = n_boxes.div_ceil(per);
    Ok(PoolPartition {
        canvases,
        black_cells: canvases * per - n_boxes,
    })
}
