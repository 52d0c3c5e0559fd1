use image::RgbImage;
use log::warn;

use crate::dataset::{Sample, Split};

use super::{build_canvases, collect_crops, ImageSource, PoolCanvas, SfrConfig, SfrError};

/// A training batch extended with in-memory mosaic pseudo-samples.
#[derive(Debug, Clone, PartialEq)]
pub struct OnlineBatch {
    /// The original samples followed by one pseudo-sample per canvas.
    pub samples: Vec<Sample>,
    pub canvases: Vec<PoolCanvas>,
    /// Image id of the first pseudo-sample.
    pub first_pseudo_id: u64,
}

impl OnlineBatch {
    pub fn originals(&self) -> &[Sample] {
        &self.samples[..self.samples.len() - self.canvases.len()]
    }

    pub fn pseudo_samples(&self) -> &[Sample] {
        &self.samples[self.samples.len() - self.canvases.len()..]
    }

    /// Pixels of a pseudo-sample, `None` for original samples.
    pub fn pseudo_image(&self, image_id: u64) -> Option<&RgbImage> {
        let idx = image_id.checked_sub(self.first_pseudo_id)? as usize;
        self.canvases.get(idx).map(|c| &c.canvas.pixels)
    }
}

/// Mosaics every usable box of `batch` and appends the pseudo-samples to it.
///
/// Uses the same crop order, shuffle and per-canvas streams as
/// [`super::generate_offline`], so a batch holding the same boxes as a
/// dataset's train split yields identical canvases for the same seed.
/// Pseudo-sample ids continue after the largest id in the batch.
pub fn augment_batch_online(
    batch: &[Sample],
    images: &dyn ImageSource,
    cfg: &SfrConfig,
    seed: u64,
) -> Result<OnlineBatch, SfrError> {
    if batch.is_empty() {
        return Err(SfrError::InvalidConfig("batch must not be empty".into()));
    }
    let grids = cfg.grid_specs()?;
    let first_pseudo_id = batch.iter().map(|s| s.image_id).max().unwrap_or(0) + 1;
    let crops = collect_crops(batch, images, cfg)?;
    if crops.is_empty() {
        warn!("batch has no usable boxes; mosaic augmentation skipped");
        return Ok(OnlineBatch {
            samples: batch.to_vec(),
            canvases: Vec::new(),
            first_pseudo_id,
        });
    }
    let canvases = build_canvases(&crops, &grids, cfg.pool_size, seed)?;
    let mut samples = batch.to_vec();
    samples.extend(canvases.iter().map(|c| Sample {
        image_id: first_pseudo_id + c.canvas_index as u64,
        image_path: format!("mosaic://{}", c.canvas_index),
        width: cfg.canvas_size,
        height: cfg.canvas_size,
        labels: c.canvas.labels.clone(),
        split: Split::Train,
    }));
    Ok(OnlineBatch {
        samples,
        canvases,
        first_pseudo_id,
    })
}
