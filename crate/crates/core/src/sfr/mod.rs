//! Crop-and-mosaic augmentation.
//!
//! Every usable labeled box is cropped and resized to a fixed patch
//! (200x200 by default). Patches are shuffled, consumed in pools (16 by
//! default) and each pool is laid out on `g x g` grids of a fixed-size black
//! canvas, once per requested `g`. Each placed patch gets a new label equal
//! to its cell rectangle. The online variant does this per training batch
//! and keeps the pseudo-images in memory; the offline variant runs over the
//! train split of a whole dataset and writes the result to disk. Both share
//! one assembly path, so the same crops and seed give the same canvases.

mod crop;
mod grid;
mod mosaic;
mod offline;
mod online;

use std::collections::HashMap;
use std::path::PathBuf;

use image::RgbImage;
use thiserror::Error;

use crate::dataset::{DatasetError, Sample};
use crate::geometry::BBox;

pub use crop::{collect_crops, crop_region, resample_nearest, CropPatch, CropSource};
pub use grid::{partition_pool, GridSpec, PoolPartition};
pub use mosaic::{assemble_canvas, build_canvases, canvas_rng, MosaicCanvas, PoolCanvas};
pub use offline::{
    generate_offline, write_offline, Manifest, ManifestCanvas, ManifestCell, OfflineOutput,
};
pub use online::{augment_batch_online, OnlineBatch};

pub const DEFAULT_CROP_SIZE: u32 = 200;
pub const DEFAULT_CANVAS_SIZE: u32 = 800;
pub const DEFAULT_POOL_SIZE: usize = 16;
pub const DEFAULT_GRIDS: [u32; 3] = [2, 3, 4];
/// Boxes narrower or shorter than this (in pixels) are skipped.
pub const MIN_BOX_SIDE: u32 = 2;

#[derive(Debug, Error)]
pub enum SfrError {
    #[error("box {bbox:?} exceeds image bounds {width}x{height}")]
    OutOfBounds {
        bbox: [f64; 4],
        width: u32,
        height: u32,
    },
    #[error("{crops} crops do not fit a {g}x{g} grid")]
    TooManyCrops { crops: usize, g: u32 },
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("no usable boxes after minimum-size filtering")]
    EmptyPool,
    #[error("missing image for sample {0}")]
    MissingImage(u64),
    #[error("image {image_id} is {actual:?}, annotations say {expected:?}")]
    SizeMismatch {
        image_id: u64,
        expected: (u32, u32),
        actual: (u32, u32),
    },
    #[error("image error on {path}: {message}")]
    Image { path: String, message: String },
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("output directory {0} exists and is not a previous mosaic output")]
    OutputExists(String),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
}

impl SfrError {
    pub fn code(&self) -> &'static str {
        match self {
            SfrError::OutOfBounds { .. } => "out_of_bounds",
            SfrError::TooManyCrops { .. } => "too_many_crops",
            SfrError::InvalidGrid(_) => "invalid_grid",
            SfrError::InvalidConfig(_) => "invalid_config",
            SfrError::EmptyPool => "empty_pool",
            SfrError::MissingImage(_) => "missing_image",
            SfrError::SizeMismatch { .. } => "size_mismatch",
            SfrError::Image { .. } => "image",
            SfrError::Io { .. } => "io",
            SfrError::OutputExists(_) => "output_exists",
            SfrError::Dataset(e) => e.code(),
        }
    }
}

/// Crop, grid and pooling parameters shared by the online and offline modes.
#[derive(Debug, Clone, PartialEq)]
pub struct SfrConfig {
    pub grids: Vec<u32>,
    pub pool_size: usize,
    pub crop_width: u32,
    pub crop_height: u32,
    pub canvas_size: u32,
}

impl Default for SfrConfig {
    fn default() -> Self {
        Self {
            grids: DEFAULT_GRIDS.to_vec(),
            pool_size: DEFAULT_POOL_SIZE,
            crop_width: DEFAULT_CROP_SIZE,
            crop_height: DEFAULT_CROP_SIZE,
            canvas_size: DEFAULT_CANVAS_SIZE,
        }
    }
}

impl SfrConfig {
    pub fn grid_specs(&self) -> Result<Vec<GridSpec>, SfrError> {
        if self.grids.is_empty() {
            return Err(SfrError::InvalidConfig(
                "at least one grid is required".into(),
            ));
        }
        if self.pool_size == 0 {
            return Err(SfrError::InvalidConfig("pool size must be positive".into()));
        }
        if self.crop_width == 0 || self.crop_height == 0 {
            return Err(SfrError::InvalidConfig("crop size must be positive".into()));
        }
        self.grids
            .iter()
            .map(|&g| GridSpec::new(g, self.canvas_size))
            .collect()
    }
}

/// Supplies decoded RGB pixels for dataset samples.
pub trait ImageSource: Sync {
    fn load(&self, sample: &Sample) -> Result<RgbImage, SfrError>;
}

/// Reads `sample.image_path` relative to a root directory.
#[derive(Debug, Clone)]
pub struct DirImageSource {
    pub root: PathBuf,
}

impl DirImageSource {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }
}

impl ImageSource for DirImageSource {
    fn load(&self, sample: &Sample) -> Result<RgbImage, SfrError> {
        let path = self.root.join(&sample.image_path);
        let img = image::open(&path)
            .map_err(|e| SfrError::Image {
                path: path.display().to_string(),
                message: e.to_string(),
            })?
            .to_rgb8();
        check_dimensions(sample, &img)?;
        Ok(img)
    }
}

impl ImageSource for HashMap<u64, RgbImage> {
    fn load(&self, sample: &Sample) -> Result<RgbImage, SfrError> {
        let img = self
            .get(&sample.image_id)
            .ok_or(SfrError::MissingImage(sample.image_id))?;
        check_dimensions(sample, img)?;
        Ok(img.clone())
    }
}

fn check_dimensions(sample: &Sample, img: &RgbImage) -> Result<(), SfrError> {
    if img.dimensions() != (sample.width, sample.height) {
        return Err(SfrError::SizeMismatch {
            image_id: sample.image_id,
            expected: (sample.width, sample.height),
            actual: img.dimensions(),
        });
    }
    Ok(())
}

/// Integer pixel footprint of a continuous box: `[x0, x1) x [y0, y1)`.
pub(crate) fn pixel_region(b: &BBox) -> (u32, u32, u32, u32) {
    (
        b.x_min().floor() as u32,
        b.y_min().floor() as u32,
        b.x_max().ceil() as u32,
        b.y_max().ceil() as u32,
    )
}
