use std::io::Cursor;
use std::path::Path;

use image::ImageFormat;
use serde::{Deserialize, Serialize};

use crate::dataset::{AnnotationFile, DetectionDataset, Sample, Split};

use super::{build_canvases, collect_crops, ImageSource, PoolCanvas, SfrConfig, SfrError};

/// Record of how an offline run was produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub seed: u64,
    pub grids: Vec<u32>,
    pub pool_size: usize,
    pub crop_size: [u32; 2],
    pub canvas_size: u32,
    pub usable_boxes: usize,
    pub canvases: Vec<ManifestCanvas>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestCanvas {
    pub image_id: u64,
    pub file_name: String,
    pub pool_index: usize,
    pub grid: u32,
    pub cell_size: u32,
    /// Row-major; `null` marks a black cell.
    pub cells: Vec<Option<ManifestCell>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestCell {
    pub source_image_id: u64,
    pub label_index: usize,
    /// `[x, y, width, height]` in the source image.
    pub source_bbox: [f64; 4],
    pub category_id: u32,
}

/// In-memory result of an offline run.
#[derive(Debug, Clone, PartialEq)]
pub struct OfflineOutput {
    /// Pseudo-images as a dataset; image ids start at 1.
    pub dataset: DetectionDataset,
    pub canvases: Vec<PoolCanvas>,
    pub manifest: Manifest,
}

fn file_name(canvas_index: usize) -> String {
    format!("images/canvas_{canvas_index:06}.png")
}

/// Builds mosaic pseudo-images from every usable box of the train split.
pub fn generate_offline(
    dataset: &DetectionDataset,
    images: &dyn ImageSource,
    cfg: &SfrConfig,
    seed: u64,
) -> Result<OfflineOutput, SfrError> {
    let grids = cfg.grid_specs()?;
    let train = dataset.samples.iter().filter(|s| s.split == Split::Train);
    let crops = collect_crops(train, images, cfg)?;
    let canvases = build_canvases(&crops, &grids, cfg.pool_size, seed)?;

    let samples = canvases
        .iter()
        .map(|c| Sample {
            image_id: c.canvas_index as u64 + 1,
            image_path: file_name(c.canvas_index),
            width: cfg.canvas_size,
            height: cfg.canvas_size,
            labels: c.canvas.labels.clone(),
            split: Split::Train,
        })
        .collect();
    let manifest = Manifest {
        seed,
        grids: cfg.grids.clone(),
        pool_size: cfg.pool_size,
        crop_size: [cfg.crop_width, cfg.crop_height],
        canvas_size: cfg.canvas_size,
        usable_boxes: crops.len(),
        canvases: canvases
            .iter()
            .map(|c| ManifestCanvas {
                image_id: c.canvas_index as u64 + 1,
                file_name: file_name(c.canvas_index),
                pool_index: c.pool_index,
                grid: c.canvas.grid.g(),
                cell_size: c.canvas.grid.cell_size(),
                cells: c
                    .canvas
                    .cells
                    .iter()
                    .map(|cell| {
                        cell.map(|s| ManifestCell {
                            source_image_id: s.image_id,
                            label_index: s.label_index,
                            source_bbox: s.source_box.to_xywh(),
                            category_id: s.category_id,
                        })
                    })
                    .collect(),
            })
            .collect(),
    };
    Ok(OfflineOutput {
        dataset: DetectionDataset {
            categories: dataset.categories.clone(),
            samples,
        },
        canvases,
        manifest,
    })
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> SfrError + '_ {
    move |source| SfrError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Writes `images/*.png`, `annotations.json` and `manifest.json` under `out`.
///
/// Everything is staged in a hidden sibling directory and renamed into place
/// at the end. An existing `out` is replaced only when it is empty or holds
/// a previous run (has a `manifest.json`).
pub fn write_offline(output: &OfflineOutput, out: &Path) -> Result<(), SfrError> {
    let parent = match out.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(parent).map_err(io_err(parent))?;
    if out.exists() {
        let replaceable = out.join("manifest.json").is_file()
            || std::fs::read_dir(out)
                .map_err(io_err(out))?
                .next()
                .is_none();
        if !replaceable {
            return Err(SfrError::OutputExists(out.display().to_string()));
        }
    }
    let staging = tempfile::Builder::new()
        .prefix(".mosaic-")
        .tempdir_in(parent)
        .map_err(io_err(parent))?;
    let images_dir = staging.path().join("images");
    std::fs::create_dir(&images_dir).map_err(io_err(&images_dir))?;
    for (canvas, sample) in output.canvases.iter().zip(&output.dataset.samples) {
        let path = staging.path().join(&sample.image_path);
        let mut buf = Cursor::new(Vec::new());
        canvas
            .canvas
            .pixels
            .write_to(&mut buf, ImageFormat::Png)
            .map_err(|e| SfrError::Image {
                path: path.display().to_string(),
                message: e.to_string(),
            })?;
        std::fs::write(&path, buf.into_inner()).map_err(io_err(&path))?;
    }
    let ann_path = staging.path().join("annotations.json");
    let ann = serde_json::to_vec_pretty(&AnnotationFile::from_dataset(&output.dataset))
        .expect("annotation model serializes");
    std::fs::write(&ann_path, ann).map_err(io_err(&ann_path))?;
    let manifest_path = staging.path().join("manifest.json");
    let manifest = serde_json::to_vec_pretty(&output.manifest).expect("manifest serializes");
    std::fs::write(&manifest_path, manifest).map_err(io_err(&manifest_path))?;

    if out.exists() {
        std::fs::remove_dir_all(out).map_err(io_err(out))?;
    }
    let staged = staging.keep();
    std::fs::rename(&staged, out).map_err(io_err(out))?;
    Ok(())
}
