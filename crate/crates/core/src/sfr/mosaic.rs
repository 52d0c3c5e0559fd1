use std::borrow::Borrow;

use image::{GenericImage, RgbImage};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::dataset::LabeledBox;

use super::crop::resample_nearest;
use super::{CropPatch, CropSource, GridSpec, SfrError};

/// An assembled pseudo-image.
#[derive(Debug, Clone, PartialEq)]
pub struct MosaicCanvas {
    pub pixels: RgbImage,
    /// One label per occupied cell, in row-major cell order.
    pub labels: Vec<LabeledBox>,
    pub grid: GridSpec,
    /// Row-major cell contents; `None` is a black cell.
    pub cells: Vec<Option<CropSource>>,
}

impl MosaicCanvas {
    pub fn black_cells(&self) -> usize {
        self.cells.iter().filter(|c| c.is_none()).count()
    }
}

/// Places up to `g^2` crops on a black canvas at uniformly random cells.
///
/// Crop `i` lands on cell `perm[i]` of a random permutation of the cells, is
/// resampled to the cell size and labeled with the cell rectangle.
pub fn assemble_canvas<C: Borrow<CropPatch>, R: Rng + ?Sized>(
    crops: &[C],
    grid: GridSpec,
    rng: &mut R,
) -> Result<MosaicCanvas, SfrError> {
    let n_cells = grid.cells();
    if crops.is_empty() {
        return Err(SfrError::EmptyPool);
    }
    if crops.len() > n_cells {
        return Err(SfrError::TooManyCrops {
            crops: crops.len(),
            g: grid.g(),
        });
    }
    let mut order: Vec<usize> = (0..n_cells).collect();
    order.shuffle(rng);

    let size = grid.canvas_size();
    let cell = grid.cell_size();
    let mut pixels = RgbImage::new(size, size);
    let mut cells: Vec<Option<CropSource>> = vec![None; n_cells];
    for (crop, &slot) in crops.iter().zip(&order) {
        let crop = crop.borrow();
        let patch = resample_nearest(&crop.pixels, cell, cell);
        let (r, c) = (slot as u32 / grid.g(), slot as u32 % grid.g());
        pixels
            .copy_from(&patch, c * cell, r * cell)
            .expect("cell lies inside the canvas");
        cells[slot] = Some(crop.source);
    }
    let labels = cells
        .iter()
        .enumerate()
        .filter_map(|(i, c)| {
            c.map(|src| LabeledBox {
                bbox: grid.cell_rect(i),
                category_id: src.category_id,
                review: false,
            })
        })
        .collect();
    Ok(MosaicCanvas {
        pixels,
        labels,
        grid,
        cells,
    })
}

/// A canvas plus its position in the generation order.
#[derive(Debug, Clone, PartialEq)]
pub struct PoolCanvas {
    pub canvas_index: usize,
    pub pool_index: usize,
    pub canvas: MosaicCanvas,
}

/// Random stream for canvas `canvas_index` of a run seeded with `seed`.
///
/// Each canvas owns its stream, so canvases can be assembled in any order or
/// in parallel with the same result.
pub fn canvas_rng(seed: u64, canvas_index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(canvas_index as u64));
    rng.set_stream(1);
    rng
}

/// The assembly path shared by the online and offline modes.
///
/// Crops are shuffled once with `seed`, cut into pools of `pool_size`, and
/// every pool is laid out once per grid, in `grids` order, filling
/// consecutive runs of `g^2` crops per canvas.
pub fn build_canvases(
    crops: &[CropPatch],
    grids: &[GridSpec],
    pool_size: usize,
    seed: u64,
) -> Result<Vec<PoolCanvas>, SfrError> {
    if crops.is_empty() {
        return Err(SfrError::EmptyPool);
    }
    if pool_size == 0 {
        return Err(SfrError::InvalidConfig("pool size must be positive".into()));
    }
    let mut order: Vec<usize> = (0..crops.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));

    let mut jobs: Vec<(usize, GridSpec, Vec<&CropPatch>)> = Vec::new();
    for (pool_index, pool) in order.chunks(pool_size).enumerate() {
        for grid in grids {
            for chunk in pool.chunks(grid.cells()) {
                jobs.push((
                    pool_index,
                    *grid,
                    chunk.iter().map(|&i| &crops[i]).collect(),
                ));
            }
        }
    }
    jobs.into_par_iter()
        .enumerate()
        .map(|(canvas_index, (pool_index, grid, members))| {
            let canvas = assemble_canvas(&members, grid, &mut canvas_rng(seed, canvas_index))?;
            Ok(PoolCanvas {
                canvas_index,
                pool_index,
                canvas,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::BBox;
    use image::{GenericImageView, Rgb};

    fn crop(id: u64, shade: u8, size: u32) -> CropPatch {
        CropPatch {
            pixels: RgbImage::from_fn(size, size, |x, y| {
                Rgb([shade, (x % 251) as u8 | 1, (y % 241) as u8 | 1])
            }),
            source: CropSource {
                image_id: id,
                label_index: 0,
                source_box: BBox::new(0.0, 0.0, 10.0, 10.0).unwrap(),
                category_id: 1 + (id % 3) as u32,
            },
        }
    }

    fn rects(canvas: &MosaicCanvas) -> Vec<[f64; 4]> {
        canvas.labels.iter().map(|l| l.bbox.corners()).collect()
    }

    #[test]
    fn four_crops_on_two_by_two() {
        let crops: Vec<_> = (0..4).map(|i| crop(i, 10 + i as u8, 200)).collect();
        let grid = GridSpec::new(2, 800).unwrap();
        let c = assemble_canvas(&crops, grid, &mut canvas_rng(3, 0)).unwrap();
        assert_eq!(c.labels.len(), 4);
        let mut got = rects(&c);
        got.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(
            got,
            vec![
                [0.0, 0.0, 400.0, 400.0],
                [0.0, 400.0, 400.0, 800.0],
                [400.0, 0.0, 800.0, 400.0],
                [400.0, 400.0, 800.0, 800.0]
            ]
        );
    }

    #[test]
    fn sixteen_crops_pass_through_unresized() {
        let crops: Vec<_> = (0..16).map(|i| crop(i, 5 + i as u8, 200)).collect();
        let grid = GridSpec::new(4, 800).unwrap();
        let c = assemble_canvas(&crops, grid, &mut canvas_rng(9, 0)).unwrap();
        assert_eq!(c.labels.len(), 16);
        assert_eq!(c.black_cells(), 0);
        for (i, cell) in c.cells.iter().enumerate() {
            let src = crops.iter().find(|k| Some(k.source) == *cell).unwrap();
            let (r, col) = (i as u32 / 4, i as u32 % 4);
            let view = c.pixels.view(col * 200, r * 200, 200, 200).to_image();
            assert_eq!(view, src.pixels);
        }
    }

    #[test]
    fn seven_crops_on_three_by_three() {
        let crops: Vec<_> = (0..7).map(|i| crop(i, 40 + i as u8, 200)).collect();
        let grid = GridSpec::new(3, 800).unwrap();
        let c = assemble_canvas(&crops, grid, &mut canvas_rng(1, 0)).unwrap();
        assert_eq!(c.labels.len(), 7);
        assert_eq!(c.black_cells(), 2);
        assert_eq!(grid.cell_size(), 266);
        for i in 0..800 {
            for m in 798..800 {
                assert_eq!(*c.pixels.get_pixel(m, i), Rgb([0, 0, 0]));
                assert_eq!(*c.pixels.get_pixel(i, m), Rgb([0, 0, 0]));
            }
        }
        for (i, cell) in c.cells.iter().enumerate() {
            if cell.is_none() {
                let r = grid.cell_rect(i);
                let view = c.pixels.view(r.x_min() as u32, r.y_min() as u32, 266, 266);
                assert!(view.pixels().all(|(_, _, p)| p == Rgb([0, 0, 0])));
            }
        }
    }

    #[test]
    fn too_many_crops() {
        let crops: Vec<_> = (0..5).map(|i| crop(i, 1, 20)).collect();
        let grid = GridSpec::new(2, 40).unwrap();
        assert!(matches!(
            assemble_canvas(&crops, grid, &mut canvas_rng(0, 0)),
            Err(SfrError::TooManyCrops { crops: 5, g: 2 })
        ));
    }

    #[test]
    fn build_is_deterministic_and_conserves_labels() {
        let crops: Vec<_> = (0..16).map(|i| crop(i, 3 * i as u8 + 1, 40)).collect();
        let grids: Vec<_> = [2, 3, 4]
            .iter()
            .map(|&g| GridSpec::new(g, 160).unwrap())
            .collect();
        let a = build_canvases(&crops, &grids, 16, 7).unwrap();
        let b = build_canvases(&crops, &grids, 16, 7).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 7);
        for g in &grids {
            let labels: usize = a
                .iter()
                .filter(|c| c.canvas.grid == *g)
                .map(|c| c.canvas.labels.len())
                .sum();
            assert_eq!(labels, 16);
        }
        let c = build_canvases(&crops, &grids, 16, 8).unwrap();
        assert_ne!(a, c);
    }
}
