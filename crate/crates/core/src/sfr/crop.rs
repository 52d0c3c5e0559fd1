use image::RgbImage;
use log::warn;

use crate::dataset::Sample;
use crate::geometry::BBox;

use super::{pixel_region, ImageSource, SfrConfig, SfrError, MIN_BOX_SIDE};

/// Where a crop came from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CropSource {
    pub image_id: u64,
    /// Position of the box within its sample's label list.
    pub label_index: usize,
    pub source_box: BBox,
    pub category_id: u32,
}

/// A labeled box region resampled to a fixed size.
#[derive(Debug, Clone, PartialEq)]
pub struct CropPatch {
    pub pixels: RgbImage,
    pub source: CropSource,
}

/// Nearest-neighbor resample of the `w x h` region at `(x0, y0)`.
///
/// Output pixel `(u, v)` reads source `(x0 + floor((u + 0.5) * w / out_w),
/// y0 + floor((v + 0.5) * h / out_h))`, evaluated in exact integer arithmetic.
fn resample_region(
    src: &RgbImage,
    (x0, y0, w, h): (u32, u32, u32, u32),
    out_w: u32,
    out_h: u32,
) -> RgbImage {
    let xs: Vec<u32> = (0..out_w)
        .map(|u| x0 + ((2 * u as u64 + 1) * w as u64 / (2 * out_w as u64)) as u32)
        .collect();
    let ys: Vec<u32> = (0..out_h)
        .map(|v| y0 + ((2 * v as u64 + 1) * h as u64 / (2 * out_h as u64)) as u32)
        .collect();
    RgbImage::from_fn(out_w, out_h, |u, v| {
        *src.get_pixel(xs[u as usize], ys[v as usize])
    })
}

/// Nearest-neighbor resample of a whole image.
pub fn resample_nearest(src: &RgbImage, out_w: u32, out_h: u32) -> RgbImage {
    let (w, h) = src.dimensions();
    if (w, h) == (out_w, out_h) {
        return src.clone();
    }
    resample_region(src, (0, 0, w, h), out_w, out_h)
}

/// Crops `bbox` out of `image` and resamples it to `out_w x out_h`.
///
/// Returns `Ok(None)` for boxes whose pixel footprint is under
/// [`MIN_BOX_SIDE`] on either axis.
pub fn crop_region(
    image: &RgbImage,
    bbox: &BBox,
    out_w: u32,
    out_h: u32,
) -> Result<Option<RgbImage>, SfrError> {
    let (w, h) = image.dimensions();
    if !bbox.within(w as f64, h as f64) {
        return Err(SfrError::OutOfBounds {
            bbox: bbox.corners(),
            width: w,
            height: h,
        });
    }
    let (x0, y0, x1, y1) = pixel_region(bbox);
    if x1 - x0 < MIN_BOX_SIDE || y1 - y0 < MIN_BOX_SIDE {
        return Ok(None);
    }
    Ok(Some(resample_region(
        image,
        (x0, y0, x1 - x0, y1 - y0),
        out_w,
        out_h,
    )))
}

/// Crops every usable box of `samples`, in sample then label order.
pub fn collect_crops<'a>(
    samples: impl IntoIterator<Item = &'a Sample>,
    images: &dyn ImageSource,
    cfg: &SfrConfig,
) -> Result<Vec<CropPatch>, SfrError> {
    let mut crops = Vec::new();
    for sample in samples {
        if sample.labels.is_empty() {
            continue;
        }
        let image = images.load(sample)?;
        for (label_index, label) in sample.labels.iter().enumerate() {
            match crop_region(&image, &label.bbox, cfg.crop_width, cfg.crop_height)? {
                Some(pixels) => crops.push(CropPatch {
                    pixels,
                    source: CropSource {
                        image_id: sample.image_id,
                        label_index,
                        source_box: label.bbox,
                        category_id: label.category_id,
                    },
                }),
                None => warn!(
                    "skipping box {:?} of image {}: smaller than {MIN_BOX_SIDE}x{MIN_BOX_SIDE}",
                    label.bbox.corners(),
                    sample.image_id
                ),
            }
        }
    }
    Ok(crops)
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::Rgb;

    fn gradient(w: u32, h: u32) -> RgbImage {
        RgbImage::from_fn(w, h, |x, y| {
            Rgb([
                (x % 256) as u8,
                (y % 256) as u8,
                ((x * 7 + y * 13) % 256) as u8,
            ])
        })
    }

    #[test]
    fn exact_size_crop_is_a_copy() {
        let img = gradient(400, 300);
        let b = BBox::new(50.0, 60.0, 250.0, 260.0).unwrap();
        let out = crop_region(&img, &b, 200, 200).unwrap().unwrap();
        for v in 0..200 {
            for u in 0..200 {
                assert_eq!(out.get_pixel(u, v), img.get_pixel(50 + u, 60 + v));
            }
        }
    }

    #[test]
    fn upsample_replicates_blocks() {
        let img = gradient(300, 300);
        let b = BBox::new(10.0, 20.0, 110.0, 120.0).unwrap();
        let out = crop_region(&img, &b, 200, 200).unwrap().unwrap();
        for v in 0..200 {
            for u in 0..200 {
                assert_eq!(out.get_pixel(u, v), img.get_pixel(10 + u / 2, 20 + v / 2));
            }
        }
    }

    #[test]
    fn thin_box_is_skipped() {
        let img = gradient(100, 100);
        let b = BBox::new(5.0, 5.0, 6.0, 55.0).unwrap();
        assert!(crop_region(&img, &b, 200, 200).unwrap().is_none());
    }

    #[test]
    fn out_of_bounds_is_an_error() {
        let img = gradient(100, 100);
        let b = BBox::new(50.0, 50.0, 101.0, 60.0).unwrap();
        assert!(matches!(
            crop_region(&img, &b, 20, 20),
            Err(SfrError::OutOfBounds { .. })
        ));
    }

    #[test]
    fn downsample_index_formula() {
        let img = gradient(9, 9);
        let out = resample_nearest(&img, 3, 3);
        // floor((u + 0.5) * 9 / 3) = 1, 4, 7
        for (u, sx) in [1, 4, 7].into_iter().enumerate() {
            for (v, sy) in [1, 4, 7].into_iter().enumerate() {
                assert_eq!(out.get_pixel(u as u32, v as u32), img.get_pixel(sx, sy));
            }
        }
    }
}
