use std::collections::HashMap;

use image::{Rgb, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::{Category, DetectionDataset, LabeledBox, Sample, Split};
use crate::geometry::{BBox, RectTransform};
use crate::sfr::crop_region;

use super::AgpError;

/// Side of the square grayscale patch used as the region feature.
pub const FEATURE_SIDE: u32 = 16;

/// One training region: feature vector, normalized target box and class.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionInput {
    pub features: Vec<f64>,
    /// Target box in window coordinates scaled to `[0, 1]^2`.
    pub target: BBox,
    /// Index into the model's class list.
    pub class_index: usize,
}

/// Maps dataset category ids to contiguous class indices, in table order.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassIndex {
    ids: Vec<u32>,
}

impl ClassIndex {
    pub fn new(categories: &[Category]) -> Self {
        Self {
            ids: categories.iter().map(|c| c.id).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn index_of(&self, category_id: u32) -> Option<usize> {
        self.ids.iter().position(|&c| c == category_id)
    }
}

fn luma(p: &Rgb<u8>) -> f64 {
    (0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64) / 255.0
}

/// Grayscale `side x side` nearest-neighbor patch of `window`, in `[0, 1]`,
/// row-major, with `target` mapped into the window's unit square.
pub fn featurize_region(
    image: &RgbImage,
    window: &BBox,
    target: &BBox,
    class_index: usize,
    side: u32,
) -> Result<RegionInput, AgpError> {
    let patch = crop_region(image, window, side, side)
        .map_err(|e| AgpError::Featurize(e.to_string()))?
        .ok_or_else(|| AgpError::Featurize(format!("window {:?} too small", window.corners())))?;
    let unit = BBox::new(0.0, 0.0, 1.0, 1.0).expect("unit square");
    let target = RectTransform::new(*window, unit)
        .apply(target)
        .map_err(|e| AgpError::Featurize(e.to_string()))?;
    Ok(RegionInput {
        features: patch.pixels().map(luma).collect(),
        target,
        class_index,
    })
}

/// Context window around `bbox`: twice its size, shifted by up to a quarter
/// of the window per axis, snapped to whole pixels and clipped to the image.
pub fn context_window<R: Rng + ?Sized>(bbox: &BBox, width: u32, height: u32, rng: &mut R) -> BBox {
    let (w, h) = (bbox.width() * 2.0, bbox.height() * 2.0);
    let cx = (bbox.x_min() + bbox.x_max()) / 2.0 + rng.gen_range(-0.25..=0.25) * w / 2.0;
    let cy = (bbox.y_min() + bbox.y_max()) / 2.0 + rng.gen_range(-0.25..=0.25) * h / 2.0;
    let x0 = (cx - w / 2.0).floor().max(0.0).min(bbox.x_min().floor());
    let y0 = (cy - h / 2.0).floor().max(0.0).min(bbox.y_min().floor());
    let x1 = (cx + w / 2.0)
        .ceil()
        .min(width as f64)
        .max(bbox.x_max().ceil());
    let y1 = (cy + h / 2.0)
        .ceil()
        .min(height as f64)
        .max(bbox.y_max().ceil());
    let x1 = x1.max(x0 + 2.0).min(width as f64);
    let y1 = y1.max(y0 + 2.0).min(height as f64);
    BBox::new(x0, y0, x1, y1).expect("window contains the box")
}

/// Regions for every label of `sample`. Each label's window jitter comes
/// from its own stream keyed by `(seed, image_id, label index)`.
pub fn sample_regions(
    sample: &Sample,
    image: &RgbImage,
    classes: &ClassIndex,
    seed: u64,
) -> Result<Vec<RegionInput>, AgpError> {
    sample
        .labels
        .iter()
        .enumerate()
        .map(|(i, label)| {
            let class = classes
                .index_of(label.category_id)
                .ok_or(AgpError::UnknownCategory(label.category_id))?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ sample.image_id.rotate_left(20));
            rng.set_stream(i as u64 + 1);
            let window = context_window(&label.bbox, sample.width, sample.height, &mut rng);
            featurize_region(image, &window, &label.bbox, class, FEATURE_SIDE)
        })
        .collect()
}

/// A small separable detection task: each image holds one solid rectangle
/// whose color (and so grayscale intensity) encodes its class, on a dark
/// noisy background.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticSpec {
    pub samples: usize,
    pub image_size: u32,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            samples: 64,
            image_size: 48,
            seed: 0,
        }
    }
}

const BLOB_COLORS: [(&str, [u8; 3]); 3] = [
    ("red", [255, 0, 0]),
    ("blue", [80, 80, 255]),
    ("green", [30, 200, 30]),
];

pub fn synthetic_task(spec: &SyntheticSpec) -> (DetectionDataset, HashMap<u64, RgbImage>) {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = spec.image_size;
    let categories: Vec<Category> = BLOB_COLORS
        .iter()
        .enumerate()
        .map(|(i, (name, _))| Category {
            id: i as u32 + 1,
            name: name.to_string(),
        })
        .collect();
    let mut samples = Vec::with_capacity(spec.samples);
    let mut images = HashMap::new();
    for i in 0..spec.samples {
        let class = i % BLOB_COLORS.len();
        let (bw, bh) = (rng.gen_range(n / 5..=n / 2), rng.gen_range(n / 5..=n / 2));
        let (x0, y0) = (rng.gen_range(0..=n - bw), rng.gen_range(0..=n - bh));
        let color = BLOB_COLORS[class].1;
        let mut img = RgbImage::new(n, n);
        for (x, y, p) in img.enumerate_pixels_mut() {
            *p = if (x0..x0 + bw).contains(&x) && (y0..y0 + bh).contains(&y) {
                Rgb(color)
            } else {
                let v = rng.gen_range(20..=40);
                Rgb([v, v, v])
            };
        }
        let image_id = i as u64 + 1;
        images.insert(image_id, img);
        samples.push(Sample {
            image_id,
            image_path: format!("synthetic/{image_id}.png"),
            width: n,
            height: n,
            labels: vec![LabeledBox {
                bbox: BBox::new(x0 as f64, y0 as f64, (x0 + bw) as f64, (y0 + bh) as f64)
                    .expect("blob has positive size"),
                category_id: class as u32 + 1,
                review: false,
            }],
            split: Split::Train,
        });
    }
    (
        DetectionDataset {
            categories,
            samples,
        },
        images,
    )
}
