use std::collections::VecDeque;
use std::path::Path;

use crate::geometry::BBox;

use super::{DatasetError, LabeledBox, UNASSIGNED_CATEGORY};

/// Foreground cut-off on 8-bit grayscale masks; antialiased edges below it
/// count as background.
pub const DEFAULT_THRESHOLD: u8 = 128;

/// Single-channel 8-bit mask, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskImage {
    width: u32,
    height: u32,
    data: Vec<u8>,
}

impl MaskImage {
    pub fn new(width: u32, height: u32, data: Vec<u8>) -> Result<Self, DatasetError> {
        if width == 0 || height == 0 {
            return Err(DatasetError::InvalidMask(format!(
                "dimensions {width}x{height} must be at least 1x1"
            )));
        }
        if data.len() != width as usize * height as usize {
            return Err(DatasetError::InvalidMask(format!(
                "expected {} bytes for {width}x{height}, got {}",
                width as usize * height as usize,
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn zeros(width: u32, height: u32) -> Result<Self, DatasetError> {
        Self::new(width, height, vec![0; width as usize * height as usize])
    }

    /// Loads a PNG or binary PNM file, converting color to grayscale.
    pub fn load(path: &Path) -> Result<Self, DatasetError> {
        let img = image::open(path).map_err(|e| DatasetError::Image {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        let gray = img.to_luma8();
        let (w, h) = gray.dimensions();
        Self::new(w, h, gray.into_raw())
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn get(&self, x: u32, y: u32) -> u8 {
        self.data[y as usize * self.width as usize + x as usize]
    }

    pub fn set(&mut self, x: u32, y: u32, value: u8) {
        self.data[y as usize * self.width as usize + x as usize] = value;
    }
}

/// One 8-connected foreground region as `(x, y)` pixel coordinates.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Component {
    pub pixels: Vec<(u32, u32)>,
}

impl Component {
    /// Extremal box: max corner is one past the last foreground pixel.
    pub fn bounding_box(&self) -> BBox {
        let (mut x0, mut y0, mut x1, mut y1) = (u32::MAX, u32::MAX, 0, 0);
        for &(x, y) in &self.pixels {
            x0 = x0.min(x);
            y0 = y0.min(y);
            x1 = x1.max(x);
            y1 = y1.max(y);
        }
        BBox::new(x0 as f64, y0 as f64, x1 as f64 + 1.0, y1 as f64 + 1.0)
            .expect("non-empty component has positive extent")
    }
}

/// Partitions pixels with intensity `>= threshold` into 8-connected
/// components, ordered by their first pixel in row-major order.
///
/// A threshold of 0 is treated as 1 so black pixels are never foreground.
pub fn connected_components(mask: &MaskImage, threshold: u8) -> Vec<Component> {
    let threshold = threshold.max(1);
    let (w, h) = (mask.width as usize, mask.height as usize);
    let mut seen = vec![false; w * h];
    let mut out = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..w * h {
        if seen[start] || mask.data[start] < threshold {
            continue;
        }
        seen[start] = true;
        queue.push_back(start);
        let mut pixels = Vec::new();
        while let Some(idx) = queue.pop_front() {
            let (x, y) = (idx % w, idx / w);
            pixels.push((x as u32, y as u32));
            for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    let nx = x as i64 + dx;
                    let ny = y as i64 + dy;
                    if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                        continue;
                    }
                    let n = ny as usize * w + nx as usize;
                    if !seen[n] && mask.data[n] >= threshold {
                        seen[n] = true;
                        queue.push_back(n);
                    }
                }
            }
        }
        out.push(Component { pixels });
    }
    out
}

/// One box per connected component. When a mask yields more than one
/// component every box is flagged for review, since occlusion can split a
/// single object into disjoint fragments.
pub fn mask_to_boxes(mask: &MaskImage, threshold: u8) -> Vec<LabeledBox> {
    let components = connected_components(mask, threshold);
    let review = components.len() > 1;
    components
        .iter()
        .map(|c| LabeledBox {
            bbox: c.bounding_box(),
            category_id: UNASSIGNED_CATEGORY,
            review,
        })
        .collect()
}
