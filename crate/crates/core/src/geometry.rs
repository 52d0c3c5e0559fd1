//! Axis-aligned box arithmetic shared by every other module.
//!
//! Boxes use continuous pixel coordinates with an inclusive min corner and an
//! exclusive max corner, so a box covering pixel columns `2..=7` is
//! `x_min = 2, x_max = 8` and its area is exactly `width * height`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("non-finite box coordinate in ({0}, {1}, {2}, {3})")]
    NonFinite(f64, f64, f64, f64),
    #[error("degenerate box ({0}, {1}, {2}, {3}): width and height must be positive")]
    Degenerate(f64, f64, f64, f64),
    #[error("transform produced a degenerate box: {0}")]
    DegenerateTransform(String),
}

/// Axis-aligned rectangle `(x_min, y_min, x_max, y_max)`.
///
/// Construction rejects non-finite coordinates and zero or negative extents,
/// so every `BBox` in circulation has a positive area.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BBox {
    x_min: f64,
    y_min: f64,
    x_max: f64,
    y_max: f64,
}

impl BBox {
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Result<Self, GeometryError> {
        if ![x_min, y_min, x_max, y_max].iter().all(|v| v.is_finite()) {
            return Err(GeometryError::NonFinite(x_min, y_min, x_max, y_max));
        }
        if x_min >= x_max || y_min >= y_max {
            return Err(GeometryError::Degenerate(x_min, y_min, x_max, y_max));
        }
        Ok(Self {
            x_min,
            y_min,
            x_max,
            y_max,
        })
    }

    /// Builds a box from the COCO `[x, y, width, height]` layout.
    pub fn from_xywh(x: f64, y: f64, w: f64, h: f64) -> Result<Self, GeometryError> {
        Self::new(x, y, x + w, y + h)
    }

    pub fn x_min(&self) -> f64 {
        self.x_min
    }

    pub fn y_min(&self) -> f64 {
        self.y_min
    }

    pub fn x_max(&self) -> f64 {
        self.x_max
    }

    pub fn y_max(&self) -> f64 {
        self.y_max
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn to_xywh(&self) -> [f64; 4] {
        [self.x_min, self.y_min, self.width(), self.height()]
    }

    pub fn corners(&self) -> [f64; 4] {
        [self.x_min, self.y_min, self.x_max, self.y_max]
    }

    /// Area of overlap with `other`; zero when the boxes are disjoint or only touch.
    pub fn intersection_area(&self, other: &BBox) -> f64 {
        let w = (self.x_max.min(other.x_max) - self.x_min.max(other.x_min)).max(0.0);
        let h = (self.y_max.min(other.y_max) - self.y_min.max(other.y_min)).max(0.0);
        w * h
    }

    /// Smallest box containing both `self` and `other`.
    pub fn enclosing(&self, other: &BBox) -> BBox {
        BBox {
            x_min: self.x_min.min(other.x_min),
            y_min: self.y_min.min(other.y_min),
            x_max: self.x_max.max(other.x_max),
            y_max: self.y_max.max(other.y_max),
        }
    }

    /// True when `self` lies inside `[0, width] x [0, height]`.
    pub fn within(&self, width: f64, height: f64) -> bool {
        self.x_min >= 0.0 && self.y_min >= 0.0 && self.x_max <= width && self.y_max <= height
    }

    /// Chebyshev gap between two boxes: zero when they overlap or touch.
    pub fn gap(&self, other: &BBox) -> f64 {
        let gx = (self.x_min.max(other.x_min) - self.x_max.min(other.x_max)).max(0.0);
        let gy = (self.y_min.max(other.y_min) - self.y_max.min(other.y_max)).max(0.0);
        gx.max(gy)
    }
}

impl<'de> Deserialize<'de> for BBox {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let [x_min, y_min, x_max, y_max] = <[f64; 4]>::deserialize(deserializer)?;
        BBox::new(x_min, y_min, x_max, y_max).map_err(serde::de::Error::custom)
    }
}

/// Intersection over union. Symmetric, in `[0, 1]`.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let inter = a.intersection_area(b);
    let union = a.area() + b.area() - inter;
    inter / union
}

/// Generalized IoU: `IoU - (|C| - |A u B|) / |C|` with `C` the enclosing box.
pub fn giou(a: &BBox, b: &BBox) -> f64 {
    let inter = a.intersection_area(b);
    let union = a.area() + b.area() - inter;
    let hull = a.enclosing(b).area();
    inter / union - (hull - union) / hull
}

/// Per-axis affine map taking `source` onto `target`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RectTransform {
    source: BBox,
    target: BBox,
}

impl RectTransform {
    pub fn new(source: BBox, target: BBox) -> Self {
        Self { source, target }
    }

    pub fn identity(rect: BBox) -> Self {
        Self::new(rect, rect)
    }

    pub fn source(&self) -> BBox {
        self.source
    }

    pub fn target(&self) -> BBox {
        self.target
    }

    pub fn inverse(&self) -> Self {
        Self::new(self.target, self.source)
    }

    pub fn map_x(&self, x: f64) -> f64 {
        let s = &self.source;
        let t = &self.target;
        t.x_min + (x - s.x_min) * t.width() / s.width()
    }

    pub fn map_y(&self, y: f64) -> f64 {
        let s = &self.source;
        let t = &self.target;
        t.y_min + (y - s.y_min) * t.height() / s.height()
    }

    /// Maps both corners of `b`. Scale factors are strictly positive, so the
    /// result is always a valid box; the error path only guards against
    /// floating-point collapse of extreme inputs.
    pub fn apply(&self, b: &BBox) -> Result<BBox, GeometryError> {
        let (x0, y0) = (self.map_x(b.x_min), self.map_y(b.y_min));
        let (x1, y1) = (self.map_x(b.x_max), self.map_y(b.y_max));
        BBox::new(x0, y0, x1, y1).map_err(|e| GeometryError::DegenerateTransform(e.to_string()))
    }
}

/// Maps `b` through `t`.
pub fn transform_box(t: &RectTransform, b: &BBox) -> Result<BBox, GeometryError> {
    t.apply(b)
}
