//! COCO-style box evaluation: AP averaged over IoU .50:.05:.95, AP50, AP75,
//! size-bucketed AP and a class-agnostic localization score.
//!
//! Matching is greedy by descending score; ties keep input order. AP is the
//! 101-point interpolated area under the precision/recall curve. All
//! reported values are percentages; a metric with no ground truth is absent.

mod ap;
mod matching;
mod metrics;

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{BBox, GeometryError};

pub use ap::average_precision;
pub use matching::{match_detections, Assignment};
pub use metrics::{coco_metrics, evaluate, localization_score, CategoryAp, EvalParams, EvalReport};

/// `.50, .55, ..., .95`
pub fn iou_thresholds() -> [f64; 10] {
    std::array::from_fn(|i| (50 + 5 * i) as f64 / 100.0)
}

/// `0.00, 0.01, ..., 1.00`
pub fn recall_thresholds() -> [f64; 101] {
    std::array::from_fn(|i| i as f64 / 100.0)
}

/// Object size buckets by box area, COCO convention.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AreaRange {
    All,
    Small,
    Medium,
    Large,
}

impl AreaRange {
    pub const MEDIUM_MIN: f64 = 32.0 * 32.0;
    pub const LARGE_MIN: f64 = 96.0 * 96.0;

    pub fn contains(&self, area: f64) -> bool {
        match self {
            AreaRange::All => true,
            AreaRange::Small => area < Self::MEDIUM_MIN,
            AreaRange::Medium => (Self::MEDIUM_MIN..Self::LARGE_MIN).contains(&area),
            AreaRange::Large => area >= Self::LARGE_MIN,
        }
    }
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("detection {index}: unknown image {image_id}")]
    UnknownImage { index: usize, image_id: u64 },
    #[error("detection {index}: unknown category {category_id}")]
    UnknownCategory { index: usize, category_id: u32 },
    #[error("detection {index}: score {score} outside [0, 1]")]
    InvalidScore { index: usize, score: f64 },
    #[error("detection {index}: invalid box: {source}")]
    InvalidBox {
        index: usize,
        #[source]
        source: GeometryError,
    },
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed detections json: {0}")]
    Json(#[from] serde_json::Error),
}

impl EvalError {
    pub fn code(&self) -> &'static str {
        match self {
            EvalError::UnknownImage { .. } => "unknown_image",
            EvalError::UnknownCategory { .. } => "unknown_category",
            EvalError::InvalidScore { .. } => "invalid_score",
            EvalError::InvalidBox { .. } => "invalid_box",
            EvalError::Io { .. } => "io",
            EvalError::Json(_) => "malformed_json",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection {
    pub image_id: u64,
    pub bbox: BBox,
    pub category_id: u32,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct DetectionRecord {
    image_id: u64,
    category_id: u32,
    /// `[x, y, width, height]`
    bbox: [f64; 4],
    score: f64,
}

/// Parses a COCO results list: `[{image_id, category_id, bbox, score}, ...]`.
pub fn parse_detections(text: &str) -> Result<Vec<Detection>, EvalError> {
    let records: Vec<DetectionRecord> = serde_json::from_str(text)?;
    records
        .into_iter()
        .enumerate()
        .map(|(index, r)| {
            if !(0.0..=1.0).contains(&r.score) {
                return Err(EvalError::InvalidScore {
                    index,
                    score: r.score,
                });
            }
            let [x, y, w, h] = r.bbox;
            let bbox = BBox::from_xywh(x, y, w, h)
                .map_err(|source| EvalError::InvalidBox { index, source })?;
            Ok(Detection {
                image_id: r.image_id,
                bbox,
                category_id: r.category_id,
                score: r.score,
            })
        })
        .collect()
}

pub fn read_detections(path: &Path) -> Result<Vec<Detection>, EvalError> {
    let text = std::fs::read_to_string(path).map_err(|source| EvalError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_detections(&text)
}

pub fn detections_to_json(detections: &[Detection]) -> String {
    let records: Vec<DetectionRecord> = detections
        .iter()
        .map(|d| DetectionRecord {
            image_id: d.image_id,
            category_id: d.category_id,
            bbox: d.bbox.to_xywh(),
            score: d.score,
        })
        .collect();
    serde_json::to_string_pretty(&records).expect("detections serialize")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn threshold_grids() {
        let t = iou_thresholds();
        assert_eq!(t[0], 0.5);
        assert_eq!(t[5], 0.75);
        assert_eq!(t[9], 0.95);
        let r = recall_thresholds();
        assert_eq!((r[0], r[100]), (0.0, 1.0));
    }

    #[test]
    fn area_buckets() {
        assert!(AreaRange::Medium.contains(50.0 * 50.0));
        assert!(!AreaRange::Large.contains(50.0 * 50.0));
        assert!(!AreaRange::Small.contains(50.0 * 50.0));
        assert!(AreaRange::Medium.contains(1024.0));
        assert!(AreaRange::Large.contains(9216.0));
        assert!(AreaRange::Small.contains(1023.9));
    }

    #[test]
    fn parse_rejects_bad_score() {
        let err =
            parse_detections(r#"[{"image_id":1,"category_id":1,"bbox":[0,0,2,2],"score":1.5}]"#)
                .unwrap_err();
        assert!(matches!(err, EvalError::InvalidScore { index: 0, .. }));
        let ok =
            parse_detections(r#"[{"image_id":1,"category_id":1,"bbox":[1,2,3,4],"score":0.5}]"#)
                .unwrap();
        assert_eq!(ok[0].bbox, BBox::new(1.0, 2.0, 4.0, 6.0).unwrap());
        assert_eq!(parse_detections(&detections_to_json(&ok)).unwrap(), ok);
    }
}
