//! Annotation data model, COCO-flavored JSON persistence, mask-to-box
//! conversion and dataset statistics.

mod io;
mod mask;
mod merge;
mod summary;

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{BBox, GeometryError};

pub use io::{read_annotations, write_annotations, AnnotationFile};
pub use mask::{connected_components, mask_to_boxes, Component, MaskImage, DEFAULT_THRESHOLD};
pub use merge::merge_boxes;
pub use summary::{dataset_summary, reference_statistics, DatasetSummary, ReferenceStatistics};

/// Category id used for boxes that have not been assigned a class yet.
pub const UNASSIGNED_CATEGORY: u32 = 0;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed annotation json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("image error on {path}: {message}")]
    Image { path: String, message: String },
    #[error("annotation {annotation_id}: unknown category {category_id}")]
    UnknownCategory {
        annotation_id: u64,
        category_id: u32,
    },
    #[error("annotation {annotation_id}: unknown image {image_id}")]
    UnknownImage { annotation_id: u64, image_id: u64 },
    #[error(
        "annotation {annotation_id}: box {bbox:?} lies outside image {image_id} ({width}x{height})"
    )]
    BoxOutOfImage {
        annotation_id: u64,
        image_id: u64,
        bbox: [f64; 4],
        width: u32,
        height: u32,
    },
    #[error("annotation {annotation_id}: invalid box: {source}")]
    InvalidBox {
        annotation_id: u64,
        #[source]
        source: GeometryError,
    },
    #[error("duplicate image id {0}")]
    DuplicateImage(u64),
    #[error("duplicate category id {0}")]
    DuplicateCategoryId(u32),
    #[error("duplicate category name {0:?}")]
    DuplicateCategoryName(String),
    #[error("invalid category {id}: {reason}")]
    InvalidCategory { id: u32, reason: String },
    #[error("image {image_id}: invalid dimensions {width}x{height}")]
    InvalidDimensions {
        image_id: u64,
        width: u32,
        height: u32,
    },
    #[error("invalid mask: {0}")]
    InvalidMask(String),
}

impl DatasetError {
    /// Short stable identifier used in machine-readable error lines.
    pub fn code(&self) -> &'static str {
        match self {
            DatasetError::Io { .. } => "io",
            DatasetError::Json(_) => "malformed_json",
            DatasetError::Image { .. } => "image",
            DatasetError::UnknownCategory { .. } => "unknown_category",
            DatasetError::UnknownImage { .. } => "unknown_image",
            DatasetError::BoxOutOfImage { .. } => "box_out_of_image",
            DatasetError::InvalidBox { .. } => "invalid_box",
            DatasetError::DuplicateImage(_) => "duplicate_image",
            DatasetError::DuplicateCategoryId(_) | DatasetError::DuplicateCategoryName(_) => {
                "duplicate_category"
            }
            DatasetError::InvalidCategory { .. } => "invalid_category",
            DatasetError::InvalidDimensions { .. } => "invalid_dimensions",
            DatasetError::InvalidMask(_) => "invalid_mask",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Category {
    pub id: u32,
    pub name: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabeledBox {
    pub bbox: BBox,
    pub category_id: u32,
    /// Set when the box may be a fragment of an occluded object.
    pub review: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    #[default]
    Train,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Split::Train => f.write_str("train"),
            Split::Test => f.write_str("test"),
        }
    }
}

impl std::str::FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split {other:?} (expected train or test)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub image_id: u64,
    pub image_path: String,
    pub width: u32,
    pub height: u32,
    pub labels: Vec<LabeledBox>,
    pub split: Split,
}

/// Images with labeled boxes, a category table and split membership.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DetectionDataset {
    pub categories: Vec<Category>,
    pub samples: Vec<Sample>,
}

impl DetectionDataset {
    pub fn category(&self, id: u32) -> Option<&Category> {
        self.categories.iter().find(|c| c.id == id)
    }

    pub fn sample(&self, image_id: u64) -> Option<&Sample> {
        self.samples.iter().find(|s| s.image_id == image_id)
    }

    pub fn box_count(&self) -> usize {
        self.samples.iter().map(|s| s.labels.len()).sum()
    }

    /// Checks every data-model invariant. Annotation ids in errors are the
    /// 1-based running index used when the dataset is written to disk.
    pub fn validate(&self) -> Result<(), DatasetError> {
        let mut ids = HashSet::new();
        let mut names = HashSet::new();
        for c in &self.categories {
            if c.id == UNASSIGNED_CATEGORY {
                return Err(DatasetError::InvalidCategory {
                    id: c.id,
                    reason: "ids start at 1".into(),
                });
            }
            if c.name.is_empty() {
                return Err(DatasetError::InvalidCategory {
                    id: c.id,
                    reason: "empty name".into(),
                });
            }
            if !ids.insert(c.id) {
                return Err(DatasetError::DuplicateCategoryId(c.id));
            }
            if !names.insert(c.name.as_str()) {
                return Err(DatasetError::DuplicateCategoryName(c.name.clone()));
            }
        }
        let mut image_ids = HashSet::new();
        let mut annotation_id = 0u64;
        for s in &self.samples {
            if !image_ids.insert(s.image_id) {
                return Err(DatasetError::DuplicateImage(s.image_id));
            }
            if s.width == 0 || s.height == 0 {
                return Err(DatasetError::InvalidDimensions {
                    image_id: s.image_id,
                    width: s.width,
                    height: s.height,
                });
            }
            for l in &s.labels {
                annotation_id += 1;
                if !ids.contains(&l.category_id) {
                    return Err(DatasetError::UnknownCategory {
                        annotation_id,
                        category_id: l.category_id,
                    });
                }
                if !l.bbox.within(s.width as f64, s.height as f64) {
                    return Err(DatasetError::BoxOutOfImage {
                        annotation_id,
                        image_id: s.image_id,
                        bbox: l.bbox.to_xywh(),
                        width: s.width,
                        height: s.height,
                    });
                }
            }
        }
        Ok(())
    }
}
