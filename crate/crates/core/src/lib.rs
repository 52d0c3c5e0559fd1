//! Tooling for box-level camouflaged object detection.
//!
//! * [`geometry`]: IoU, GIoU and rectangle remapping.
//! * [`dataset`]: annotation model, COCO-flavored JSON, mask-to-box conversion.
//! * [`sfr`]: crop-and-mosaic augmentation that packs every labeled box of a
//!   batch (or a whole dataset) into fixed-size grid canvases.
//! * [`agp`]: a three-stage toy detector trained with GIoU + contrastive +
//!   focal loss, with gradients restricted at stage boundaries.
//! * [`eval`]: COCO-style AP over IoU .50:.05:.95 and a class-agnostic
//!   localization score.

pub mod agp;
pub mod dataset;
pub mod eval;
pub mod geometry;
pub mod io;
pub mod sfr;

pub use geometry::{giou, iou, transform_box, BBox, RectTransform};
