//! Three-stage toy detector with restricted gradient propagation.
//!
//! A region feature passes through a backbone and a neck (affine + tanh)
//! into a head that predicts a box, class logits and an embedding. The loss
//! is `w_bbox * GIoU loss + w_c * contrastive + w_cls * focal`. During the
//! backward pass the signal entering the neck and the backbone can be scaled
//! down (boundary mode), or every stage's gradient can be scaled by one
//! factor (update mode).

mod backward;
mod checkpoint;
mod features;
mod gradcheck;
mod loss;
mod model;
mod optim;
mod params;
mod train;

use thiserror::Error;

use crate::sfr::SfrError;

pub use backward::{
    backward_restricted, detection_loss, loss_and_gradients, loss_breakdown, LossBreakdown,
    RestrictionConfig, RestrictionMode, DEFAULT_LAMBDA,
};
pub use checkpoint::{
    read_checkpoint, write_checkpoint, Checkpoint, CheckpointBlock, CHECKPOINT_FORMAT,
};
pub use features::{
    context_window, featurize_region, sample_regions, synthetic_task, ClassIndex, RegionInput,
    SyntheticSpec, FEATURE_SIDE,
};
pub use gradcheck::{
    gradient_check, random_problem, seeded_check, BlockError, GradCheckReport, FD_STEP,
    GRADCHECK_DIMS,
};
pub use loss::{contrastive_loss, focal_loss, giou_loss, LossConfig, PROB_FLOOR};
pub use model::{forward_staged, ForwardPass};
pub use optim::{
    AdamW, AdamWConfig, MomentumReading, Optimizer, Sgd, DEFAULT_LR, DEFAULT_WEIGHT_DECAY,
};
pub use params::{Affine, Block, BlockMut, ModelDims, Stage, StagedParams, BLOCK_NAMES};
pub use train::{train_toy, EpochRecord, OptimizerChoice, TrainConfig, TrainOutcome, TrainSource};

#[derive(Debug, Error)]
pub enum AgpError {
    #[error("dataset has no training regions")]
    EmptyDataset,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("category {0} is not in the category table")]
    UnknownCategory(u32),
    #[error("no pixels for image {0}")]
    MissingImage(u64),
    #[error("featurization failed: {0}")]
    Featurize(String),
    #[error("model expects {expected} features, region has {found}")]
    FeatureLength { expected: usize, found: usize },
    #[error("invalid checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Sfr(#[from] SfrError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl AgpError {
    pub fn code(&self) -> &'static str {
        match self {
            Self::EmptyDataset => "empty_dataset",
            Self::InvalidConfig(_) => "invalid_config",
            Self::UnknownCategory(_) => "unknown_category",
            Self::MissingImage(_) => "missing_image",
            Self::Featurize(_) => "featurize",
            Self::FeatureLength { .. } => "feature_length",
            Self::Checkpoint(_) => "invalid_checkpoint",
            Self::Sfr(e) => e.code(),
            Self::Io(_) => "io",
            Self::Json(_) => "json",
        }
    }
}
