use std::time::Instant;

use log::{debug, info};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{DetectionDataset, Sample, Split};
use crate::sfr::{augment_batch_online, ImageSource, SfrConfig};

use super::{
    detection_loss, loss_and_gradients, sample_regions, AdamW, AdamWConfig, AgpError, ClassIndex,
    LossBreakdown, LossConfig, ModelDims, Optimizer, RegionInput, RestrictionConfig, Sgd,
    StagedParams, FEATURE_SIDE,
};

/// Training data: the train split of `dataset`, pixels from `images`.
#[derive(Clone, Copy)]
pub struct TrainSource<'a> {
    pub dataset: &'a DetectionDataset,
    pub images: &'a dyn ImageSource,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum OptimizerChoice {
    AdamW(AdamWConfig),
    Sgd { lr: f64 },
}

impl Default for OptimizerChoice {
    fn default() -> Self {
        Self::AdamW(AdamWConfig::default())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Images per mini-batch.
    pub batch_size: usize,
    /// Stop after this many optimizer steps, even mid-epoch.
    pub max_steps: Option<u64>,
    pub restriction: RestrictionConfig,
    pub loss: LossConfig,
    pub optimizer: OptimizerChoice,
    pub hidden1: usize,
    pub hidden2: usize,
    pub embed: usize,
    pub seed: u64,
    /// Mosaic each mini-batch and train on originals plus pseudo-images.
    pub sfr: Option<SfrConfig>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let dims = ModelDims::with_classes(1);
        Self {
            epochs: 10,
            batch_size: 16,
            max_steps: None,
            restriction: RestrictionConfig::default(),
            loss: LossConfig::default(),
            optimizer: OptimizerChoice::default(),
            hidden1: dims.hidden1,
            hidden2: dims.hidden2,
            embed: dims.embed,
            seed: 0,
            sfr: None,
        }
    }
}

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Optimizer steps taken so far.
    pub steps: u64,
    /// Mean weighted loss over this epoch's batches, before each step.
    pub loss: f64,
    pub giou: f64,
    pub contrastive: f64,
    pub focal: f64,
    pub restriction: RestrictionConfig,
    /// Seconds since training started.
    pub wall_time: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub params: StagedParams,
    pub log: Vec<EpochRecord>,
    /// Loss over all training regions before the first step.
    pub initial_loss: f64,
    /// Loss over all training regions after the last step.
    pub final_loss: f64,
}

enum Stepper {
    AdamW(Box<AdamW>),
    Sgd(Sgd),
}

impl Stepper {
    fn step(&mut self, params: &mut StagedParams, grads: &StagedParams) {
        match self {
            Self::AdamW(o) => o.step(params, grads),
            Self::Sgd(o) => o.step(params, grads),
        }
    }
}

fn validate(cfg: &TrainConfig) -> Result<(), AgpError> {
    cfg.restriction
        .validate()
        .map_err(AgpError::InvalidConfig)?;
    cfg.loss.validate().map_err(AgpError::InvalidConfig)?;
    if cfg.batch_size == 0 {
        return Err(AgpError::InvalidConfig(
            "batch size must be positive".into(),
        ));
    }
    if cfg.hidden1 == 0 || cfg.hidden2 == 0 || cfg.embed == 0 {
        return Err(AgpError::InvalidConfig(
            "layer widths must be positive".into(),
        ));
    }
    let lr = match cfg.optimizer {
        OptimizerChoice::AdamW(c) => c.lr,
        OptimizerChoice::Sgd { lr } => lr,
    };
    if !(lr.is_finite() && lr > 0.0) {
        return Err(AgpError::InvalidConfig(format!(
            "learning rate {lr} must be positive"
        )));
    }
    if let Some(sfr) = &cfg.sfr {
        sfr.grid_specs()?;
    }
    Ok(())
}

fn batch_seed(seed: u64, step: u64) -> u64 {
    seed ^ (step + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Regions of the mosaic pseudo-images built from one batch of samples.
fn mosaic_regions(
    batch: &[&Sample],
    images: &dyn ImageSource,
    sfr: &SfrConfig,
    classes: &ClassIndex,
    seed: u64,
) -> Result<Vec<RegionInput>, AgpError> {
    let owned: Vec<Sample> = batch.iter().map(|s| (*s).clone()).collect();
    let online = augment_batch_online(&owned, images, sfr, seed)?;
    let mut regions = Vec::new();
    for sample in online.pseudo_samples() {
        let pixels = online
            .pseudo_image(sample.image_id)
            .ok_or(AgpError::MissingImage(sample.image_id))?;
        regions.extend(sample_regions(sample, pixels, classes, seed)?);
    }
    Ok(regions)
}

/// Mini-batch training of the staged detector.
///
/// Each epoch visits the train-split images in a seeded shuffled order,
/// `batch_size` images per step. Every step evaluates the loss, takes the
/// restricted gradient and applies one optimizer update. All randomness
/// (initialization, window jitter, shuffles, mosaics) derives from
/// `cfg.seed`, so two runs with equal inputs produce equal parameters.
pub fn train_toy(source: TrainSource<'_>, cfg: &TrainConfig) -> Result<TrainOutcome, AgpError> {
    validate(cfg)?;
    let classes = ClassIndex::new(&source.dataset.categories);
    let dims = ModelDims::new(
        (FEATURE_SIDE * FEATURE_SIDE) as usize,
        cfg.hidden1,
        cfg.hidden2,
        classes.len(),
        cfg.embed,
    );
    let train: Vec<&Sample> = source
        .dataset
        .samples
        .iter()
        .filter(|s| s.split == Split::Train && !s.labels.is_empty())
        .collect();
    if train.is_empty() || classes.is_empty() {
        return Err(AgpError::EmptyDataset);
    }

    let mut per_sample = Vec::with_capacity(train.len());
    for s in &train {
        let pixels = source.images.load(s)?;
        per_sample.push(sample_regions(s, &pixels, &classes, cfg.seed)?);
    }
    let all_regions: Vec<RegionInput> = per_sample.iter().flatten().cloned().collect();

    let mut params = StagedParams::init(dims, &mut ChaCha8Rng::seed_from_u64(cfg.seed));
    let initial_loss = detection_loss(&params, &all_regions, &cfg.loss);
    info!(
        "initial loss {initial_loss:.6} over {} regions",
        all_regions.len()
    );

    let mut stepper = match cfg.optimizer {
        OptimizerChoice::AdamW(c) => Stepper::AdamW(Box::new(AdamW::new(c, &params))),
        OptimizerChoice::Sgd { lr } => Stepper::Sgd(Sgd { lr }),
    };
    let mut order_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    order_rng.set_stream(1);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let started = Instant::now();
    let mut log = Vec::new();
    let mut steps = 0u64;

    'epochs: for epoch in 0..cfg.epochs {
        order.shuffle(&mut order_rng);
        let mut sum = LossBreakdown::default();
        let mut batches = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            if cfg.max_steps.is_some_and(|m| steps >= m) {
                break;
            }
            let mut batch: Vec<RegionInput> = chunk
                .iter()
                .flat_map(|&i| per_sample[i].iter().cloned())
                .collect();
            if let Some(sfr) = &cfg.sfr {
                let samples: Vec<&Sample> = chunk.iter().map(|&i| train[i]).collect();
                batch.extend(mosaic_regions(
                    &samples,
                    source.images,
                    sfr,
                    &classes,
                    batch_seed(cfg.seed, steps),
                )?);
            }
            let (loss, grads) = loss_and_gradients(&params, &batch, &cfg.restriction, &cfg.loss);
            stepper.step(&mut params, &grads);
            steps += 1;
            batches += 1;
            sum.total += loss.total;
            sum.giou += loss.giou;
            sum.contrastive += loss.contrastive;
            sum.focal += loss.focal;
        }
        if batches == 0 {
            break 'epochs;
        }
        let n = batches as f64;
        let record = EpochRecord {
            epoch,
            steps,
            loss: sum.total / n,
            giou: sum.giou / n,
            contrastive: sum.contrastive / n,
            focal: sum.focal / n,
            restriction: cfg.restriction,
            wall_time: started.elapsed().as_secs_f64(),
        };
        debug!("epoch {epoch}: loss {:.6}", record.loss);
        log.push(record);
    }
    if !params.is_finite() {
        return Err(AgpError::InvalidConfig(
            "training diverged to non-finite parameters".into(),
        ));
    }
    let final_loss = detection_loss(&params, &all_regions, &cfg.loss);
    info!("final loss {final_loss:.6} after {steps} steps");
    Ok(TrainOutcome {
        params,
        log,
        initial_loss,
        final_loss,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agp::{synthetic_task, SyntheticSpec};

    fn small_cfg() -> TrainConfig {
        TrainConfig {
            epochs: 2,
            batch_size: 8,
            hidden1: 8,
            hidden2: 6,
            embed: 4,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn zero_epochs_returns_initial_params() {
        let (ds, images) = synthetic_task(&SyntheticSpec {
            samples: 6,
            ..Default::default()
        });
        let cfg = TrainConfig {
            epochs: 0,
            ..small_cfg()
        };
        let out = train_toy(
            TrainSource {
                dataset: &ds,
                images: &images,
            },
            &cfg,
        )
        .unwrap();
        assert!(out.log.is_empty());
        let dims = ModelDims::new(256, 8, 6, 3, 4);
        assert_eq!(
            out.params,
            StagedParams::init(dims, &mut ChaCha8Rng::seed_from_u64(0))
        );
        assert_eq!(out.initial_loss, out.final_loss);
    }

    #[test]
    fn empty_dataset_is_an_error() {
        let (mut ds, images) = synthetic_task(&SyntheticSpec {
            samples: 3,
            ..Default::default()
        });
        ds.samples.iter_mut().for_each(|s| s.split = Split::Test);
        let r = train_toy(
            TrainSource {
                dataset: &ds,
                images: &images,
            },
            &small_cfg(),
        );
        assert!(matches!(r, Err(AgpError::EmptyDataset)));
    }

    #[test]
    fn runs_are_deterministic_with_and_without_mosaics() {
        let (ds, images) = synthetic_task(&SyntheticSpec {
            samples: 12,
            ..Default::default()
        });
        let src = TrainSource {
            dataset: &ds,
            images: &images,
        };
        for sfr in [
            None,
            Some(SfrConfig {
                grids: vec![2],
                pool_size: 4,
                crop_width: 16,
                crop_height: 16,
                canvas_size: 32,
            }),
        ] {
            let cfg = TrainConfig { sfr, ..small_cfg() };
            let a = train_toy(src, &cfg).unwrap();
            let b = train_toy(src, &cfg).unwrap();
            assert_eq!(a.params, b.params);
            assert_eq!(a.log.len(), 2);
            assert_eq!(a.log[1].steps, 4);
            for (x, y) in a.log.iter().zip(&b.log) {
                assert_eq!(x.loss.to_bits(), y.loss.to_bits());
            }
        }
    }

    #[test]
    fn max_steps_stops_mid_epoch() {
        let (ds, images) = synthetic_task(&SyntheticSpec {
            samples: 12,
            ..Default::default()
        });
        let cfg = TrainConfig {
            max_steps: Some(3),
            ..small_cfg()
        };
        let out = train_toy(
            TrainSource {
                dataset: &ds,
                images: &images,
            },
            &cfg,
        )
        .unwrap();
        assert_eq!(out.log.last().unwrap().steps, 3);
        assert_eq!(out.log.len(), 2);
    }
}
