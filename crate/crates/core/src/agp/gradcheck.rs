use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::geometry::BBox;

use super::{
    backward_restricted, detection_loss, LossConfig, ModelDims, RegionInput, RestrictionConfig,
    StagedParams,
};

/// Central-difference step.
pub const FD_STEP: f64 = 1e-5;

/// Small model used by the command-line checker.
pub const GRADCHECK_DIMS: ModelDims = ModelDims {
    input: 8,
    hidden1: 6,
    hidden2: 4,
    classes: 3,
    embed: 4,
};

/// Relative errors below this magnitude are measured against it instead.
const REL_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BlockError {
    pub name: &'static str,
    pub max_abs_error: f64,
    pub max_rel_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradCheckReport {
    pub blocks: Vec<BlockError>,
    pub max_rel_error: f64,
}

fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

/// Compares the unrestricted reverse-mode gradient with central differences
/// of [`detection_loss`], entry by entry. Relative error is
/// `|a - n| / max(|a|, |n|, 1e-6)`.
pub fn gradient_check(
    params: &StagedParams,
    batch: &[RegionInput],
    loss_cfg: &LossConfig,
    step: f64,
) -> GradCheckReport {
    let analytic = backward_restricted(params, batch, &RestrictionConfig::unrestricted(), loss_cfg);
    let mut probe = params.clone();
    let n_blocks = params.blocks().len();
    let mut blocks = Vec::with_capacity(n_blocks);
    for b in 0..n_blocks {
        let (name, len) = {
            let blk = &params.blocks()[b];
            (blk.name, blk.data.len())
        };
        let mut max_abs: f64 = 0.0;
        let mut max_rel: f64 = 0.0;
        for i in 0..len {
            let orig = params.blocks()[b].data[i];
            probe.blocks_mut()[b].data[i] = orig + step;
            let plus = detection_loss(&probe, batch, loss_cfg);
            probe.blocks_mut()[b].data[i] = orig - step;
            let minus = detection_loss(&probe, batch, loss_cfg);
            probe.blocks_mut()[b].data[i] = orig;
            let numeric = (plus - minus) / (2.0 * step);
            let a = analytic.blocks()[b].data[i];
            max_abs = max_abs.max((a - numeric).abs());
            max_rel = max_rel.max(relative_error(a, numeric));
        }
        blocks.push(BlockError {
            name,
            max_abs_error: max_abs,
            max_rel_error: max_rel,
        });
    }
    let max_rel_error = blocks.iter().map(|b| b.max_rel_error).fold(0.0, f64::max);
    GradCheckReport {
        blocks,
        max_rel_error,
    }
}

/// Random parameters and a batch of `regions` random regions for `dims`.
pub fn random_problem<R: Rng + ?Sized>(
    dims: ModelDims,
    regions: usize,
    rng: &mut R,
) -> (StagedParams, Vec<RegionInput>) {
    let params = StagedParams::init(dims, rng);
    let batch = (0..regions)
        .map(|_| {
            let x0 = rng.gen_range(0.0..0.6);
            let y0 = rng.gen_range(0.0..0.6);
            let x1 = x0 + rng.gen_range(0.1..0.4);
            let y1 = y0 + rng.gen_range(0.1..0.4);
            RegionInput {
                features: (0..dims.input).map(|_| rng.gen_range(0.0..1.0)).collect(),
                target: BBox::new(x0, y0, x1, y1).expect("positive extent"),
                class_index: rng.gen_range(0..dims.classes),
            }
        })
        .collect();
    (params, batch)
}

/// [`gradient_check`] on `models` random problems drawn from `seed`,
/// returning the report with the largest error.
pub fn seeded_check(
    dims: ModelDims,
    models: usize,
    regions: usize,
    seed: u64,
    step: f64,
    loss_cfg: &LossConfig,
) -> GradCheckReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: Option<GradCheckReport> = None;
    for _ in 0..models.max(1) {
        let (params, batch) = random_problem(dims, regions, &mut rng);
        let report = gradient_check(&params, &batch, loss_cfg, step);
        if worst
            .as_ref()
            .is_none_or(|w| report.max_rel_error > w.max_rel_error)
        {
            worst = Some(report);
        }
    }
    worst.expect("at least one model")
}
