use ndarray::{Array1, Array2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::loss::{contrastive_with_grad, focal_with_grad, giou_loss_with_grad};
use super::{forward_staged, LossConfig, RegionInput, Stage, StagedParams};

/// Default restriction factor.
pub const DEFAULT_LAMBDA: f64 = 0.08;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RestrictionMode {
    /// Scale the backpropagated signal where it crosses head->neck and
    /// neck->backbone.
    Boundary,
    /// Scale every stage's gradient block by one shared factor.
    Update,
}

impl std::str::FromStr for RestrictionMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "boundary" => Ok(Self::Boundary),
            "update" => Ok(Self::Update),
            other => Err(format!(
                "unknown restriction mode {other:?} (expected boundary or update)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RestrictionConfig {
    pub mode: RestrictionMode,
    /// Boundary mode: factor on the head -> neck signal.
    pub head_to_neck: f64,
    /// Boundary mode: additional factor on the neck -> backbone signal.
    pub neck_to_backbone: f64,
    /// Update mode: factor applied to all blocks.
    pub uniform: f64,
}

impl Default for RestrictionConfig {
    fn default() -> Self {
        Self {
            mode: RestrictionMode::Boundary,
            head_to_neck: DEFAULT_LAMBDA,
            neck_to_backbone: DEFAULT_LAMBDA,
            uniform: DEFAULT_LAMBDA,
        }
    }
}

impl RestrictionConfig {
    /// Plain gradients.
    pub fn unrestricted() -> Self {
        Self::boundary(1.0, 1.0)
    }

    pub fn boundary(head_to_neck: f64, neck_to_backbone: f64) -> Self {
        Self {
            mode: RestrictionMode::Boundary,
            head_to_neck,
            neck_to_backbone,
            uniform: 1.0,
        }
    }

    pub fn update(lambda: f64) -> Self {
        Self {
            mode: RestrictionMode::Update,
            head_to_neck: 1.0,
            neck_to_backbone: 1.0,
            uniform: lambda,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        for (name, v) in [
            ("head_to_neck", self.head_to_neck),
            ("neck_to_backbone", self.neck_to_backbone),
            ("uniform", self.uniform),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(format!("restriction factor {name}={v} outside [0, 1]"));
            }
        }
        Ok(())
    }
}

/// Batch-mean loss terms. `total` is the weighted sum; the per-term values
/// are unweighted.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub total: f64,
    pub giou: f64,
    pub contrastive: f64,
    pub focal: f64,
}

struct RegionResult {
    loss: LossBreakdown,
    grads: StagedParams,
}

fn region_backward(
    params: &StagedParams,
    input: &RegionInput,
    loss_cfg: &LossConfig,
    want_grads: bool,
) -> RegionResult {
    let f = forward_staged(params, input);
    let (l_giou, g_corners) = giou_loss_with_grad(f.pred_box, &input.target);
    let (l_con, g_con) = contrastive_with_grad(
        f.region_embedding.view(),
        params.class_embeddings.view(),
        input.class_index,
        loss_cfg.temperature,
    );
    let (l_focal, g_logits) = focal_with_grad(
        f.class_logits.view(),
        input.class_index,
        loss_cfg.focal_gamma,
        loss_cfg.focal_alpha,
    );
    let loss = LossBreakdown {
        total: loss_cfg.w_bbox * l_giou + loss_cfg.w_contrastive * l_con + loss_cfg.w_cls * l_focal,
        giou: l_giou,
        contrastive: l_con,
        focal: l_focal,
    };
    let mut grads = params.zeros_like();
    if !want_grads {
        return RegionResult { loss, grads };
    }

    // Box head: corners -> (cx, cy, w, h) -> sigmoid pre-activations.
    let g = g_corners.map(|v| v * loss_cfg.w_bbox);
    let d_params = [
        g[0] + g[2],
        g[1] + g[3],
        (g[2] - g[0]) / 2.0,
        (g[3] - g[1]) / 2.0,
    ];
    let d_box_raw = Array1::from_shape_fn(4, |i| {
        let s = f.box_params[i];
        d_params[i] * s * (1.0 - s)
    });
    let d_logits = g_logits * loss_cfg.w_cls;
    let d_embedding = g_con.region * loss_cfg.w_contrastive;
    grads.class_embeddings = (g_con.classes * loss_cfg.w_contrastive)
        .as_standard_layout()
        .into_owned();

    let outer = |d: &Array1<f64>, x: &Array1<f64>| {
        Array2::from_shape_fn((d.len(), x.len()), |(i, j)| d[i] * x[j])
    };
    grads.box_head.weight = outer(&d_box_raw, &f.neck);
    grads.box_head.bias = d_box_raw.clone();
    grads.class_head.weight = outer(&d_logits, &f.neck);
    grads.class_head.bias = d_logits.clone();
    grads.embed = outer(&d_embedding, &f.neck);

    let d_neck = params.box_head.weight.t().dot(&d_box_raw)
        + params.class_head.weight.t().dot(&d_logits)
        + params.embed.t().dot(&d_embedding);

    let d_neck_pre = &d_neck * &f.neck.mapv(|h| 1.0 - h * h);
    grads.neck.weight = outer(&d_neck_pre, &f.backbone);
    grads.neck.bias = d_neck_pre.clone();

    let d_backbone = params.neck.weight.t().dot(&d_neck_pre);
    let d_backbone_pre = &d_backbone * &f.backbone.mapv(|h| 1.0 - h * h);
    grads.backbone.weight = outer(&d_backbone_pre, &f.input);
    grads.backbone.bias = d_backbone_pre;

    RegionResult { loss, grads }
}

fn batch_pass(
    params: &StagedParams,
    batch: &[RegionInput],
    loss_cfg: &LossConfig,
    want_grads: bool,
) -> (LossBreakdown, StagedParams) {
    let results: Vec<RegionResult> = batch
        .par_iter()
        .map(|r| region_backward(params, r, loss_cfg, want_grads))
        .collect();
    let mut loss = LossBreakdown::default();
    let mut grads = params.zeros_like();
    // Reduction in batch order keeps the sum independent of scheduling.
    for r in &results {
        loss.total += r.loss.total;
        loss.giou += r.loss.giou;
        loss.contrastive += r.loss.contrastive;
        loss.focal += r.loss.focal;
        if want_grads {
            grads.add_assign(&r.grads);
        }
    }
    let n = batch.len().max(1) as f64;
    loss.total /= n;
    loss.giou /= n;
    loss.contrastive /= n;
    loss.focal /= n;
    grads.scale(1.0 / n);
    (loss, grads)
}

/// Mean over regions of `w_bbox * giou + w_c * contrastive + w_cls * focal`.
pub fn detection_loss(params: &StagedParams, batch: &[RegionInput], cfg: &LossConfig) -> f64 {
    loss_breakdown(params, batch, cfg).total
}

pub fn loss_breakdown(
    params: &StagedParams,
    batch: &[RegionInput],
    cfg: &LossConfig,
) -> LossBreakdown {
    batch_pass(params, batch, cfg, false).0
}

/// Reverse-mode gradient of the batch loss with restriction applied.
///
/// Boundary mode multiplies the signal entering the neck by `head_to_neck`
/// and the signal entering the backbone additionally by `neck_to_backbone`;
/// head gradients are untouched. Update mode computes plain gradients and
/// multiplies every block by `uniform`.
///
/// The backward pass below a boundary is linear in the adjoint crossing it,
/// so boundary factors are applied to the reduced neck and backbone blocks,
/// in signal order. This keeps `grad(lambda) == lambda * grad(1)` exact in
/// floating point.
pub fn backward_restricted(
    params: &StagedParams,
    batch: &[RegionInput],
    restriction: &RestrictionConfig,
    loss_cfg: &LossConfig,
) -> StagedParams {
    loss_and_gradients(params, batch, restriction, loss_cfg).1
}

pub fn loss_and_gradients(
    params: &StagedParams,
    batch: &[RegionInput],
    restriction: &RestrictionConfig,
    loss_cfg: &LossConfig,
) -> (LossBreakdown, StagedParams) {
    let (loss, mut grads) = batch_pass(params, batch, loss_cfg, true);
    match restriction.mode {
        RestrictionMode::Boundary => {
            grads.scale_stage(Stage::Neck, restriction.head_to_neck);
            grads.scale_stage(Stage::Backbone, restriction.head_to_neck);
            grads.scale_stage(Stage::Backbone, restriction.neck_to_backbone);
        }
        RestrictionMode::Update => {
            for stage in [Stage::Backbone, Stage::Neck, Stage::Head] {
                grads.scale_stage(stage, restriction.uniform);
            }
        }
    }
    (loss, grads)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agp::{contrastive_loss, focal_loss, giou_loss, random_problem, ModelDims};
    use crate::geometry::BBox;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const DIMS: ModelDims = ModelDims {
        input: 8,
        hidden1: 6,
        hidden2: 4,
        classes: 3,
        embed: 4,
    };

    fn problem(seed: u64) -> (StagedParams, Vec<RegionInput>) {
        random_problem(DIMS, 5, &mut ChaCha8Rng::seed_from_u64(seed))
    }

    fn stage_blocks(g: &StagedParams, stage: Stage) -> Vec<f64> {
        g.blocks()
            .iter()
            .filter(|b| b.stage == stage)
            .flat_map(|b| b.data.iter().copied())
            .collect()
    }

    #[test]
    fn unit_factors_give_plain_gradient() {
        let (p, batch) = problem(1);
        let cfg = LossConfig::default();
        let plain = batch_pass(&p, &batch, &cfg, true).1;
        assert_eq!(
            backward_restricted(&p, &batch, &RestrictionConfig::unrestricted(), &cfg),
            plain
        );
        assert_eq!(
            backward_restricted(&p, &batch, &RestrictionConfig::update(1.0), &cfg),
            plain
        );
    }

    #[test]
    fn zero_head_to_neck_zeroes_lower_stages() {
        let (p, batch) = problem(2);
        let cfg = LossConfig::default();
        let g = backward_restricted(&p, &batch, &RestrictionConfig::boundary(0.0, 0.7), &cfg);
        let plain = backward_restricted(&p, &batch, &RestrictionConfig::unrestricted(), &cfg);
        assert!(stage_blocks(&g, Stage::Backbone).iter().all(|&v| v == 0.0));
        assert!(stage_blocks(&g, Stage::Neck).iter().all(|&v| v == 0.0));
        assert_eq!(
            stage_blocks(&g, Stage::Head),
            stage_blocks(&plain, Stage::Head)
        );
    }

    #[test]
    fn boundary_gradients_are_linear_in_each_factor() {
        let (p, batch) = problem(3);
        let cfg = LossConfig::default();
        let base = backward_restricted(&p, &batch, &RestrictionConfig::unrestricted(), &cfg);
        for lambda in [0.0, 0.08, 0.3, 1.0] {
            let g =
                backward_restricted(&p, &batch, &RestrictionConfig::boundary(1.0, lambda), &cfg);
            let expect: Vec<f64> = stage_blocks(&base, Stage::Backbone)
                .iter()
                .map(|v| v * lambda)
                .collect();
            assert_eq!(stage_blocks(&g, Stage::Backbone), expect);
            assert_eq!(
                stage_blocks(&g, Stage::Neck),
                stage_blocks(&base, Stage::Neck)
            );

            let g =
                backward_restricted(&p, &batch, &RestrictionConfig::boundary(lambda, 1.0), &cfg);
            let expect: Vec<f64> = stage_blocks(&base, Stage::Neck)
                .iter()
                .map(|v| v * lambda)
                .collect();
            assert_eq!(stage_blocks(&g, Stage::Neck), expect);
        }
    }

    #[test]
    fn update_mode_scales_every_block() {
        let (p, batch) = problem(4);
        let cfg = LossConfig::default();
        let mut expect = backward_restricted(&p, &batch, &RestrictionConfig::unrestricted(), &cfg);
        expect.scale(0.08);
        let g = backward_restricted(&p, &batch, &RestrictionConfig::update(0.08), &cfg);
        assert_eq!(g, expect);
    }

    #[test]
    fn loss_recomposes_from_independent_terms() {
        let (p, batch) = problem(5);
        let cfg = LossConfig {
            w_bbox: 0.7,
            w_contrastive: 1.3,
            w_cls: 0.4,
            ..LossConfig::default()
        };
        let mut sum = 0.0;
        for r in &batch {
            let f = forward_staged(&p, r);
            let [a, b, c, d] = f.pred_box;
            let pred = BBox::new(a, b, c, d).unwrap();
            sum += 0.7 * giou_loss(&pred, &r.target)
                + 1.3
                    * contrastive_loss(
                        f.region_embedding.view(),
                        p.class_embeddings.view(),
                        r.class_index,
                        cfg.temperature,
                    )
                + 0.4
                    * focal_loss(
                        f.class_logits.view(),
                        r.class_index,
                        cfg.focal_gamma,
                        cfg.focal_alpha,
                    );
        }
        let expect = sum / batch.len() as f64;
        assert!((detection_loss(&p, &batch, &cfg) - expect).abs() < 1e-12);
    }

    #[test]
    fn zero_weights_and_single_term() {
        let (p, batch) = problem(6);
        let zero = LossConfig {
            w_bbox: 0.0,
            w_contrastive: 0.0,
            w_cls: 0.0,
            ..LossConfig::default()
        };
        assert_eq!(detection_loss(&p, &batch, &zero), 0.0);
        let giou_only = LossConfig {
            w_bbox: 1.0,
            ..zero
        };
        let r = &batch[..1];
        let f = forward_staged(&p, &r[0]);
        let [a, b, c, d] = f.pred_box;
        let expect = giou_loss(&BBox::new(a, b, c, d).unwrap(), &r[0].target);
        assert!((detection_loss(&p, r, &giou_only) - expect).abs() < 1e-15);
    }

    #[test]
    fn batch_permutation_leaves_loss_unchanged() {
        let (p, batch) = problem(7);
        let cfg = LossConfig::default();
        let mut rev = batch.clone();
        rev.reverse();
        let a = loss_breakdown(&p, &batch, &cfg);
        let b = loss_breakdown(&p, &rev, &cfg);
        assert!((a.total - b.total).abs() < 1e-12);
        assert!((a.giou - b.giou).abs() < 1e-12);
        assert!((a.contrastive - b.contrastive).abs() < 1e-12);
        assert!((a.focal - b.focal).abs() < 1e-12);
        assert!(a.total >= 0.0);
    }

    #[test]
    fn restriction_factors_are_validated() {
        assert!(RestrictionConfig::default().validate().is_ok());
        assert!(RestrictionConfig::boundary(1.2, 0.5).validate().is_err());
        assert!(RestrictionConfig::update(-0.1).validate().is_err());
        assert_eq!(
            "update".parse::<RestrictionMode>(),
            Ok(RestrictionMode::Update)
        );
        assert!("sideways".parse::<RestrictionMode>().is_err());
    }
}
