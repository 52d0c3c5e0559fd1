use ndarray::Array1;

use super::{RegionInput, StagedParams};

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Forward activations of one region, kept for the backward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardPass {
    pub input: Array1<f64>,
    /// Backbone output.
    pub backbone: Array1<f64>,
    /// Neck output.
    pub neck: Array1<f64>,
    /// Sigmoid outputs `(cx, cy, w, h)`.
    pub box_params: [f64; 4],
    /// Predicted `(x_min, y_min, x_max, y_max)` in normalized coordinates.
    pub pred_box: [f64; 4],
    pub class_logits: Array1<f64>,
    pub region_embedding: Array1<f64>,
}

/// Runs backbone, neck and head on one region.
///
/// Backbone and neck are affine + tanh. The box head's sigmoid outputs are
/// read as center and size, so the corner box has positive extent whenever
/// the sizes do not underflow.
pub fn forward_staged(params: &StagedParams, input: &RegionInput) -> ForwardPass {
    let x = Array1::from(input.features.clone());
    let backbone = params.backbone.apply(&x).mapv(f64::tanh);
    let neck = params.neck.apply(&backbone).mapv(f64::tanh);
    let raw = params.box_head.apply(&neck);
    let box_params: [f64; 4] = std::array::from_fn(|i| sigmoid(raw[i]));
    let [cx, cy, w, h] = box_params;
    ForwardPass {
        input: x,
        pred_box: [cx - w / 2.0, cy - h / 2.0, cx + w / 2.0, cy + h / 2.0],
        box_params,
        class_logits: params.class_head.apply(&neck),
        region_embedding: params.embed.dot(&neck),
        backbone,
        neck,
    }
}
