use ndarray::{Array1, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::geometry::{giou, BBox};

/// Probability floor applied before taking logs.
pub const PROB_FLOOR: f64 = 1e-12;
/// Added under the square root of vector norms so cosine similarity stays
/// smooth at the origin.
const NORM_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub focal_gamma: f64,
    pub focal_alpha: f64,
    pub temperature: f64,
    pub w_bbox: f64,
    pub w_contrastive: f64,
    pub w_cls: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            focal_gamma: 2.0,
            focal_alpha: 0.25,
            temperature: 0.07,
            w_bbox: 1.0,
            w_contrastive: 1.0,
            w_cls: 1.0,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.focal_gamma.is_nan() || self.focal_gamma < 0.0 {
            return Err(format!("focal gamma {} must be >= 0", self.focal_gamma));
        }
        if !(self.focal_alpha > 0.0 && self.focal_alpha <= 1.0) {
            return Err(format!(
                "focal alpha {} must be in (0, 1]",
                self.focal_alpha
            ));
        }
        if self.temperature.is_nan() || self.temperature <= 0.0 {
            return Err(format!("temperature {} must be > 0", self.temperature));
        }
        for (name, w) in [
            ("bbox", self.w_bbox),
            ("contrastive", self.w_contrastive),
            ("cls", self.w_cls),
        ] {
            if w.is_nan() || w < 0.0 {
                return Err(format!("{name} weight {w} must be >= 0"));
            }
        }
        Ok(())
    }
}

pub(crate) fn softmax(logits: ArrayView1<f64>) -> Array1<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exp = logits.mapv(|v| (v - max).exp());
    let sum = exp.sum();
    exp / sum
}

/// `-alpha (1 - p_t)^gamma ln p_t` with `p_t` the softmax probability of
/// `target`.
pub fn focal_loss(class_logits: ArrayView1<f64>, target: usize, gamma: f64, alpha: f64) -> f64 {
    focal_with_grad(class_logits, target, gamma, alpha).0
}

pub(crate) fn focal_with_grad(
    logits: ArrayView1<f64>,
    target: usize,
    gamma: f64,
    alpha: f64,
) -> (f64, Array1<f64>) {
    let p = softmax(logits);
    let pt = p[target];
    let log_pt = pt.max(PROB_FLOOR).ln();
    let q = 1.0 - pt;
    let loss = -alpha * q.powf(gamma) * log_pt;

    // d loss / d p_t
    let modulating = if gamma == 0.0 || q == 0.0 {
        0.0
    } else {
        -gamma * q.powf(gamma - 1.0) * log_pt
    };
    let log_term = if pt >= PROB_FLOOR {
        q.powf(gamma) / pt
    } else {
        0.0
    };
    let dpt = -alpha * (modulating + log_term);
    // d p_t / d z_j = p_t (delta_tj - p_j)
    let grad = Array1::from_shape_fn(p.len(), |j| {
        let delta = if j == target { 1.0 } else { 0.0 };
        dpt * pt * (delta - p[j])
    });
    (loss, grad)
}

/// `1 - GIoU(pred, target)`, in `[0, 2)`.
pub fn giou_loss(pred: &BBox, target: &BBox) -> f64 {
    1.0 - giou(pred, target)
}

/// GIoU loss on raw corners and its gradient with respect to `pred`.
///
/// At ties between predicted and target edges the subgradient that moves
/// the predicted edge is used.
pub(crate) fn giou_loss_with_grad(pred: [f64; 4], target: &BBox) -> (f64, [f64; 4]) {
    let [px0, py0, px1, py1] = pred;
    let [tx0, ty0, tx1, ty1] = target.corners();

    let iw = px1.min(tx1) - px0.max(tx0);
    let ih = py1.min(ty1) - py0.max(ty0);
    let overlapping = iw > 0.0 && ih > 0.0;
    let inter = if overlapping { iw * ih } else { 0.0 };
    let (pw, ph) = (px1 - px0, py1 - py0);
    let area_p = pw * ph;
    let union = area_p + target.area() - inter;
    let cw = px1.max(tx1) - px0.min(tx0);
    let ch = py1.max(ty1) - py0.min(ty0);
    let hull = cw * ch;
    let g = inter / union - (hull - union) / hull;

    // giou = I/U - 1 + U/C with U = A_p + A_t - I
    let d_inter = 1.0 / union + inter / (union * union) - 1.0 / hull;
    let d_area = -inter / (union * union) + 1.0 / hull;
    let d_hull = -union / (hull * hull);

    let mut grad = [0.0; 4];
    // area of the prediction
    grad[0] += d_area * -ph;
    grad[2] += d_area * ph;
    grad[1] += d_area * -pw;
    grad[3] += d_area * pw;
    if overlapping {
        if px0 >= tx0 {
            grad[0] += d_inter * -ih;
        }
        if px1 <= tx1 {
            grad[2] += d_inter * ih;
        }
        if py0 >= ty0 {
            grad[1] += d_inter * -iw;
        }
        if py1 <= ty1 {
            grad[3] += d_inter * iw;
        }
    }
    if px0 <= tx0 {
        grad[0] += d_hull * -ch;
    }
    if px1 >= tx1 {
        grad[2] += d_hull * ch;
    }
    if py0 <= ty0 {
        grad[1] += d_hull * -cw;
    }
    if py1 >= ty1 {
        grad[3] += d_hull * cw;
    }
    (1.0 - g, grad.map(|v| -v))
}

fn smooth_norm(v: ArrayView1<f64>) -> f64 {
    (v.dot(&v) + NORM_EPS).sqrt()
}

/// Temperature-scaled cosine-similarity cross-entropy: softmax over
/// `cos(region, class_j) / temperature`, negative log-probability of
/// `target`.
pub fn contrastive_loss(
    region_embedding: ArrayView1<f64>,
    class_embeddings: ArrayView2<f64>,
    target: usize,
    temperature: f64,
) -> f64 {
    contrastive_with_grad(region_embedding, class_embeddings, target, temperature).0
}

pub(crate) struct ContrastiveGrad {
    pub region: Array1<f64>,
    /// Same shape as the class table.
    pub classes: ndarray::Array2<f64>,
}

pub(crate) fn contrastive_with_grad(
    region: ArrayView1<f64>,
    classes: ArrayView2<f64>,
    target: usize,
    temperature: f64,
) -> (f64, ContrastiveGrad) {
    let n_r = smooth_norm(region);
    let n_c: Vec<f64> = classes.outer_iter().map(smooth_norm).collect();
    let cos: Array1<f64> = Array1::from_shape_fn(classes.nrows(), |j| {
        region.dot(&classes.row(j)) / (n_r * n_c[j])
    });
    let logits = cos.mapv(|c| c / temperature);
    let q = softmax(logits.view());
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.mapv(|v| (v - max).exp()).sum().ln();
    let loss = lse - logits[target];

    let mut g_region = Array1::zeros(region.len());
    let mut g_classes = ndarray::Array2::zeros(classes.raw_dim());
    for j in 0..classes.nrows() {
        let delta = if j == target { 1.0 } else { 0.0 };
        let d_cos = (q[j] - delta) / temperature;
        let e = classes.row(j);
        // d cos / d r = e / (|r||e|) - cos r / |r|^2
        g_region.scaled_add(d_cos / (n_r * n_c[j]), &e);
        g_region.scaled_add(-d_cos * cos[j] / (n_r * n_r), &region);
        let mut row = g_classes.row_mut(j);
        row.scaled_add(d_cos / (n_r * n_c[j]), &region);
        row.scaled_add(-d_cos * cos[j] / (n_c[j] * n_c[j]), &e);
    }
    (
        loss,
        ContrastiveGrad {
            region: g_region,
            classes: g_classes,
        },
    )
}
