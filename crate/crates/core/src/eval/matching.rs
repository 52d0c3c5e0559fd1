use crate::geometry::{iou, BBox};

use super::Detection;

/// Outcome for one detection, in processing order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Assignment {
    /// Index into the detections passed to [`match_detections`].
    pub detection: usize,
    pub score: f64,
    /// Matched ground-truth index; `None` is a false positive.
    pub ground_truth: Option<usize>,
}

impl Assignment {
    pub fn is_tp(&self) -> bool {
        self.ground_truth.is_some()
    }
}

/// Indices of `scores` sorted by descending score, ties in input order.
pub(crate) fn score_order(scores: impl Iterator<Item = f64>) -> Vec<usize> {
    let scores: Vec<f64> = scores.collect();
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    order
}

/// Greedy matching of one image's detections of one category.
///
/// Detections are visited by descending score; each claims the unclaimed
/// ground truth with the highest IoU, provided it is at least `threshold`.
/// On equal IoU the earlier ground truth wins.
pub fn match_detections(
    detections: &[Detection],
    ground_truths: &[BBox],
    threshold: f64,
) -> Vec<Assignment> {
    let ious: Vec<Vec<f64>> = detections
        .iter()
        .map(|d| ground_truths.iter().map(|g| iou(&d.bbox, g)).collect())
        .collect();
    match_with_ious(detections.iter().map(|d| d.score), &ious, threshold)
}

pub(crate) fn match_with_ious(
    scores: impl Iterator<Item = f64>,
    ious: &[Vec<f64>],
    threshold: f64,
) -> Vec<Assignment> {
    let scores: Vec<f64> = scores.collect();
    let n_gt = ious.first().map_or(0, |r| r.len());
    let mut taken = vec![false; n_gt];
    score_order(scores.iter().copied())
        .into_iter()
        .map(|d| {
            let mut best: Option<(usize, f64)> = None;
            for (g, &v) in ious[d].iter().enumerate() {
                if taken[g] || v < threshold {
                    continue;
                }
                if best.is_none_or(|(_, b)| v > b) {
                    best = Some((g, v));
                }
            }
            if let Some((g, _)) = best {
                taken[g] = true;
            }
            Assignment {
                detection: d,
                score: scores[d],
                ground_truth: best.map(|(g, _)| g),
            }
        })
        .collect()
}
