use super::matching::score_order;
use super::recall_thresholds;

/// 101-point interpolated average precision.
///
/// `assignments` are `(score, is_true_positive)` pairs pooled over the
/// dataset, listed in input order; they are ranked by descending score with
/// ties kept in that order. Returns `None` when there is no ground truth.
pub fn average_precision(assignments: &[(f64, bool)], n_ground_truth: usize) -> Option<f64> {
    if n_ground_truth == 0 {
        return None;
    }
    let order = score_order(assignments.iter().map(|a| a.0));
    let mut recall = Vec::with_capacity(order.len());
    let mut precision = Vec::with_capacity(order.len());
    let (mut tp, mut fp) = (0usize, 0usize);
    for i in order {
        if assignments[i].1 {
            tp += 1;
        } else {
            fp += 1;
        }
        recall.push(tp as f64 / n_ground_truth as f64);
        precision.push(tp as f64 / (tp + fp) as f64);
    }
    // Precision envelope: best precision at this recall or beyond.
    for i in (1..precision.len()).rev() {
        if precision[i] > precision[i - 1] {
            precision[i - 1] = precision[i];
        }
    }
    let mut sum = 0.0;
    for r in recall_thresholds() {
        let idx = recall.partition_point(|&v| v < r);
        if idx < precision.len() {
            sum += precision[idx];
        }
    }
    Some(sum / 101.0)
}
