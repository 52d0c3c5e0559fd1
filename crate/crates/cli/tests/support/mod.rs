//! Reference implementations used as test oracles. Each one is written
//! for clarity over speed and shares no code with the library paths it
//! checks.
#![allow(dead_code)]

use camodet::agp::{detection_loss, LossConfig, RegionInput, StagedParams};
use camodet::dataset::DetectionDataset;
use camodet::eval::Detection;
use camodet::BBox;
use image::RgbImage;

// ---------------------------------------------------------------------------
// Evaluation

fn box_area(b: &BBox) -> f64 {
    (b.x_max() - b.x_min()) * (b.y_max() - b.y_min())
}

pub fn oracle_iou(a: &BBox, b: &BBox) -> f64 {
    let w = (a.x_max().min(b.x_max()) - a.x_min().max(b.x_min())).max(0.0);
    let h = (a.y_max().min(b.y_max()) - a.y_min().max(b.y_min())).max(0.0);
    let inter = w * h;
    inter / (box_area(a) + box_area(b) - inter)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Bucket {
    All,
    Small,
    Medium,
    Large,
}

fn in_bucket(bucket: Bucket, area: f64) -> bool {
    match bucket {
        Bucket::All => true,
        Bucket::Small => area < 1024.0,
        Bucket::Medium => (1024.0..9216.0).contains(&area),
        Bucket::Large => area >= 9216.0,
    }
}

/// AP at one IoU threshold for the boxes selected by `same_class`.
///
/// Interpolated precision at recall `r` is the largest precision reached at
/// any rank whose recall is at least `r`, found by scanning every rank.
fn brute_ap(
    detections: &[Detection],
    dataset: &DetectionDataset,
    same_class: &dyn Fn(u32) -> bool,
    bucket: Bucket,
    threshold: f64,
) -> Option<f64> {
    let mut n_gt = 0usize;
    // (detection index, score, true positive)
    let mut outcomes: Vec<(usize, f64, bool)> = Vec::new();
    for sample in &dataset.samples {
        let gts: Vec<BBox> = sample
            .labels
            .iter()
            .filter(|l| same_class(l.category_id) && in_bucket(bucket, box_area(&l.bbox)))
            .map(|l| l.bbox)
            .collect();
        n_gt += gts.len();
        let mut mine: Vec<usize> = (0..detections.len())
            .filter(|&i| {
                detections[i].image_id == sample.image_id && same_class(detections[i].category_id)
            })
            .collect();
        // Descending score, ties by input position (selection sort, stable).
        let mut ranked = Vec::new();
        while !mine.is_empty() {
            let mut best = 0;
            for k in 1..mine.len() {
                if detections[mine[k]].score > detections[mine[best]].score {
                    best = k;
                }
            }
            ranked.push(mine.remove(best));
        }
        ranked.truncate(100);
        ranked.retain(|&i| in_bucket(bucket, box_area(&detections[i].bbox)));
        let mut claimed = vec![false; gts.len()];
        for &i in &ranked {
            let mut pick: Option<usize> = None;
            for (g, gt) in gts.iter().enumerate() {
                let v = oracle_iou(&detections[i].bbox, gt);
                if claimed[g] || v < threshold {
                    continue;
                }
                if pick.is_none() || v > oracle_iou(&detections[i].bbox, &gts[pick.unwrap()]) {
                    pick = Some(g);
                }
            }
            if let Some(g) = pick {
                claimed[g] = true;
            }
            outcomes.push((i, detections[i].score, pick.is_some()));
        }
    }
    if n_gt == 0 {
        return None;
    }
    outcomes.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let mut points: Vec<(f64, f64)> = Vec::new(); // (recall, precision)
    let mut tp = 0usize;
    for (rank, o) in outcomes.iter().enumerate() {
        if o.2 {
            tp += 1;
        }
        points.push((tp as f64 / n_gt as f64, tp as f64 / (rank + 1) as f64));
    }
    let mut sum = 0.0;
    for k in 0..=100 {
        let r = k as f64 / 100.0;
        let mut best: f64 = 0.0;
        for &(rec, prec) in &points {
            if rec >= r && prec > best {
                best = prec;
            }
        }
        sum += best;
    }
    Some(sum / 101.0)
}

fn thresholds() -> Vec<f64> {
    (0..10).map(|i| (50 + 5 * i) as f64 / 100.0).collect()
}

fn mean_of_thresholds(aps: &[Option<f64>]) -> Option<f64> {
    let mut sum = 0.0;
    for ap in aps {
        sum += (*ap)?;
    }
    Some(sum / aps.len() as f64)
}

fn mean_present(values: &[Option<f64>]) -> Option<f64> {
    let present: Vec<f64> = values.iter().flatten().copied().collect();
    if present.is_empty() {
        return None;
    }
    let mut sum = 0.0;
    for v in &present {
        sum += v;
    }
    Some(sum / present.len() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleReport {
    pub map: Option<f64>,
    pub ap50: Option<f64>,
    pub ap75: Option<f64>,
    pub aps: Option<f64>,
    pub apm: Option<f64>,
    pub apl: Option<f64>,
    pub localization: Option<f64>,
    pub per_category: Vec<Option<f64>>,
}

pub fn brute_force_report(detections: &[Detection], dataset: &DetectionDataset) -> OracleReport {
    let pct = |v: Option<f64>| v.map(|v| v * 100.0);
    let table = |bucket: Bucket| -> Vec<Vec<Option<f64>>> {
        dataset
            .categories
            .iter()
            .map(|c| {
                thresholds()
                    .iter()
                    .map(|&t| brute_ap(detections, dataset, &|id| id == c.id, bucket, t))
                    .collect()
            })
            .collect()
    };
    let all = table(Bucket::All);
    let per_cat: Vec<Option<f64>> = all.iter().map(|a| mean_of_thresholds(a)).collect();
    let bucket_mean = |b: Bucket| {
        let rows: Vec<Option<f64>> = table(b).iter().map(|a| mean_of_thresholds(a)).collect();
        pct(mean_present(&rows))
    };
    let at = |t: usize| pct(mean_present(&all.iter().map(|a| a[t]).collect::<Vec<_>>()));
    let loc: Vec<Option<f64>> = thresholds()
        .iter()
        .map(|&t| brute_ap(detections, dataset, &|_| true, Bucket::All, t))
        .collect();
    OracleReport {
        map: pct(mean_present(&per_cat)),
        ap50: at(0),
        ap75: at(5),
        aps: bucket_mean(Bucket::Small),
        apm: bucket_mean(Bucket::Medium),
        apl: bucket_mean(Bucket::Large),
        localization: pct(mean_of_thresholds(&loc)),
        per_category: per_cat.into_iter().map(pct).collect(),
    }
}

// ---------------------------------------------------------------------------
// Masks

/// Boxes `[x0, y0, x1, y1)` of the 8-connected foreground components,
/// ordered by each component's first pixel in row-major order.
///
/// Labels are found by repeated min-label relaxation until nothing
/// changes, then every pixel is scanned for each label's extremes.
pub fn scan_component_boxes(data: &[u8], w: usize, h: usize, threshold: u8) -> Vec<[f64; 4]> {
    let t = threshold.max(1);
    let fg = |i: usize| data[i] >= t;
    let mut label: Vec<usize> = (0..w * h)
        .map(|i| if fg(i) { i } else { usize::MAX })
        .collect();
    loop {
        let mut changed = false;
        for y in 0..h {
            for x in 0..w {
                let i = y * w + x;
                if label[i] == usize::MAX {
                    continue;
                }
                for dy in -1i64..=1 {
                    for dx in -1i64..=1 {
                        let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                        if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                            continue;
                        }
                        let j = ny as usize * w + nx as usize;
                        if label[j] < label[i] {
                            label[i] = label[j];
                            changed = true;
                        }
                    }
                }
            }
        }
        if !changed {
            break;
        }
    }
    let mut roots: Vec<usize> = label.iter().copied().filter(|&l| l != usize::MAX).collect();
    roots.sort_unstable();
    roots.dedup();
    roots
        .into_iter()
        .map(|root| {
            let (mut x0, mut y0, mut x1, mut y1) = (usize::MAX, usize::MAX, 0, 0);
            for y in 0..h {
                for x in 0..w {
                    if label[y * w + x] == root {
                        x0 = x0.min(x);
                        y0 = y0.min(y);
                        x1 = x1.max(x + 1);
                        y1 = y1.max(y + 1);
                    }
                }
            }
            [x0 as f64, y0 as f64, x1 as f64, y1 as f64]
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Gradients

/// Central differences of the batch loss, in the parameters' block order.
pub fn finite_difference_gradient(
    params: &StagedParams,
    batch: &[RegionInput],
    cfg: &LossConfig,
    step: f64,
) -> Vec<f64> {
    let flat = params.flatten();
    let mut probe = params.clone();
    let mut out = Vec::with_capacity(flat.len());
    for (i, &x) in flat.iter().enumerate() {
        set_flat(&mut probe, i, x + step);
        let plus = detection_loss(&probe, batch, cfg);
        set_flat(&mut probe, i, x - step);
        let minus = detection_loss(&probe, batch, cfg);
        set_flat(&mut probe, i, x);
        out.push((plus - minus) / (2.0 * step));
    }
    out
}

fn set_flat(params: &mut StagedParams, mut index: usize, value: f64) {
    for block in params.blocks_mut() {
        if index < block.data.len() {
            block.data[index] = value;
            return;
        }
        index -= block.data.len();
    }
    panic!("parameter index out of range");
}

// ---------------------------------------------------------------------------
// Images

/// Nearest-neighbor resample of the `w x h` region at `(x0, y0)`: output
/// pixel `u` samples the source pixel containing the center of output
/// interval `u`.
pub fn nearest_region(
    src: &RgbImage,
    x0: u32,
    y0: u32,
    w: u32,
    h: u32,
    out_w: u32,
    out_h: u32,
) -> RgbImage {
    RgbImage::from_fn(out_w, out_h, |u, v| {
        let sx = ((u as f64 + 0.5) * w as f64 / out_w as f64).floor() as u32;
        let sy = ((v as f64 + 0.5) * h as f64 / out_h as f64).floor() as u32;
        *src.get_pixel(x0 + sx, y0 + sy)
    })
}
