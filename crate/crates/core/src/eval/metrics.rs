use std::collections::HashMap;
use std::fmt;

use serde::Serialize;

use crate::dataset::DetectionDataset;
use crate::geometry::{iou, BBox};

use super::matching::{match_with_ious, score_order};
use super::{average_precision, iou_thresholds, AreaRange, Detection, EvalError};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalParams {
    /// Per image and category, only the top-scoring detections count.
    pub max_detections: usize,
}

impl Default for EvalParams {
    fn default() -> Self {
        Self {
            max_detections: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CategoryAp {
    pub id: u32,
    pub name: String,
    pub ap: Option<f64>,
}

/// Percentages in `[0, 100]`; `None` when no ground truth falls in scope.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    #[serde(rename = "mAP")]
    pub map: Option<f64>,
    #[serde(rename = "AP50")]
    pub ap50: Option<f64>,
    #[serde(rename = "AP75")]
    pub ap75: Option<f64>,
    #[serde(rename = "APs")]
    pub aps: Option<f64>,
    #[serde(rename = "APm")]
    pub apm: Option<f64>,
    #[serde(rename = "APl")]
    pub apl: Option<f64>,
    pub localization: Option<f64>,
    pub per_category: Vec<CategoryAp>,
}

impl EvalReport {
    /// The headline columns, in table order.
    pub fn headline(&self) -> [(&'static str, Option<f64>); 5] {
        [
            ("mAP", self.map),
            ("AP50", self.ap50),
            ("AP75", self.ap75),
            ("APm", self.apm),
            ("APl", self.apl),
        ]
    }
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let cell = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |v| format!("{v:.1}"));
        let mut cols: Vec<(&str, Option<f64>)> = self.headline().to_vec();
        cols.push(("Loc", self.localization));
        for (name, _) in &cols {
            write!(f, "{name:>7}")?;
        }
        writeln!(f)?;
        for (_, v) in &cols {
            write!(f, "{:>7}", cell(*v))?;
        }
        writeln!(f)?;
        if !self.per_category.is_empty() {
            let width = self
                .per_category
                .iter()
                .map(|c| c.name.len())
                .max()
                .unwrap_or(0);
            writeln!(f)?;
            for c in &self.per_category {
                writeln!(f, "  {:<width$} {:>6}", c.name, cell(c.ap))?;
            }
        }
        Ok(())
    }
}

struct Group {
    detections: Vec<usize>,
    ground_truths: Vec<BBox>,
}

/// Per-threshold AP (fractions) for one category key and area range.
type ThresholdAps = [Option<f64>; 10];

struct Evaluator<'a> {
    detections: &'a [Detection],
    /// Category keys in report order.
    keys: Vec<u32>,
    /// `(key, image)` in dataset sample order.
    images: Vec<u64>,
    groups: HashMap<(u32, u64), Group>,
    params: EvalParams,
}

impl<'a> Evaluator<'a> {
    fn new(
        detections: &'a [Detection],
        dataset: &DetectionDataset,
        class_agnostic: bool,
        params: EvalParams,
    ) -> Result<Self, EvalError> {
        let key = |category_id: u32| if class_agnostic { 0 } else { category_id };
        let mut groups: HashMap<(u32, u64), Group> = HashMap::new();
        for s in &dataset.samples {
            for l in &s.labels {
                groups
                    .entry((key(l.category_id), s.image_id))
                    .or_insert_with(|| Group {
                        detections: Vec::new(),
                        ground_truths: Vec::new(),
                    })
                    .ground_truths
                    .push(l.bbox);
            }
        }
        for (index, d) in detections.iter().enumerate() {
            if dataset.sample(d.image_id).is_none() {
                return Err(EvalError::UnknownImage {
                    index,
                    image_id: d.image_id,
                });
            }
            if dataset.category(d.category_id).is_none() {
                return Err(EvalError::UnknownCategory {
                    index,
                    category_id: d.category_id,
                });
            }
            groups
                .entry((key(d.category_id), d.image_id))
                .or_insert_with(|| Group {
                    detections: Vec::new(),
                    ground_truths: Vec::new(),
                })
                .detections
                .push(index);
        }
        let keys = if class_agnostic {
            vec![0]
        } else {
            dataset.categories.iter().map(|c| c.id).collect()
        };
        Ok(Self {
            detections,
            keys,
            images: dataset.samples.iter().map(|s| s.image_id).collect(),
            groups,
            params,
        })
    }

    fn aps(&self, key: u32, area: AreaRange) -> ThresholdAps {
        let thresholds = iou_thresholds();
        let mut pooled: Vec<Vec<(usize, f64, bool)>> = vec![Vec::new(); thresholds.len()];
        let mut n_gt = 0;
        for image in &self.images {
            let Some(group) = self.groups.get(&(key, *image)) else {
                continue;
            };
            let gts: Vec<BBox> = group
                .ground_truths
                .iter()
                .filter(|g| area.contains(g.area()))
                .copied()
                .collect();
            n_gt += gts.len();
            let ranked = score_order(group.detections.iter().map(|&i| self.detections[i].score));
            let dets: Vec<usize> = ranked
                .into_iter()
                .take(self.params.max_detections)
                .map(|r| group.detections[r])
                .filter(|&i| area.contains(self.detections[i].bbox.area()))
                .collect();
            let ious: Vec<Vec<f64>> = dets
                .iter()
                .map(|&i| {
                    gts.iter()
                        .map(|g| iou(&self.detections[i].bbox, g))
                        .collect()
                })
                .collect();
            for (t, &thr) in thresholds.iter().enumerate() {
                let scores = dets.iter().map(|&i| self.detections[i].score);
                for a in match_with_ious(scores, &ious, thr) {
                    pooled[t].push((dets[a.detection], a.score, a.is_tp()));
                }
            }
        }
        std::array::from_fn(|t| {
            let mut entries = pooled[t].clone();
            entries.sort_by_key(|e| e.0);
            let flat: Vec<(f64, bool)> = entries.iter().map(|e| (e.1, e.2)).collect();
            average_precision(&flat, n_gt)
        })
    }
}

fn mean_over_thresholds(aps: &ThresholdAps) -> Option<f64> {
    let mut sum = 0.0;
    for ap in aps {
        sum += (*ap)?;
    }
    Some(sum / aps.len() as f64)
}

fn mean_defined(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let (mut sum, mut n) = (0.0, 0usize);
    for v in values.flatten() {
        sum += v;
        n += 1;
    }
    (n > 0).then(|| sum / n as f64)
}

fn percent(v: Option<f64>) -> Option<f64> {
    v.map(|v| v * 100.0)
}

pub fn evaluate(
    detections: &[Detection],
    dataset: &DetectionDataset,
    params: EvalParams,
) -> Result<EvalReport, EvalError> {
    let ev = Evaluator::new(detections, dataset, false, params)?;
    let table = |area: AreaRange| -> Vec<ThresholdAps> {
        ev.keys.iter().map(|&k| ev.aps(k, area)).collect()
    };
    let all = table(AreaRange::All);
    let bucket =
        |area: AreaRange| percent(mean_defined(table(area).iter().map(mean_over_thresholds)));
    let at = |t: usize| percent(mean_defined(all.iter().map(|a| a[t])));
    Ok(EvalReport {
        map: percent(mean_defined(all.iter().map(mean_over_thresholds))),
        ap50: at(0),
        ap75: at(5),
        aps: bucket(AreaRange::Small),
        apm: bucket(AreaRange::Medium),
        apl: bucket(AreaRange::Large),
        localization: localization_with(detections, dataset, params)?,
        per_category: dataset
            .categories
            .iter()
            .zip(&all)
            .map(|(c, aps)| CategoryAp {
                id: c.id,
                name: c.name.clone(),
                ap: percent(mean_over_thresholds(aps)),
            })
            .collect(),
    })
}

/// Full report with default parameters.
pub fn coco_metrics(
    detections: &[Detection],
    dataset: &DetectionDataset,
) -> Result<EvalReport, EvalError> {
    evaluate(detections, dataset, EvalParams::default())
}

fn localization_with(
    detections: &[Detection],
    dataset: &DetectionDataset,
    params: EvalParams,
) -> Result<Option<f64>, EvalError> {
    let ev = Evaluator::new(detections, dataset, true, params)?;
    Ok(percent(mean_over_thresholds(&ev.aps(0, AreaRange::All))))
}

/// Class-agnostic AP averaged over IoU .50:.05:.95: every box is treated as
/// the same class, so only localization quality counts.
pub fn localization_score(
    detections: &[Detection],
    dataset: &DetectionDataset,
) -> Result<Option<f64>, EvalError> {
    localization_with(detections, dataset, EvalParams::default())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{Category, LabeledBox, Sample, Split};

    fn dataset() -> DetectionDataset {
        let b = |x0: f64, y0: f64, x1: f64, y1: f64, c: u32| LabeledBox {
            bbox: BBox::new(x0, y0, x1, y1).unwrap(),
            category_id: c,
            review: false,
        };
        DetectionDataset {
            categories: vec![
                Category {
                    id: 1,
                    name: "a".into(),
                },
                Category {
                    id: 2,
                    name: "b".into(),
                },
            ],
            samples: vec![
                Sample {
                    image_id: 1,
                    image_path: "1.png".into(),
                    width: 400,
                    height: 400,
                    labels: vec![b(0.0, 0.0, 50.0, 50.0, 1), b(100.0, 100.0, 300.0, 300.0, 2)],
                    split: Split::Test,
                },
                Sample {
                    image_id: 2,
                    image_path: "2.png".into(),
                    width: 400,
                    height: 400,
                    labels: vec![b(10.0, 10.0, 150.0, 130.0, 1)],
                    split: Split::Test,
                },
            ],
        }
    }

    fn perfect(ds: &DetectionDataset) -> Vec<Detection> {
        ds.samples
            .iter()
            .flat_map(|s| {
                s.labels.iter().map(|l| Detection {
                    image_id: s.image_id,
                    bbox: l.bbox,
                    category_id: l.category_id,
                    score: 1.0,
                })
            })
            .collect()
    }

    #[test]
    fn perfect_detector_scores_100() {
        let ds = dataset();
        let r = coco_metrics(&perfect(&ds), &ds).unwrap();
        for (_, v) in r.headline() {
            assert_eq!(v, Some(100.0));
        }
        assert_eq!(r.localization, Some(100.0));
        // Only one 32x32..96x96 box exists, so APs has no ground truth.
        assert_eq!(r.aps, None);
    }

    #[test]
    fn medium_box_only_counts_for_apm() {
        let ds = dataset();
        // Detect only the 50x50 box.
        let dets = vec![perfect(&ds)[0]];
        let r = coco_metrics(&dets, &ds).unwrap();
        assert_eq!(r.apm, Some(100.0));
        assert_eq!(r.apl, Some(0.0));
    }

    #[test]
    fn wrong_classes_still_localize() {
        let ds = dataset();
        let dets: Vec<Detection> = perfect(&ds)
            .into_iter()
            .map(|mut d| {
                d.category_id = 3 - d.category_id;
                d
            })
            .collect();
        let r = coco_metrics(&dets, &ds).unwrap();
        assert_eq!(r.map, Some(0.0));
        assert_eq!(localization_score(&dets, &ds).unwrap(), Some(100.0));
    }

    #[test]
    fn empty_detections() {
        let ds = dataset();
        assert_eq!(localization_score(&[], &ds).unwrap(), Some(0.0));
        assert_eq!(coco_metrics(&[], &ds).unwrap().map, Some(0.0));
    }

    #[test]
    fn unknown_references_rejected() {
        let ds = dataset();
        let mut d = perfect(&ds)[0];
        d.image_id = 77;
        assert!(matches!(
            coco_metrics(&[d], &ds),
            Err(EvalError::UnknownImage {
                index: 0,
                image_id: 77
            })
        ));
        d.image_id = 1;
        d.category_id = 9;
        assert!(matches!(
            coco_metrics(&[d], &ds),
            Err(EvalError::UnknownCategory { index: 0, .. })
        ));
    }

    #[test]
    fn report_table_layout() {
        let ds = dataset();
        let text = coco_metrics(&perfect(&ds), &ds).unwrap().to_string();
        let header: Vec<&str> = text.lines().next().unwrap().split_whitespace().collect();
        assert_eq!(header, ["mAP", "AP50", "AP75", "APm", "APl", "Loc"]);
    }
}
