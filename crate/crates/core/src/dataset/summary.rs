use std::collections::BTreeMap;
use std::fmt;

use serde::Serialize;

use super::{DetectionDataset, Split};

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
pub struct DatasetSummary {
    pub categories: usize,
    pub train_images: usize,
    pub test_images: usize,
    pub boxes: usize,
    pub review_boxes: usize,
    /// Box count per category name, including categories with no boxes.
    pub per_category: BTreeMap<String, usize>,
}

pub fn dataset_summary(dataset: &DetectionDataset) -> DatasetSummary {
    let mut per_category: BTreeMap<String, usize> = dataset
        .categories
        .iter()
        .map(|c| (c.name.clone(), 0))
        .collect();
    let mut summary = DatasetSummary {
        categories: dataset.categories.len(),
        ..Default::default()
    };
    for s in &dataset.samples {
        match s.split {
            Split::Train => summary.train_images += 1,
            Split::Test => summary.test_images += 1,
        }
        for l in &s.labels {
            summary.boxes += 1;
            summary.review_boxes += usize::from(l.review);
            if let Some(c) = dataset.category(l.category_id) {
                *per_category.entry(c.name.clone()).or_default() += 1;
            }
        }
    }
    summary.per_category = per_category;
    summary
}

impl fmt::Display for DatasetSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:<12} {:>8} {:>8} {:>8}",
            "", "#Class", "#Train", "#Test"
        )?;
        writeln!(
            f,
            "{:<12} {:>8} {:>8} {:>8}",
            "dataset", self.categories, self.train_images, self.test_images
        )?;
        writeln!(f, "boxes: {} (review: {})", self.boxes, self.review_boxes)?;
        let width = self.per_category.keys().map(|k| k.len()).max().unwrap_or(0);
        for (name, count) in &self.per_category {
            writeln!(f, "  {name:<width$} {count:>6}")?;
        }
        Ok(())
    }
}

/// Published class and split counts for the box-annotated camouflage
/// benchmarks, for checking a locally rebuilt copy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReferenceStatistics {
    pub name: &'static str,
    pub categories: usize,
    pub train_images: usize,
    pub test_images: usize,
}

impl ReferenceStatistics {
    pub fn matches(&self, summary: &DatasetSummary) -> bool {
        summary.categories == self.categories
            && summary.train_images == self.train_images
            && summary.test_images == self.test_images
    }
}

pub fn reference_statistics() -> &'static [ReferenceStatistics] {
    const TABLE: [ReferenceStatistics; 3] = [
        ReferenceStatistics {
            name: "COD10K-D",
            categories: 68,
            train_images: 6000,
            test_images: 4000,
        },
        ReferenceStatistics {
            name: "NC4K-D",
            categories: 37,
            train_images: 2863,
            test_images: 1227,
        },
        ReferenceStatistics {
            name: "CAMO-D",
            categories: 43,
            train_images: 744,
            test_images: 497,
        },
    ];
    &TABLE
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{Category, LabeledBox, Sample};
    use crate::geometry::BBox;

    #[test]
    fn empty_is_zero() {
        let s = dataset_summary(&DetectionDataset::default());
        assert_eq!(s, DatasetSummary::default());
    }

    #[test]
    fn counts_fixture() {
        let categories = (1..=3)
            .map(|id| Category {
                id,
                name: format!("c{id}"),
            })
            .collect();
        let samples = (0..7)
            .map(|i| Sample {
                image_id: i,
                image_path: format!("{i}.png"),
                width: 10,
                height: 10,
                labels: vec![LabeledBox {
                    bbox: BBox::new(0.0, 0.0, 5.0, 5.0).unwrap(),
                    category_id: 1 + (i as u32 % 2),
                    review: i == 0,
                }],
                split: if i < 5 { Split::Train } else { Split::Test },
            })
            .collect();
        let s = dataset_summary(&DetectionDataset {
            categories,
            samples,
        });
        assert_eq!((s.categories, s.train_images, s.test_images), (3, 5, 2));
        assert_eq!(s.boxes, 7);
        assert_eq!(s.review_boxes, 1);
        assert_eq!(s.per_category["c1"], 4);
        assert_eq!(s.per_category["c2"], 3);
        assert_eq!(s.per_category["c3"], 0);
    }

    #[test]
    fn reference_table() {
        let t = reference_statistics();
        let get = |n: &str| t.iter().find(|r| r.name == n).unwrap();
        assert_eq!(
            (
                get("COD10K-D").categories,
                get("COD10K-D").train_images,
                get("COD10K-D").test_images
            ),
            (68, 6000, 4000)
        );
        assert_eq!(
            (
                get("NC4K-D").categories,
                get("NC4K-D").train_images,
                get("NC4K-D").test_images
            ),
            (37, 2863, 1227)
        );
        assert_eq!(
            (
                get("CAMO-D").categories,
                get("CAMO-D").train_images,
                get("CAMO-D").test_images
            ),
            (43, 744, 497)
        );
    }
}
