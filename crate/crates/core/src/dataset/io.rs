use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::geometry::BBox;
use crate::io::write_atomic;

use super::{Category, DatasetError, DetectionDataset, LabeledBox, Sample, Split};

/// On-disk layout: COCO `images` / `annotations` / `categories` with two
/// extensions, a per-image `split` and a per-annotation `review` flag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationFile {
    pub images: Vec<ImageRecord>,
    pub annotations: Vec<AnnotationRecord>,
    pub categories: Vec<Category>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageRecord {
    pub id: u64,
    pub file_name: String,
    pub width: u32,
    pub height: u32,
    #[serde(default)]
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub id: u64,
    pub image_id: u64,
    pub category_id: u32,
    /// `[x, y, width, height]`
    pub bbox: [f64; 4],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub area: Option<f64>,
    #[serde(default)]
    pub iscrowd: u8,
    #[serde(default)]
    pub review: bool,
}

impl AnnotationFile {
    pub fn from_dataset(dataset: &DetectionDataset) -> Self {
        let mut annotations = Vec::new();
        let mut next_id = 1u64;
        for s in &dataset.samples {
            for l in &s.labels {
                annotations.push(AnnotationRecord {
                    id: next_id,
                    image_id: s.image_id,
                    category_id: l.category_id,
                    bbox: l.bbox.to_xywh(),
                    area: Some(l.bbox.area()),
                    iscrowd: 0,
                    review: l.review,
                });
                next_id += 1;
            }
        }
        Self {
            images: dataset
                .samples
                .iter()
                .map(|s| ImageRecord {
                    id: s.image_id,
                    file_name: s.image_path.clone(),
                    width: s.width,
                    height: s.height,
                    split: s.split,
                })
                .collect(),
            annotations,
            categories: dataset.categories.clone(),
        }
    }

    /// Resolves annotations against images and categories, reporting the
    /// first offending record.
    pub fn into_dataset(self) -> Result<DetectionDataset, DatasetError> {
        let mut samples: Vec<Sample> = Vec::with_capacity(self.images.len());
        let mut index = HashMap::new();
        for img in self.images {
            if index.insert(img.id, samples.len()).is_some() {
                return Err(DatasetError::DuplicateImage(img.id));
            }
            samples.push(Sample {
                image_id: img.id,
                image_path: img.file_name,
                width: img.width,
                height: img.height,
                labels: Vec::new(),
                split: img.split,
            });
        }
        let dataset_categories = self.categories;
        for ann in self.annotations {
            if !dataset_categories.iter().any(|c| c.id == ann.category_id) {
                return Err(DatasetError::UnknownCategory {
                    annotation_id: ann.id,
                    category_id: ann.category_id,
                });
            }
            let Some(&slot) = index.get(&ann.image_id) else {
                return Err(DatasetError::UnknownImage {
                    annotation_id: ann.id,
                    image_id: ann.image_id,
                });
            };
            let [x, y, w, h] = ann.bbox;
            let bbox = BBox::from_xywh(x, y, w, h).map_err(|source| DatasetError::InvalidBox {
                annotation_id: ann.id,
                source,
            })?;
            let sample = &mut samples[slot];
            if !bbox.within(sample.width as f64, sample.height as f64) {
                return Err(DatasetError::BoxOutOfImage {
                    annotation_id: ann.id,
                    image_id: sample.image_id,
                    bbox: ann.bbox,
                    width: sample.width,
                    height: sample.height,
                });
            }
            sample.labels.push(LabeledBox {
                bbox,
                category_id: ann.category_id,
                review: ann.review,
            });
        }
        let dataset = DetectionDataset {
            categories: dataset_categories,
            samples,
        };
        dataset.validate()?;
        Ok(dataset)
    }
}

pub fn read_annotations(path: &Path) -> Result<DetectionDataset, DatasetError> {
    let text = std::fs::read_to_string(path).map_err(|source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let file: AnnotationFile = serde_json::from_str(&text)?;
    file.into_dataset()
}

/// Validates, then writes atomically (temp file + rename).
pub fn write_annotations(dataset: &DetectionDataset, path: &Path) -> Result<(), DatasetError> {
    dataset.validate()?;
    let bytes = serde_json::to_vec_pretty(&AnnotationFile::from_dataset(dataset))?;
    write_atomic(path, &bytes).map_err(|source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn fixture() -> DetectionDataset {
        DetectionDataset {
            categories: vec![
                Category {
                    id: 1,
                    name: "frog".into(),
                },
                Category {
                    id: 4,
                    name: "owl".into(),
                },
            ],
            samples: vec![
                Sample {
                    image_id: 7,
                    image_path: "a.png".into(),
                    width: 300,
                    height: 300,
                    labels: vec![LabeledBox {
                        bbox: BBox::from_xywh(10.0, 20.0, 100.0, 200.0).unwrap(),
                        category_id: 4,
                        review: true,
                    }],
                    split: Split::Test,
                },
                Sample {
                    image_id: 9,
                    image_path: "b.png".into(),
                    width: 64,
                    height: 32,
                    labels: vec![],
                    split: Split::Train,
                },
            ],
        }
    }

    #[test]
    fn round_trip_through_disk() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ann.json");
        let ds = fixture();
        write_annotations(&ds, &path).unwrap();
        assert_eq!(read_annotations(&path).unwrap(), ds);
    }

    #[test]
    fn xywh_on_disk() {
        let text = r#"{"images":[{"id":1,"file_name":"x.png","width":300,"height":300}],
            "annotations":[{"id":5,"image_id":1,"category_id":2,"bbox":[10,20,100,200]}],
            "categories":[{"id":2,"name":"crab"}]}"#;
        let ds = serde_json::from_str::<AnnotationFile>(text)
            .unwrap()
            .into_dataset()
            .unwrap();
        let l = &ds.samples[0].labels[0];
        assert_eq!(l.bbox, BBox::new(10.0, 20.0, 110.0, 220.0).unwrap());
        assert!(!l.review);
        assert_eq!(ds.samples[0].split, Split::Train);
    }

    fn parse(text: &str) -> Result<DetectionDataset, DatasetError> {
        serde_json::from_str::<AnnotationFile>(text)?.into_dataset()
    }

    #[test]
    fn unknown_category_names_record() {
        let err = parse(
            r#"{"images":[{"id":1,"file_name":"x.png","width":30,"height":30}],
            "annotations":[{"id":3,"image_id":1,"category_id":99,"bbox":[0,0,5,5]}],
            "categories":[{"id":1,"name":"crab"}]}"#,
        )
        .unwrap_err();
        assert!(matches!(
            err,
            DatasetError::UnknownCategory {
                annotation_id: 3,
                category_id: 99
            }
        ));
        assert!(err.to_string().contains("unknown category"));
    }

    #[test]
    fn out_of_image_box() {
        let err = parse(
            r#"{"images":[{"id":1,"file_name":"x.png","width":30,"height":30}],
            "annotations":[{"id":8,"image_id":1,"category_id":1,"bbox":[20,0,20,5]}],
            "categories":[{"id":1,"name":"crab"}]}"#,
        )
        .unwrap_err();
        assert!(matches!(
            err,
            DatasetError::BoxOutOfImage {
                annotation_id: 8,
                ..
            }
        ));
    }

    #[test]
    fn missing_field_and_garbage() {
        let err = parse(
            r#"{"images":[{"id":1,"width":30,"height":30}],"annotations":[],"categories":[]}"#,
        )
        .unwrap_err();
        assert!(matches!(err, DatasetError::Json(_)));
        assert!(err.to_string().contains("file_name"));
        assert!(matches!(parse("{not json"), Err(DatasetError::Json(_))));
    }

    #[test]
    fn degenerate_box_rejected() {
        let err = parse(
            r#"{"images":[{"id":1,"file_name":"x.png","width":30,"height":30}],
            "annotations":[{"id":2,"image_id":1,"category_id":1,"bbox":[1,1,0,5]}],
            "categories":[{"id":1,"name":"crab"}]}"#,
        )
        .unwrap_err();
        assert!(matches!(
            err,
            DatasetError::InvalidBox {
                annotation_id: 2,
                ..
            }
        ));
    }

    proptest! {
        #[test]
        fn corner_xywh_round_trip(x in 0.0..1e4f64, y in 0.0..1e4f64, w in 1e-3..1e4f64, h in 1e-3..1e4f64) {
            let b = BBox::from_xywh(x, y, w, h).unwrap();
            let [x2, y2, w2, h2] = b.to_xywh();
            let c = BBox::from_xywh(x2, y2, w2, h2).unwrap();
            for (u, v) in b.corners().iter().zip(c.corners()) {
                prop_assert!((u - v).abs() <= 1e-9);
            }
            prop_assert!((w2 - w).abs() <= 1e-9 && (h2 - h).abs() <= 1e-9);
        }
    }
}
