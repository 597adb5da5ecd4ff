//! COCO object-detection JSON (ground truth) and COCO results JSON (predictions).

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Category, DatasetGT, ImageInfo, PredictionSet};
use crate::error::{Error, Result};
use crate::geometry::{Annotation, BBox, Detection};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CocoGt {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub info: Option<serde_json::Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub licenses: Option<serde_json::Value>,
    pub images: Vec<CocoImage>,
    pub annotations: Vec<CocoAnnotation>,
    pub categories: Vec<CocoCategory>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CocoImage {
    pub id: u64,
    pub width: u32,
    pub height: u32,
    pub file_name: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CocoAnnotation {
    pub id: u64,
    pub image_id: u64,
    pub category_id: u64,
    pub bbox: [f64; 4],
    #[serde(default)]
    pub area: Option<f64>,
    #[serde(default)]
    pub iscrowd: Option<u8>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CocoCategory {
    pub id: u64,
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub supercategory: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CocoResult {
    pub image_id: u64,
    pub category_id: u64,
    pub bbox: [f64; 4],
    pub score: f64,
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

pub fn load_gt(path: impl AsRef<Path>) -> Result<DatasetGT> {
    let path = path.as_ref();
    parse_gt(&read(path)?).map_err(|e| match e {
        Error::Validation(m) => Error::Validation(format!("{}: {m}", path.display())),
        other => other,
    })
}

/// Parses and validates a COCO ground-truth document.
pub fn parse_gt(text: &str) -> Result<DatasetGT> {
    let coco: CocoGt = serde_json::from_str(text).map_err(|e| Error::Validation(e.to_string()))?;

    let images: Vec<ImageInfo> = coco
        .images
        .iter()
        .map(|i| ImageInfo {
            id: i.id,
            width: i.width,
            height: i.height,
            file_name: i.file_name.clone(),
        })
        .collect();
    let categories = coco
        .categories
        .iter()
        .map(|c| Category {
            id: c.id,
            name: c.name.clone(),
            supercategory: c.supercategory.clone(),
        })
        .collect();

    // Dimension checks must precede box normalization.
    if let Some(bad) = images.iter().find(|i| i.width == 0 || i.height == 0) {
        return Err(Error::Validation(format!(
            "image {} has non-positive dimensions {}x{}",
            bad.id, bad.width, bad.height
        )));
    }
    let dims: HashMap<u64, (f64, f64)> = images
        .iter()
        .map(|i| (i.id, (i.width as f64, i.height as f64)))
        .collect();

    let mut annotations = Vec::with_capacity(coco.annotations.len());
    for a in &coco.annotations {
        let &(w, h) = dims.get(&a.image_id).ok_or_else(|| {
            Error::Validation(format!(
                "annotation {} references unknown image id {}",
                a.id, a.image_id
            ))
        })?;
        let [x, y, bw, bh] = a.bbox;
        let bbox = BBox::from_abs_xywh(x, y, bw, bh, w, h)
            .map_err(|e| Error::Validation(format!("annotation {}: {e}", a.id)))?;
        annotations.push(Annotation {
            bbox,
            category_id: a.category_id,
            image_id: a.image_id,
            annotation_id: a.id,
        });
    }
    DatasetGT::new(images, annotations, categories)
}

/// Converts back to COCO JSON with absolute `[x, y, w, h]` boxes.
pub fn gt_to_coco(gt: &DatasetGT) -> CocoGt {
    let dims: HashMap<u64, (f64, f64)> = gt
        .images
        .iter()
        .map(|i| (i.id, (i.width as f64, i.height as f64)))
        .collect();
    CocoGt {
        info: None,
        licenses: None,
        images: gt
            .images
            .iter()
            .map(|i| CocoImage {
                id: i.id,
                width: i.width,
                height: i.height,
                file_name: i.file_name.clone(),
            })
            .collect(),
        annotations: gt
            .annotations
            .iter()
            .map(|a| {
                let (w, h) = dims[&a.image_id];
                let bbox = abs_xywh(&a.bbox, w, h);
                CocoAnnotation {
                    id: a.annotation_id,
                    image_id: a.image_id,
                    category_id: a.category_id,
                    bbox,
                    area: Some(bbox[2] * bbox[3]),
                    iscrowd: Some(0),
                }
            })
            .collect(),
        categories: gt
            .categories
            .iter()
            .map(|c| CocoCategory {
                id: c.id,
                name: c.name.clone(),
                supercategory: c.supercategory.clone(),
            })
            .collect(),
    }
}

pub fn write_gt(path: impl AsRef<Path>, gt: &DatasetGT) -> Result<()> {
    let text = serde_json::to_string_pretty(&gt_to_coco(gt)).expect("ground truth serializes");
    write(path.as_ref(), &text)
}

fn abs_xywh(b: &BBox, w: f64, h: f64) -> [f64; 4] {
    let x = b.x1 * w;
    let y = b.y1 * h;
    [x, y, b.x2 * w - x, b.y2 * h - y]
}

/// Loads a COCO results file. The model label is the file stem.
pub fn load_predictions(path: impl AsRef<Path>, gt: &DatasetGT) -> Result<PredictionSet> {
    let path = path.as_ref();
    let label = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    parse_predictions(&read(path)?, gt, &label).map_err(|e| match e {
        Error::Validation(m) => Error::Validation(format!("{}: {m}", path.display())),
        other => other,
    })
}

/// Parses a COCO results array against the ground truth it refers to.
///
/// All unknown image and category ids are collected into a single error.
pub fn parse_predictions(text: &str, gt: &DatasetGT, label: &str) -> Result<PredictionSet> {
    let records: Vec<CocoResult> =
        serde_json::from_str(text).map_err(|e| Error::Validation(e.to_string()))?;
    let images = gt.image_index();
    let categories: HashSet<u64> = gt.categories.iter().map(|c| c.id).collect();

    let mut unknown_images = BTreeSet::new();
    let mut unknown_categories = BTreeSet::new();
    let mut detections = Vec::with_capacity(records.len());
    for (i, r) in records.iter().enumerate() {
        if !(r.score.is_finite() && (0.0..=1.0).contains(&r.score)) {
            return Err(Error::Validation(format!(
                "record {i}: score {} outside [0, 1]",
                r.score
            )));
        }
        if !categories.contains(&r.category_id) {
            unknown_categories.insert(r.category_id);
        }
        let Some(img) = images.get(&r.image_id) else {
            unknown_images.insert(r.image_id);
            continue;
        };
        let [x, y, w, h] = r.bbox;
        let bbox = BBox::from_abs_xywh(x, y, w, h, img.width as f64, img.height as f64)
            .map_err(|e| Error::Validation(format!("record {i}: {e}")))?;
        detections.push(Detection {
            bbox,
            score: r.score,
            category_id: r.category_id,
            image_id: r.image_id,
            model_id: 0,
            source_index: i,
        });
    }
    let mut problems = Vec::new();
    if !unknown_images.is_empty() {
        problems.push(format!("unknown image ids {unknown_images:?}"));
    }
    if !unknown_categories.is_empty() {
        problems.push(format!("unknown category ids {unknown_categories:?}"));
    }
    if !problems.is_empty() {
        return Err(Error::Validation(problems.join("; ")));
    }
    Ok(PredictionSet {
        model: label.to_string(),
        detections,
    })
}

pub fn predictions_to_coco(set: &PredictionSet, gt: &DatasetGT) -> Result<Vec<CocoResult>> {
    let images = gt.image_index();
    set.detections
        .iter()
        .map(|d| {
            let img = images.get(&d.image_id).ok_or_else(|| {
                Error::Validation(format!(
                    "detection references unknown image id {}",
                    d.image_id
                ))
            })?;
            Ok(CocoResult {
                image_id: d.image_id,
                category_id: d.category_id,
                bbox: abs_xywh(&d.bbox, img.width as f64, img.height as f64),
                score: d.score,
            })
        })
        .collect()
}

pub fn write_predictions(
    path: impl AsRef<Path>,
    set: &PredictionSet,
    gt: &DatasetGT,
) -> Result<()> {
    let records = predictions_to_coco(set, gt)?;
    let text = serde_json::to_string_pretty(&records).expect("results serialize");
    write(path.as_ref(), &text)
}
