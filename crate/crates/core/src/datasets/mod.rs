//! Ground truth and prediction containers, COCO JSON I/O, splitting and
//! checkpoint sweeps.

mod coco;
mod split;
mod sweep;

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Annotation, Detection};

pub use coco::{
    gt_to_coco, load_gt, load_predictions, parse_gt, parse_predictions, predictions_to_coco,
    write_gt, write_predictions, CocoAnnotation, CocoCategory, CocoGt, CocoImage, CocoResult,
};
pub use split::{split, SplitSpec};
pub use sweep::{natural_cmp, sweep, sweep_sets, SweepPoint, SweepResult, SWEEP_CSV_HEADER};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageInfo {
    pub id: u64,
    pub width: u32,
    pub height: u32,
    pub file_name: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Category {
    pub id: u64,
    pub name: String,
    pub supercategory: Option<String>,
}

/// Validated ground truth with normalized boxes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetGT {
    pub images: Vec<ImageInfo>,
    pub annotations: Vec<Annotation>,
    pub categories: Vec<Category>,
}

impl DatasetGT {
    pub fn new(
        images: Vec<ImageInfo>,
        annotations: Vec<Annotation>,
        categories: Vec<Category>,
    ) -> Result<Self> {
        let gt = DatasetGT {
            images,
            annotations,
            categories,
        };
        gt.validate()?;
        Ok(gt)
    }

    pub fn validate(&self) -> Result<()> {
        let mut image_ids = HashSet::new();
        for img in &self.images {
            if img.width == 0 || img.height == 0 {
                return Err(Error::Validation(format!(
                    "image {} has non-positive dimensions {}x{}",
                    img.id, img.width, img.height
                )));
            }
            if !image_ids.insert(img.id) {
                return Err(Error::Validation(format!("duplicate image id {}", img.id)));
            }
        }
        let mut category_ids = HashSet::new();
        for c in &self.categories {
            if !category_ids.insert(c.id) {
                return Err(Error::Validation(format!("duplicate category id {}", c.id)));
            }
        }
        let mut annotation_ids = HashSet::new();
        for a in &self.annotations {
            if !annotation_ids.insert(a.annotation_id) {
                return Err(Error::Validation(format!(
                    "duplicate annotation id {}",
                    a.annotation_id
                )));
            }
            if !image_ids.contains(&a.image_id) {
                return Err(Error::Validation(format!(
                    "annotation {} references unknown image id {}",
                    a.annotation_id, a.image_id
                )));
            }
            if !category_ids.contains(&a.category_id) {
                return Err(Error::Validation(format!(
                    "annotation {} references unknown category id {}",
                    a.annotation_id, a.category_id
                )));
            }
            if a.bbox.is_degenerate() {
                return Err(Error::Validation(format!(
                    "annotation {} has an empty box after clipping to its image",
                    a.annotation_id
                )));
            }
        }
        Ok(())
    }

    pub fn image(&self, id: u64) -> Option<&ImageInfo> {
        self.images.iter().find(|i| i.id == id)
    }

    pub fn image_index(&self) -> HashMap<u64, &ImageInfo> {
        self.images.iter().map(|i| (i.id, i)).collect()
    }

    /// Keeps the given images (in their original order) and their annotations.
    pub fn subset(&self, keep: &HashSet<u64>) -> DatasetGT {
        DatasetGT {
            images: self
                .images
                .iter()
                .filter(|i| keep.contains(&i.id))
                .cloned()
                .collect(),
            annotations: self
                .annotations
                .iter()
                .filter(|a| keep.contains(&a.image_id))
                .cloned()
                .collect(),
            categories: self.categories.clone(),
        }
    }
}

/// Detections of one model over a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionSet {
    /// Model label, usually the file stem.
    pub model: String,
    pub detections: Vec<Detection>,
}

impl PredictionSet {
    pub fn with_model_id(mut self, model_id: usize) -> Self {
        for d in &mut self.detections {
            d.model_id = model_id;
        }
        self
    }
}
