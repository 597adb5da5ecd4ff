//! Weighted Boxes Fusion.
//!
//! Detections from several models are pooled per image and category, sorted by
//! weighted confidence and greedily clustered by IoU against each cluster's
//! running fused box. Each cluster is replaced by the confidence-weighted mean
//! box; its score is the mean weighted confidence, scaled down when fewer
//! models than available voted for it.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datasets::PredictionSet;
use crate::error::{Error, Result};
use crate::geometry::{BBox, Detection};

/// `model_id` carried by fused detections.
pub const ENSEMBLE_MODEL_ID: usize = usize::MAX;

/// Model label of a fused prediction set.
pub const ENSEMBLE_LABEL: &str = "ensemble";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleConfig {
    /// One positive weight per model, in model order.
    pub weights: Vec<f64>,
    /// Minimum IoU (exclusive) for a box to join a cluster.
    pub iou_threshold: f64,
    /// Detections with a raw score below this are dropped before fusion.
    pub skip_threshold: f64,
}

impl EnsembleConfig {
    pub fn new(weights: Vec<f64>, iou_threshold: f64, skip_threshold: f64) -> Result<Self> {
        let config = EnsembleConfig {
            weights,
            iou_threshold,
            skip_threshold,
        };
        config.validate()?;
        Ok(config)
    }

    /// Equal weights, IoU threshold 0.55, no skipping.
    pub fn baseline(n_models: usize) -> Self {
        EnsembleConfig {
            weights: vec![1.0; n_models],
            iou_threshold: 0.55,
            skip_threshold: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.weights.is_empty() {
            return Err(Error::Config(
                "at least one model weight is required".into(),
            ));
        }
        if let Some(w) = self.weights.iter().find(|w| !(**w > 0.0 && w.is_finite())) {
            return Err(Error::Config(format!("weights must be positive, got {w}")));
        }
        if !(self.iou_threshold > 0.0 && self.iou_threshold < 1.0) {
            return Err(Error::Config(format!(
                "iou threshold must lie in (0, 1), got {}",
                self.iou_threshold
            )));
        }
        if !(self.skip_threshold >= 0.0 && self.skip_threshold < 1.0) {
            return Err(Error::Config(format!(
                "skip threshold must lie in [0, 1), got {}",
                self.skip_threshold
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusedDetection {
    pub bbox: BBox,
    pub score: f64,
    pub category_id: u64,
    pub cluster_size: usize,
    /// `(model index, source_index)` of every member, in joining order.
    pub member_ids: Vec<(usize, usize)>,
}

/// Scales weights so that their arithmetic mean is one.
pub fn normalize_weights(weights: &[f64]) -> Result<Vec<f64>> {
    if weights.is_empty() {
        return Err(Error::Input("weights must not be empty".into()));
    }
    if let Some(w) = weights.iter().find(|w| !(**w > 0.0 && w.is_finite())) {
        return Err(Error::Input(format!("weights must be positive, got {w}")));
    }
    let mean = weights.iter().sum::<f64>() / weights.len() as f64;
    Ok(weights.iter().map(|w| w / mean).collect())
}

struct Candidate<'a> {
    det: &'a Detection,
    model: usize,
    effective: f64,
}

struct Cluster<'a> {
    members: Vec<&'a Candidate<'a>>,
    bbox: BBox,
    score_sum: f64,
}

impl<'a> Cluster<'a> {
    fn open(first: &'a Candidate<'a>) -> Self {
        Cluster {
            members: vec![first],
            bbox: first.det.bbox,
            score_sum: first.effective,
        }
    }

    fn push(&mut self, c: &'a Candidate<'a>) {
        self.members.push(c);
        self.score_sum += c.effective;
        // All-zero confidences fall back to an unweighted mean.
        let uniform = self.score_sum <= 0.0;
        let (mut x1, mut y1, mut x2, mut y2, mut s) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for m in &self.members {
            let w = if uniform { 1.0 } else { m.effective };
            x1 += w * m.det.bbox.x1;
            y1 += w * m.det.bbox.y1;
            x2 += w * m.det.bbox.x2;
            y2 += w * m.det.bbox.y2;
            s += w;
        }
        self.bbox = BBox::new(x1 / s, y1 / s, x2 / s, y2 / s);
    }
}

fn rank(a: &Candidate, b: &Candidate) -> Ordering {
    b.effective
        .total_cmp(&a.effective)
        .then(a.model.cmp(&b.model))
        .then(a.det.source_index.cmp(&b.det.source_index))
}

/// Fuses the detections of every model for a single image.
///
/// `per_model[m]` holds model `m`'s detections; the position in the slice, not
/// `Detection::model_id`, selects the weight.
pub fn fuse_image(
    per_model: &[Vec<Detection>],
    config: &EnsembleConfig,
) -> Result<Vec<FusedDetection>> {
    config.validate()?;
    if per_model.len() != config.weights.len() {
        return Err(Error::Config(format!(
            "{} weights given for {} models",
            config.weights.len(),
            per_model.len()
        )));
    }
    let image_ids: BTreeSet<u64> = per_model.iter().flatten().map(|d| d.image_id).collect();
    if image_ids.len() > 1 {
        return Err(Error::Input(format!(
            "fuse_image received detections from several images: {image_ids:?}"
        )));
    }

    let weights = normalize_weights(&config.weights)?;
    let n_models = per_model.len();

    let mut by_category: BTreeMap<u64, Vec<Candidate>> = BTreeMap::new();
    for (model, dets) in per_model.iter().enumerate() {
        for det in dets.iter().filter(|d| d.score >= config.skip_threshold) {
            by_category
                .entry(det.category_id)
                .or_default()
                .push(Candidate {
                    det,
                    model,
                    effective: det.score * weights[model],
                });
        }
    }

    let mut out = Vec::new();
    for (&category_id, candidates) in by_category.iter_mut() {
        candidates.sort_by(rank);
        let mut clusters: Vec<Cluster> = Vec::new();
        for cand in candidates.iter() {
            let mut best: Option<(usize, f64)> = None;
            for (idx, cluster) in clusters.iter().enumerate() {
                let overlap = cluster.bbox.iou(&cand.det.bbox);
                if overlap > config.iou_threshold && best.is_none_or(|(_, b)| overlap > b) {
                    best = Some((idx, overlap));
                }
            }
            match best {
                Some((idx, _)) => clusters[idx].push(cand),
                None => clusters.push(Cluster::open(cand)),
            }
        }
        for cluster in clusters {
            let size = cluster.members.len();
            let mean = cluster.score_sum / size as f64;
            let score = (mean * size.min(n_models) as f64 / n_models as f64).clamp(0.0, 1.0);
            out.push(FusedDetection {
                bbox: cluster.bbox,
                score,
                category_id,
                cluster_size: size,
                member_ids: cluster
                    .members
                    .iter()
                    .map(|m| (m.model, m.det.source_index))
                    .collect(),
            });
        }
    }

    out.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then(a.member_ids[0].cmp(&b.member_ids[0]))
            .then(a.category_id.cmp(&b.category_id))
    });
    Ok(out)
}

/// Fuses whole prediction sets image by image.
///
/// Output images appear in ascending id order; within an image, detections
/// follow [`fuse_image`] order. `source_index` is renumbered to the output
/// position.
pub fn fuse_dataset(
    per_model_sets: &[PredictionSet],
    config: &EnsembleConfig,
) -> Result<PredictionSet> {
    config.validate()?;
    if per_model_sets.len() != config.weights.len() {
        return Err(Error::Config(format!(
            "{} weights given for {} prediction sets",
            config.weights.len(),
            per_model_sets.len()
        )));
    }

    let mut grouped: BTreeMap<u64, Vec<Vec<Detection>>> = BTreeMap::new();
    for (model, set) in per_model_sets.iter().enumerate() {
        for det in &set.detections {
            grouped
                .entry(det.image_id)
                .or_insert_with(|| vec![Vec::new(); per_model_sets.len()])[model]
                .push(det.clone());
        }
    }

    let per_image: Vec<(u64, Vec<FusedDetection>)> = grouped
        .into_par_iter()
        .map(|(image_id, dets)| fuse_image(&dets, config).map(|f| (image_id, f)))
        .collect::<Result<_>>()?;

    let detections = per_image
        .into_iter()
        .flat_map(|(image_id, fused)| fused.into_iter().map(move |f| (image_id, f)))
        .enumerate()
        .map(|(i, (image_id, f))| Detection {
            bbox: f.bbox,
            score: f.score,
            category_id: f.category_id,
            image_id,
            model_id: ENSEMBLE_MODEL_ID,
            source_index: i,
        })
        .collect();

    Ok(PredictionSet {
        model: ENSEMBLE_LABEL.to_string(),
        detections,
    })
}
