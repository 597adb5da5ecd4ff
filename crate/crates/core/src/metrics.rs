//! COCO-style box detection metrics.
//!
//! Follows the usual conventions: ten IoU thresholds 0.50:0.05:0.95,
//! 101-point interpolated precision, at most 100 detections per image and
//! category, no area ranges and no crowd regions. Reported values are on the
//! ×100 scale.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datasets::{DatasetGT, PredictionSet};
use crate::error::{Error, Result};
use crate::geometry::{Annotation, Detection};

pub const IOU_THRESHOLDS: [f64; 10] = [0.50, 0.55, 0.60, 0.65, 0.70, 0.75, 0.80, 0.85, 0.90, 0.95];

/// Detections kept per image and category, highest scores first.
pub const MAX_DETECTIONS: usize = 100;

const RECALL_POINTS: usize = 101;

/// The four headline numbers, ×100.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Metrics {
    pub ap_50_95: f64,
    pub ap_50: f64,
    pub ap_75: f64,
    pub ar_50_95: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct EvalCounts {
    pub images: usize,
    pub gt_boxes: usize,
    pub detections: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub ap_50_95: f64,
    pub ap_50: f64,
    pub ap_75: f64,
    pub ar_50_95: f64,
    pub per_category: BTreeMap<u64, Metrics>,
    pub counts: EvalCounts,
    /// Non-fatal findings, e.g. predicted categories without ground truth.
    pub warnings: Vec<String>,
}

impl EvalReport {
    pub fn metrics(&self) -> Metrics {
        Metrics {
            ap_50_95: self.ap_50_95,
            ap_50: self.ap_50,
            ap_75: self.ap_75,
            ar_50_95: self.ar_50_95,
        }
    }
}

/// Precision/recall after each detection of a score-descending sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PRCurve {
    pub iou_threshold: f64,
    /// `(recall, precision)` pairs; recall is non-decreasing.
    pub points: Vec<(f64, f64)>,
}

impl PRCurve {
    /// Builds the curve from TP flags already in score-descending order.
    pub fn from_flags(iou_threshold: f64, tp_flags: &[bool], n_gt: usize) -> Self {
        let mut tp = 0usize;
        let points = tp_flags
            .iter()
            .enumerate()
            .map(|(i, &hit)| {
                tp += hit as usize;
                let recall = if n_gt == 0 {
                    0.0
                } else {
                    tp as f64 / n_gt as f64
                };
                (recall, tp as f64 / (i + 1) as f64)
            })
            .collect();
        PRCurve {
            iou_threshold,
            points,
        }
    }

    pub fn final_recall(&self) -> f64 {
        self.points.last().map_or(0.0, |p| p.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Match {
    /// Index into the detection slice passed to [`match_detections`].
    pub detection: usize,
    /// Index into the ground-truth slice, when matched.
    pub gt: Option<usize>,
}

fn score_order(dets: &[Detection]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| {
        dets[b]
            .score
            .total_cmp(&dets[a].score)
            .then(dets[a].source_index.cmp(&dets[b].source_index))
    });
    order
}

/// Greedy one-to-one matching; `ious[d][g]` rows are already in processing order.
fn greedy(ious: &[Vec<f64>], n_gt: usize, iou_thr: f64) -> Vec<Option<usize>> {
    let mut taken = vec![false; n_gt];
    ious.iter()
        .map(|row| {
            let mut best: Option<(usize, f64)> = None;
            for (g, &v) in row.iter().enumerate() {
                if taken[g] || v < iou_thr || v <= 0.0 {
                    continue;
                }
                if best.is_none_or(|(_, b)| v > b) {
                    best = Some((g, v));
                }
            }
            best.map(|(g, _)| {
                taken[g] = true;
                g
            })
        })
        .collect()
}

/// Matches one image/category's detections to its ground truth.
///
/// Detections are visited by descending score (ties by `source_index`); each
/// takes the unmatched ground-truth box with the highest IoU `>= iou_thr`.
/// The result is in visiting order.
pub fn match_detections(dets: &[Detection], gts: &[Annotation], iou_thr: f64) -> Vec<Match> {
    let order = score_order(dets);
    let ious: Vec<Vec<f64>> = order
        .iter()
        .map(|&d| gts.iter().map(|g| dets[d].bbox.iou(&g.bbox)).collect())
        .collect();
    greedy(&ious, gts.len(), iou_thr)
        .into_iter()
        .zip(order)
        .map(|(gt, detection)| Match { detection, gt })
        .collect()
}

/// 101-point interpolated average precision in `[0, 1]`.
pub fn average_precision(curve: &PRCurve) -> f64 {
    if curve.points.is_empty() {
        return 0.0;
    }
    // Precision envelope: best precision at this recall or beyond.
    let mut envelope: Vec<f64> = curve.points.iter().map(|p| p.1).collect();
    for i in (0..envelope.len().saturating_sub(1)).rev() {
        envelope[i] = envelope[i].max(envelope[i + 1]);
    }
    let total: f64 = (0..RECALL_POINTS)
        .map(|k| {
            let r = k as f64 / (RECALL_POINTS - 1) as f64;
            let idx = curve.points.partition_point(|p| p.0 < r);
            envelope.get(idx).copied().unwrap_or(0.0)
        })
        .sum();
    total / RECALL_POINTS as f64
}

/// One image/category cell: truncated detections in score order and their IoUs.
struct Cell {
    image_id: u64,
    scores: Vec<f64>,
    source_indices: Vec<usize>,
    ious: Vec<Vec<f64>>,
    n_gt: usize,
}

/// Evaluates a prediction set against ground truth.
pub fn evaluate(gt: &DatasetGT, preds: &PredictionSet) -> Result<EvalReport> {
    let image_ids: BTreeSet<u64> = gt.images.iter().map(|i| i.id).collect();
    let unknown: BTreeSet<u64> = preds
        .detections
        .iter()
        .map(|d| d.image_id)
        .filter(|id| !image_ids.contains(id))
        .collect();
    if !unknown.is_empty() {
        return Err(Error::Validation(format!(
            "predictions reference unknown image ids {unknown:?}"
        )));
    }

    let mut gt_by_cell: BTreeMap<(u64, u64), Vec<&Annotation>> = BTreeMap::new();
    for a in &gt.annotations {
        gt_by_cell
            .entry((a.category_id, a.image_id))
            .or_default()
            .push(a);
    }
    let mut det_by_cell: HashMap<(u64, u64), Vec<Detection>> = HashMap::new();
    for d in &preds.detections {
        det_by_cell
            .entry((d.category_id, d.image_id))
            .or_default()
            .push(d.clone());
    }

    let gt_categories: BTreeSet<u64> = gt.annotations.iter().map(|a| a.category_id).collect();
    let mut warnings = Vec::new();
    let stray: BTreeSet<u64> = preds
        .detections
        .iter()
        .map(|d| d.category_id)
        .filter(|c| !gt_categories.contains(c))
        .collect();
    for c in &stray {
        warnings.push(format!(
            "category {c} has predictions but no ground truth; its detections only count as false positives"
        ));
    }
    if gt_categories.is_empty() {
        warnings.push("ground truth has no annotations; all metrics are reported as 0".into());
    }

    let mut cells: BTreeMap<u64, Vec<Cell>> = BTreeMap::new();
    for &cat in &gt_categories {
        let mut per_cat = Vec::new();
        for &img in &image_ids {
            let gts: Vec<&Annotation> = gt_by_cell.get(&(cat, img)).cloned().unwrap_or_default();
            let dets = det_by_cell
                .get(&(cat, img))
                .map(Vec::as_slice)
                .unwrap_or(&[]);
            if gts.is_empty() && dets.is_empty() {
                continue;
            }
            let mut order = score_order(dets);
            order.truncate(MAX_DETECTIONS);
            per_cat.push(Cell {
                image_id: img,
                scores: order.iter().map(|&d| dets[d].score).collect(),
                source_indices: order.iter().map(|&d| dets[d].source_index).collect(),
                ious: order
                    .iter()
                    .map(|&d| gts.iter().map(|g| dets[d].bbox.iou(&g.bbox)).collect())
                    .collect(),
                n_gt: gts.len(),
            });
        }
        cells.insert(cat, per_cat);
    }

    let work: Vec<(u64, usize)> = gt_categories
        .iter()
        .flat_map(|&c| (0..IOU_THRESHOLDS.len()).map(move |t| (c, t)))
        .collect();
    let results: Vec<(f64, f64)> = work
        .par_iter()
        .map(|&(cat, t)| {
            let curve = category_curve(&cells[&cat], IOU_THRESHOLDS[t]);
            (average_precision(&curve), curve.final_recall())
        })
        .collect();

    let mut per_category = BTreeMap::new();
    let n_t = IOU_THRESHOLDS.len();
    for (k, &cat) in gt_categories.iter().enumerate() {
        let slice = &results[k * n_t..(k + 1) * n_t];
        per_category.insert(
            cat,
            Metrics {
                ap_50_95: 100.0 * mean(slice.iter().map(|r| r.0)),
                ap_50: 100.0 * slice[0].0,
                ap_75: 100.0 * slice[5].0,
                ar_50_95: 100.0 * mean(slice.iter().map(|r| r.1)),
            },
        );
    }
    let cat_mean = |f: fn(&Metrics) -> f64| mean(per_category.values().map(f));

    Ok(EvalReport {
        ap_50_95: cat_mean(|m| m.ap_50_95),
        ap_50: cat_mean(|m| m.ap_50),
        ap_75: cat_mean(|m| m.ap_75),
        ar_50_95: cat_mean(|m| m.ar_50_95),
        per_category,
        counts: EvalCounts {
            images: gt.images.len(),
            gt_boxes: gt.annotations.len(),
            detections: preds.detections.len(),
        },
        warnings,
    })
}

fn category_curve(cells: &[Cell], iou_thr: f64) -> PRCurve {
    let mut pooled: Vec<(f64, u64, usize, bool)> = Vec::new();
    let mut n_gt = 0;
    for cell in cells {
        n_gt += cell.n_gt;
        let matched = greedy(&cell.ious, cell.n_gt, iou_thr);
        for (i, m) in matched.iter().enumerate() {
            pooled.push((
                cell.scores[i],
                cell.image_id,
                cell.source_indices[i],
                m.is_some(),
            ));
        }
    }
    pooled.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let flags: Vec<bool> = pooled.iter().map(|p| p.3).collect();
    PRCurve::from_flags(iou_thr, &flags, n_gt)
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Tuning objective: AP@[.5:.95] + AR@[.5:.95], both ×100.
pub fn objective(report: &EvalReport) -> f64 {
    report.ap_50_95 + report.ar_50_95
}
