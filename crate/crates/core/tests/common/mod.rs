//! Independent reference implementations and synthetic fixtures shared by the
//! integration suites. Nothing here calls into the code paths it checks.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sarstack::datasets::{Category, DatasetGT, ImageInfo, PredictionSet};
use sarstack::{Annotation, BBox, Detection};

// ---------------------------------------------------------------------------
// Weighted Boxes Fusion, traced literally.
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct TracedCluster {
    pub bbox: [f64; 4],
    pub score: f64,
    pub category: u64,
    pub members: Vec<(usize, usize)>,
}

fn plain_iou(a: [f64; 4], b: [f64; 4]) -> f64 {
    let w = (a[2].min(b[2]) - a[0].max(b[0])).max(0.0);
    let h = (a[3].min(b[3]) - a[1].max(b[1])).max(0.0);
    let inter = w * h;
    let ua = (a[2] - a[0]) * (a[3] - a[1]) + (b[2] - b[0]) * (b[3] - b[1]) - inter;
    if inter <= 0.0 || ua <= 0.0 {
        0.0
    } else {
        inter / ua
    }
}

/// Straight-line trace of the fusion procedure over one image.
pub fn wbf_trace(
    per_model: &[Vec<Detection>],
    weights: &[f64],
    iou_thr: f64,
    skip_thr: f64,
) -> Vec<TracedCluster> {
    let n = weights.len() as f64;
    let mean_w: f64 = weights.iter().sum::<f64>() / n;

    // (effective, model, source_index, category, box)
    let mut pool: Vec<(f64, usize, usize, u64, [f64; 4])> = Vec::new();
    for (m, dets) in per_model.iter().enumerate() {
        for d in dets {
            if d.score < skip_thr {
                continue;
            }
            let w = weights[m] / mean_w;
            pool.push((
                d.score * w,
                m,
                d.source_index,
                d.category_id,
                [d.bbox.x1, d.bbox.y1, d.bbox.x2, d.bbox.y2],
            ));
        }
    }
    // Sort by category first, then the fusion order. Clusters of different
    // categories are kept in one list and filtered during matching.
    pool.sort_by(|a, b| {
        a.3.cmp(&b.3)
            .then(b.0.partial_cmp(&a.0).unwrap())
            .then(a.1.cmp(&b.1))
            .then(a.2.cmp(&b.2))
    });

    struct C {
        category: u64,
        members: Vec<(f64, usize, usize, [f64; 4])>,
        bbox: [f64; 4],
    }
    let mut clusters: Vec<C> = Vec::new();
    for (eff, m, idx, cat, bx) in pool {
        let mut chosen: Option<usize> = None;
        let mut chosen_iou = -1.0;
        for (ci, c) in clusters.iter().enumerate() {
            if c.category != cat {
                continue;
            }
            let v = plain_iou(c.bbox, bx);
            if v > iou_thr && v > chosen_iou {
                chosen = Some(ci);
                chosen_iou = v;
            }
        }
        let ci = match chosen {
            Some(ci) => ci,
            None => {
                clusters.push(C {
                    category: cat,
                    members: vec![],
                    bbox: bx,
                });
                clusters.len() - 1
            }
        };
        let c = &mut clusters[ci];
        c.members.push((eff, m, idx, bx));
        if c.members.len() > 1 {
            let total: f64 = c.members.iter().map(|t| t.0).sum();
            let mut acc = [0.0; 4];
            for t in &c.members {
                let w = if total > 0.0 { t.0 } else { 1.0 };
                for (a, v) in acc.iter_mut().zip(t.3) {
                    *a += w * v;
                }
            }
            let denom = if total > 0.0 {
                total
            } else {
                c.members.len() as f64
            };
            c.bbox = acc.map(|v| (v / denom).clamp(0.0, 1.0));
        }
    }

    let mut out: Vec<TracedCluster> = clusters
        .into_iter()
        .map(|c| {
            let t = c.members.len() as f64;
            let raw = c.members.iter().map(|m| m.0).sum::<f64>() / t;
            TracedCluster {
                bbox: c.bbox,
                score: (raw * t.min(n) / n).clamp(0.0, 1.0),
                category: c.category,
                members: c.members.iter().map(|m| (m.1, m.2)).collect(),
            }
        })
        .collect();
    out.sort_by(|a, b| {
        b.score
            .partial_cmp(&a.score)
            .unwrap()
            .then(a.members[0].cmp(&b.members[0]))
            .then(a.category.cmp(&b.category))
    });
    out
}

/// Random per-image instance: up to `max_models` models, up to `max_dets`
/// detections each, boxes jittered around a few shared anchors.
pub fn random_wbf_instance(
    rng: &mut ChaCha8Rng,
    max_models: usize,
    max_dets: usize,
    categories: u64,
) -> (Vec<Vec<Detection>>, Vec<f64>) {
    let n_models = rng.gen_range(1..=max_models);
    let anchors: Vec<[f64; 4]> = (0..3)
        .map(|_| {
            let x = rng.gen_range(0.0..0.6);
            let y = rng.gen_range(0.0..0.6);
            [
                x,
                y,
                x + rng.gen_range(0.1..0.4),
                y + rng.gen_range(0.1..0.4),
            ]
        })
        .collect();
    let per_model = (0..n_models)
        .map(|m| {
            let n = rng.gen_range(0..=max_dets);
            (0..n)
                .map(|i| {
                    let a = anchors[rng.gen_range(0..anchors.len())];
                    let j = |rng: &mut ChaCha8Rng| rng.gen_range(-0.05..0.05);
                    Detection {
                        bbox: BBox::new(a[0] + j(rng), a[1] + j(rng), a[2] + j(rng), a[3] + j(rng)),
                        score: rng.gen_range(0.0..1.0),
                        category_id: rng.gen_range(1..=categories),
                        image_id: 1,
                        model_id: m,
                        source_index: i,
                    }
                })
                .collect()
        })
        .collect();
    let weights = (0..n_models).map(|_| rng.gen_range(0.1..3.0)).collect();
    (per_model, weights)
}

// ---------------------------------------------------------------------------
// COCO-style evaluation by brute force.
// ---------------------------------------------------------------------------

pub const THRESHOLDS: [f64; 10] = [0.50, 0.55, 0.60, 0.65, 0.70, 0.75, 0.80, 0.85, 0.90, 0.95];

/// Returns `(ap_50_95, ap_50, ap_75, ar_50_95)` on the ×100 scale.
pub fn brute_force_eval(gt: &DatasetGT, preds: &PredictionSet) -> [f64; 4] {
    let mut cats: Vec<u64> = gt.annotations.iter().map(|a| a.category_id).collect();
    cats.sort();
    cats.dedup();
    if cats.is_empty() {
        return [0.0; 4];
    }
    let mut ap = vec![vec![0.0; THRESHOLDS.len()]; cats.len()];
    let mut ar = vec![vec![0.0; THRESHOLDS.len()]; cats.len()];
    for (ci, &cat) in cats.iter().enumerate() {
        for (ti, &thr) in THRESHOLDS.iter().enumerate() {
            let mut hits: Vec<(f64, u64, usize, bool)> = Vec::new();
            let mut n_gt = 0;
            for img in &gt.images {
                let gts: Vec<&Annotation> = gt
                    .annotations
                    .iter()
                    .filter(|a| a.image_id == img.id && a.category_id == cat)
                    .collect();
                n_gt += gts.len();
                let mut dets: Vec<&Detection> = preds
                    .detections
                    .iter()
                    .filter(|d| d.image_id == img.id && d.category_id == cat)
                    .collect();
                // Insertion sort by (score desc, source_index asc).
                for i in 1..dets.len() {
                    let mut j = i;
                    while j > 0
                        && (dets[j].score > dets[j - 1].score
                            || (dets[j].score == dets[j - 1].score
                                && dets[j].source_index < dets[j - 1].source_index))
                    {
                        dets.swap(j, j - 1);
                        j -= 1;
                    }
                }
                dets.truncate(100);
                let mut used = vec![false; gts.len()];
                for d in dets {
                    let db = [d.bbox.x1, d.bbox.y1, d.bbox.x2, d.bbox.y2];
                    let mut pick = None;
                    let mut pick_iou = 0.0;
                    for (g, a) in gts.iter().enumerate() {
                        let v = plain_iou(db, [a.bbox.x1, a.bbox.y1, a.bbox.x2, a.bbox.y2]);
                        if !used[g] && v >= thr && v > pick_iou {
                            pick = Some(g);
                            pick_iou = v;
                        }
                    }
                    if let Some(g) = pick {
                        used[g] = true;
                    }
                    hits.push((d.score, img.id, d.source_index, pick.is_some()));
                }
            }
            hits.sort_by(|a, b| {
                b.0.partial_cmp(&a.0)
                    .unwrap()
                    .then(a.1.cmp(&b.1))
                    .then(a.2.cmp(&b.2))
            });
            let mut pts = Vec::new();
            let mut tp = 0.0;
            for (k, h) in hits.iter().enumerate() {
                if h.3 {
                    tp += 1.0;
                }
                pts.push((tp / n_gt as f64, tp / (k as f64 + 1.0)));
            }
            let mut sum = 0.0;
            for r in 0..=100 {
                let rr = r as f64 / 100.0;
                let best = pts
                    .iter()
                    .filter(|p| p.0 >= rr)
                    .map(|p| p.1)
                    .fold(0.0, f64::max);
                sum += best;
            }
            ap[ci][ti] = sum / 101.0;
            ar[ci][ti] = pts.last().map_or(0.0, |p| p.0);
        }
    }
    let k = cats.len() as f64;
    let t = THRESHOLDS.len() as f64;
    let ap_all = ap.iter().flatten().sum::<f64>() / (k * t);
    let ar_all = ar.iter().flatten().sum::<f64>() / (k * t);
    let ap50 = ap.iter().map(|r| r[0]).sum::<f64>() / k;
    let ap75 = ap.iter().map(|r| r[5]).sum::<f64>() / k;
    [100.0 * ap_all, 100.0 * ap50, 100.0 * ap75, 100.0 * ar_all]
}

// ---------------------------------------------------------------------------
// Synthetic datasets.
// ---------------------------------------------------------------------------

pub fn categories(n: u64) -> Vec<Category> {
    (1..=n)
        .map(|id| Category {
            id,
            name: format!("class{id}"),
            supercategory: None,
        })
        .collect()
}

/// `n_images` square images with 1..=`max_boxes` well separated boxes each.
pub fn synthetic_gt(
    rng: &mut ChaCha8Rng,
    n_images: u64,
    max_boxes: usize,
    n_categories: u64,
) -> DatasetGT {
    let images: Vec<ImageInfo> = (1..=n_images)
        .map(|id| ImageInfo {
            id,
            width: 870,
            height: 870,
            file_name: format!("patch_{id:04}.png"),
        })
        .collect();
    let mut annotations = Vec::new();
    let mut next_id = 1;
    for img in &images {
        let k = rng.gen_range(1..=max_boxes);
        // One box per cell of a 3x3 grid keeps boxes disjoint.
        let mut cells: Vec<usize> = (0..9).collect();
        for i in (1..cells.len()).rev() {
            cells.swap(i, rng.gen_range(0..=i));
        }
        for &cell in cells.iter().take(k) {
            let (cx, cy) = ((cell % 3) as f64 / 3.0, (cell / 3) as f64 / 3.0);
            let w = rng.gen_range(0.12..0.3);
            let h = rng.gen_range(0.12..0.3);
            let x = cx + rng.gen_range(0.0..(1.0 / 3.0 - w));
            let y = cy + rng.gen_range(0.0..(1.0 / 3.0 - h));
            annotations.push(Annotation {
                bbox: BBox::new(x, y, x + w, y + h),
                category_id: rng.gen_range(1..=n_categories),
                image_id: img.id,
                annotation_id: next_id,
            });
            next_id += 1;
        }
    }
    DatasetGT::new(images, annotations, categories(n_categories)).unwrap()
}

/// Box with every corner moved by at most `jitter` of the box extent.
pub fn jittered(rng: &mut ChaCha8Rng, b: &BBox, jitter: f64) -> BBox {
    let (w, h) = (b.width(), b.height());
    let mut j = |s: f64| rng.gen_range(-jitter..=jitter) * s;
    BBox::new(b.x1 + j(w), b.y1 + j(h), b.x2 + j(w), b.y2 + j(h))
}

pub fn random_box(rng: &mut ChaCha8Rng) -> BBox {
    let x = rng.gen_range(0.0..0.85);
    let y = rng.gen_range(0.0..0.85);
    BBox::new(
        x,
        y,
        x + rng.gen_range(0.05..0.15),
        y + rng.gen_range(0.05..0.15),
    )
}

/// Detector that finds `hits` (indices into `gt.annotations`) with jittered
/// boxes, plus noise false positives amounting to `noise_fraction` of its
/// output.
pub fn synthetic_detector(
    rng: &mut ChaCha8Rng,
    gt: &DatasetGT,
    hits: &[usize],
    jitter: f64,
    noise_fraction: f64,
    model_id: usize,
    label: &str,
) -> PredictionSet {
    let mut detections = Vec::new();
    for &i in hits {
        let a = &gt.annotations[i];
        detections.push(Detection {
            bbox: jittered(rng, &a.bbox, jitter),
            score: rng.gen_range(0.3..1.0),
            category_id: a.category_id,
            image_id: a.image_id,
            model_id,
            source_index: 0,
        });
    }
    let n_noise = ((hits.len() as f64) * noise_fraction / (1.0 - noise_fraction)).round() as usize;
    let n_cat = gt.categories.len() as u64;
    for _ in 0..n_noise {
        let img = &gt.images[rng.gen_range(0..gt.images.len())];
        detections.push(Detection {
            bbox: random_box(rng),
            score: rng.gen_range(0.3..1.0),
            category_id: rng.gen_range(1..=n_cat),
            image_id: img.id,
            model_id,
            source_index: 0,
        });
    }
    // Shuffle so file order carries no information, then number.
    for i in (1..detections.len()).rev() {
        detections.swap(i, rng.gen_range(0..=i));
    }
    for (i, d) in detections.iter_mut().enumerate() {
        d.source_index = i;
    }
    PredictionSet {
        model: label.to_string(),
        detections,
    }
}

/// Three detectors over five GT slices; detector `m` sees slices
/// `2m, 2m+1, 2m+2 (mod 5)`, i.e. 60% of the boxes each, jointly all of them.
pub fn three_complementary_detectors(
    rng: &mut ChaCha8Rng,
    gt: &DatasetGT,
    jitter: f64,
    noise: f64,
) -> Vec<PredictionSet> {
    (0..3)
        .map(|m| {
            let slices = [(2 * m) % 5, (2 * m + 1) % 5, (2 * m + 2) % 5];
            let hits: Vec<usize> = (0..gt.annotations.len())
                .filter(|i| slices.contains(&(i % 5)))
                .collect();
            synthetic_detector(rng, gt, &hits, jitter, noise, m, &format!("model_{m}"))
        })
        .collect()
}

pub fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
