mod common;

use common::{brute_force_eval, jittered, random_box, seeded, synthetic_gt};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use sarstack::datasets::{DatasetGT, PredictionSet};
use sarstack::metrics::{average_precision, evaluate, match_detections, PRCurve};
use sarstack::Detection;

/// Predictions mixing jittered copies of ground truth and random boxes.
fn random_predictions(
    rng: &mut ChaCha8Rng,
    gt: &DatasetGT,
    max_per_image: usize,
    distinct_scores: bool,
) -> PredictionSet {
    let mut detections = Vec::new();
    for img in &gt.images {
        let anns: Vec<_> = gt
            .annotations
            .iter()
            .filter(|a| a.image_id == img.id)
            .collect();
        let n = rng.gen_range(0..=max_per_image);
        for _ in 0..n {
            let (bbox, cat) = if !anns.is_empty() && rng.gen_bool(0.7) {
                let a = anns[rng.gen_range(0..anns.len())];
                (jittered(rng, &a.bbox, 0.2), a.category_id)
            } else {
                (random_box(rng), rng.gen_range(1..=2))
            };
            let score = if distinct_scores {
                rng.gen_range(0.0..1.0)
            } else {
                // Coarse scores to exercise tie-breaking.
                rng.gen_range(0..4) as f64 / 4.0
            };
            detections.push(Detection {
                bbox,
                score,
                category_id: cat,
                image_id: img.id,
                model_id: 0,
                source_index: 0,
            });
        }
    }
    for (i, d) in detections.iter_mut().enumerate() {
        d.source_index = i;
    }
    PredictionSet {
        model: "rand".into(),
        detections,
    }
}

fn metrics(gt: &DatasetGT, p: &PredictionSet) -> [f64; 4] {
    let r = evaluate(gt, p).unwrap();
    [r.ap_50_95, r.ap_50, r.ap_75, r.ar_50_95]
}

#[test]
fn matches_brute_force() {
    let mut rng = seeded(7);
    for case in 0..200 {
        let n_images = rng.gen_range(1..=3);
        let gt = synthetic_gt(&mut rng, n_images, 4, 2);
        let preds = random_predictions(&mut rng, &gt, 6, case % 2 == 0);
        let got = metrics(&gt, &preds);
        let want = brute_force_eval(&gt, &preds);
        for k in 0..4 {
            assert!(
                (got[k] - want[k]).abs() <= 1e-9,
                "case {case} metric {k}: {} vs {}",
                got[k],
                want[k]
            );
        }
    }
}

#[test]
fn duplicates_never_increase_ap() {
    let mut rng = seeded(11);
    for _ in 0..100 {
        let gt = synthetic_gt(&mut rng, 3, 4, 1);
        let preds = random_predictions(&mut rng, &gt, 5, true);
        let mut doubled = preds.clone();
        let n = preds.detections.len();
        for (i, d) in preds.detections.iter().enumerate() {
            doubled.detections.push(Detection {
                source_index: n + i,
                ..d.clone()
            });
        }
        let (a, b) = (metrics(&gt, &preds), metrics(&gt, &doubled));
        for k in 0..3 {
            assert!(b[k] <= a[k] + 1e-9, "{b:?} > {a:?}");
        }
    }
}

#[test]
fn low_score_addition_keeps_earlier_matches() {
    let mut rng = seeded(12);
    for _ in 0..100 {
        let gt = synthetic_gt(&mut rng, 1, 4, 1);
        let mut preds = random_predictions(&mut rng, &gt, 6, true);
        for d in &mut preds.detections {
            d.score = 0.1 + 0.9 * d.score;
        }
        let gts: Vec<_> = gt.annotations.clone();
        let before = match_detections(&preds.detections, &gts, 0.5);
        let mut extended = preds.detections.clone();
        extended.push(Detection {
            bbox: gts[0].bbox,
            score: 0.05,
            category_id: gts[0].category_id,
            image_id: 1,
            model_id: 0,
            source_index: extended.len(),
        });
        let after = match_detections(&extended, &gts, 0.5);
        assert_eq!(&after[..before.len()], &before[..]);
    }
}

#[test]
fn ap_non_increasing_in_threshold() {
    let mut rng = seeded(13);
    for _ in 0..100 {
        let gt = synthetic_gt(&mut rng, 3, 4, 1);
        let preds = random_predictions(&mut rng, &gt, 6, true);
        let r = evaluate(&gt, &preds).unwrap();
        assert!(r.ap_50 >= r.ap_75 - 1e-9);
        assert!(r.ap_50 >= r.ap_50_95 - 1e-9);
    }
}

#[test]
fn file_order_does_not_matter() {
    let mut rng = seeded(14);
    for _ in 0..50 {
        let gt = synthetic_gt(&mut rng, 3, 4, 2);
        let preds = random_predictions(&mut rng, &gt, 6, true);
        let mut shuffled = preds.clone();
        let n = shuffled.detections.len();
        for i in (1..n).rev() {
            shuffled.detections.swap(i, rng.gen_range(0..=i));
        }
        for (i, d) in shuffled.detections.iter_mut().enumerate() {
            d.source_index = i;
        }
        let (a, b) = (metrics(&gt, &preds), metrics(&gt, &shuffled));
        for k in 0..4 {
            assert!((a[k] - b[k]).abs() < 1e-12);
        }
    }
}

#[test]
fn ap_of_monotone_curve() {
    // Four TPs with one FP after the second; recall climbs 0.25 per TP.
    let curve = PRCurve::from_flags(0.5, &[true, true, false, true, true], 4);
    let ap = average_precision(&curve);
    // r <= 0.50 sees precision 1, r in (0.5, 1] sees 0.8 (4 of 5).
    let want = (51.0 * 1.0 + 50.0 * 0.8) / 101.0;
    assert!((ap - want).abs() < 1e-12);
}
