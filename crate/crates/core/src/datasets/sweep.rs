//! Checkpoint sweeps: evaluate the predictions obtained from each saved
//! checkpoint and keep the best one by AP@[.5:.95].

use std::cmp::Ordering;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{load_predictions, DatasetGT, PredictionSet};
use crate::error::{Error, Result};
use crate::metrics::{evaluate, EvalReport};

pub const SWEEP_CSV_HEADER: [&str; 5] = ["label", "ap_50_95", "ap_50", "ap_75", "ar_50_95"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub label: String,
    pub report: EvalReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    /// One entry per checkpoint, in input order.
    pub curve: Vec<SweepPoint>,
    pub best_checkpoint: String,
}

impl SweepResult {
    pub fn best(&self) -> &SweepPoint {
        self.curve
            .iter()
            .find(|p| p.label == self.best_checkpoint)
            .expect("best checkpoint is part of the curve")
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(SWEEP_CSV_HEADER).expect("in-memory csv");
        for p in &self.curve {
            let r = &p.report;
            w.write_record([
                p.label.clone(),
                format!("{:.4}", r.ap_50_95),
                format!("{:.4}", r.ap_50),
                format!("{:.4}", r.ap_75),
                format!("{:.4}", r.ar_50_95),
            ])
            .expect("in-memory csv");
        }
        String::from_utf8(w.into_inner().expect("in-memory csv")).expect("csv is utf-8")
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

/// Natural ordering: digit runs compare numerically, so `epoch2 < epoch10`.
pub fn natural_cmp(a: &str, b: &str) -> Ordering {
    let (mut a, mut b) = (a, b);
    loop {
        match (a.chars().next(), b.chars().next()) {
            (None, None) => return Ordering::Equal,
            (None, Some(_)) => return Ordering::Less,
            (Some(_), None) => return Ordering::Greater,
            (Some(x), Some(y)) if x.is_ascii_digit() && y.is_ascii_digit() => {
                let da = a.len() - a.trim_start_matches(|c: char| c.is_ascii_digit()).len();
                let db = b.len() - b.trim_start_matches(|c: char| c.is_ascii_digit()).len();
                let (na, nb) = (&a[..da], &b[..db]);
                let (ta, tb) = (na.trim_start_matches('0'), nb.trim_start_matches('0'));
                let ord = ta
                    .len()
                    .cmp(&tb.len())
                    .then_with(|| ta.cmp(tb))
                    .then_with(|| na.len().cmp(&nb.len()));
                if ord != Ordering::Equal {
                    return ord;
                }
                a = &a[da..];
                b = &b[db..];
            }
            (Some(x), Some(y)) => {
                if x != y {
                    return x.cmp(&y);
                }
                a = &a[x.len_utf8()..];
                b = &b[y.len_utf8()..];
            }
        }
    }
}

/// Evaluates already loaded checkpoint predictions.
pub fn sweep_sets(gt: &DatasetGT, checkpoints: &[(String, PredictionSet)]) -> Result<SweepResult> {
    if checkpoints.is_empty() {
        return Err(Error::Input("sweep needs at least one checkpoint".into()));
    }
    let curve: Vec<SweepPoint> = checkpoints
        .par_iter()
        .map(|(label, set)| {
            evaluate(gt, set)
                .map(|report| SweepPoint {
                    label: label.clone(),
                    report,
                })
                .map_err(|e| e.context(format!("checkpoint {label}")))
        })
        .collect::<Result<_>>()?;

    let best = curve
        .iter()
        .max_by(|a, b| {
            a.report
                .ap_50_95
                .total_cmp(&b.report.ap_50_95)
                // Equal scores: the earlier label must compare as larger.
                .then_with(|| natural_cmp(&b.label, &a.label))
        })
        .expect("non-empty curve");
    let best_checkpoint = best.label.clone();
    Ok(SweepResult {
        curve,
        best_checkpoint,
    })
}

/// Loads each `(label, path)` prediction file and sweeps over them.
pub fn sweep(gt: &DatasetGT, checkpoints: &[(String, PathBuf)]) -> Result<SweepResult> {
    let sets: Vec<(String, PredictionSet)> = checkpoints
        .par_iter()
        .map(|(label, path)| {
            load_predictions(path, gt)
                .map(|set| (label.clone(), set))
                .map_err(|e| e.context(format!("checkpoint {label}")))
        })
        .collect::<Result<_>>()?;
    sweep_sets(gt, &sets)
}
