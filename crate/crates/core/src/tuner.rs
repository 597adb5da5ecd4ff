//! Seeded random search over ensemble weights and thresholds.
//!
//! Trial 0 always runs the unweighted baseline so a study can never end below
//! it. Every other trial draws each parameter uniformly from its interval.
//! Configurations are generated sequentially from the seed before any trial
//! runs, so parallel evaluation gives the same history as a sequential one.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datasets::{DatasetGT, PredictionSet};
use crate::error::{Error, Result};
use crate::metrics::{evaluate, objective, EvalReport};
use crate::wbf::{fuse_dataset, EnsembleConfig};

/// Closed interval `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        Interval { lo, hi }
    }

    pub fn point(v: f64) -> Self {
        Interval { lo: v, hi: v }
    }

    fn draw(&self, rng: &mut impl Rng) -> f64 {
        let u: f64 = rng.gen();
        (self.lo + (self.hi - self.lo) * u).clamp(self.lo, self.hi)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    /// One interval per model.
    pub weight_ranges: Vec<Interval>,
    pub iou_range: Interval,
    pub skip_range: Interval,
}

impl SearchSpace {
    /// Validated space; every interval must have positive length.
    pub fn new(
        weight_ranges: Vec<Interval>,
        iou_range: Interval,
        skip_range: Interval,
    ) -> Result<Self> {
        let space = SearchSpace {
            weight_ranges,
            iou_range,
            skip_range,
        };
        space.check(false)?;
        Ok(space)
    }

    /// Default ranges: weights `[0.01, 2]`, IoU `[0.3, 0.8]`, skip `[0, 0.4]`.
    pub fn default_for(n_models: usize) -> Self {
        SearchSpace {
            weight_ranges: vec![Interval::new(0.01, 2.0); n_models],
            iou_range: Interval::new(0.30, 0.80),
            skip_range: Interval::new(0.00, 0.40),
        }
    }

    /// A space collapsed onto a single configuration.
    pub fn point(config: &EnsembleConfig) -> Result<Self> {
        config.validate()?;
        let space = SearchSpace {
            weight_ranges: config.weights.iter().map(|&w| Interval::point(w)).collect(),
            iou_range: Interval::point(config.iou_threshold),
            skip_range: Interval::point(config.skip_threshold),
        };
        space.check(true)?;
        Ok(space)
    }

    pub fn n_models(&self) -> usize {
        self.weight_ranges.len()
    }

    fn check(&self, allow_points: bool) -> Result<()> {
        if self.weight_ranges.is_empty() {
            return Err(Error::Config(
                "search space needs at least one weight range".into(),
            ));
        }
        let width_ok = |i: &Interval| {
            i.lo.is_finite()
                && i.hi.is_finite()
                && if allow_points {
                    i.hi >= i.lo
                } else {
                    i.hi > i.lo
                }
        };
        for (m, r) in self.weight_ranges.iter().enumerate() {
            if !width_ok(r) || r.lo <= 0.0 {
                return Err(Error::Config(format!(
                    "weight range {m} [{}, {}] must be a positive-length interval above 0",
                    r.lo, r.hi
                )));
            }
        }
        let r = self.iou_range;
        if !width_ok(&r) || r.lo <= 0.0 || r.hi >= 1.0 {
            return Err(Error::Config(format!(
                "iou range [{}, {}] must be a positive-length interval inside (0, 1)",
                r.lo, r.hi
            )));
        }
        let r = self.skip_range;
        if !width_ok(&r) || r.lo < 0.0 || r.hi >= 1.0 {
            return Err(Error::Config(format!(
                "skip range [{}, {}] must be a positive-length interval inside [0, 1)",
                r.lo, r.hi
            )));
        }
        Ok(())
    }
}

/// Draws one configuration: weights in model order, then IoU, then skip.
pub fn sample(space: &SearchSpace, rng: &mut ChaCha8Rng) -> EnsembleConfig {
    let weights = space.weight_ranges.iter().map(|r| r.draw(rng)).collect();
    let iou_threshold = space.iou_range.draw(rng);
    let skip_threshold = space.skip_range.draw(rng);
    EnsembleConfig {
        weights,
        iou_threshold,
        skip_threshold,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub index: usize,
    pub config: EnsembleConfig,
    pub objective_value: f64,
    pub report: EvalReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyResult {
    pub best: Trial,
    pub history: Vec<Trial>,
    pub seed: u64,
    pub n_trials: usize,
}

/// Fuses, evaluates and scores one configuration.
pub fn run_trial(
    index: usize,
    gt: &DatasetGT,
    per_model_sets: &[PredictionSet],
    config: EnsembleConfig,
) -> Result<Trial> {
    let fused = fuse_dataset(per_model_sets, &config)?;
    let report = evaluate(gt, &fused)?;
    Ok(Trial {
        index,
        objective_value: objective(&report),
        config,
        report,
    })
}

pub fn tune(
    gt: &DatasetGT,
    per_model_sets: &[PredictionSet],
    space: &SearchSpace,
    n_trials: usize,
    seed: u64,
) -> Result<StudyResult> {
    if n_trials < 1 {
        return Err(Error::Input("a study needs at least one trial".into()));
    }
    if per_model_sets.is_empty() {
        return Err(Error::Input("a study needs at least one model".into()));
    }
    if space.n_models() != per_model_sets.len() {
        return Err(Error::Config(format!(
            "search space has {} weight ranges for {} models",
            space.n_models(),
            per_model_sets.len()
        )));
    }
    space.check(true)?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let configs: Vec<EnsembleConfig> =
        std::iter::once(EnsembleConfig::baseline(per_model_sets.len()))
            .chain((1..n_trials).map(|_| sample(space, &mut rng)))
            .collect();

    let history: Vec<Trial> = configs
        .into_par_iter()
        .enumerate()
        .map(|(i, config)| run_trial(i, gt, per_model_sets, config))
        .collect::<Result<_>>()?;

    let mut best = &history[0];
    for t in &history[1..] {
        if t.objective_value > best.objective_value {
            best = t;
        }
    }
    Ok(StudyResult {
        best: best.clone(),
        history,
        seed,
        n_trials,
    })
}

/// Running maximum of the objective over the trial history.
pub fn best_so_far_curve(study: &StudyResult) -> Vec<f64> {
    study
        .history
        .iter()
        .scan(f64::NEG_INFINITY, |best, t| {
            *best = best.max(t.objective_value);
            Some(*best)
        })
        .collect()
}

/// Study report written to disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    pub seed: u64,
    pub n_trials: usize,
    pub best: ReportTrial,
    pub history: Vec<ReportTrial>,
    pub best_so_far: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportTrial {
    pub index: usize,
    pub weights: Vec<f64>,
    pub iou_threshold: f64,
    pub skip_threshold: f64,
    pub objective: f64,
    pub ap_50_95: f64,
    pub ap_50: f64,
    pub ap_75: f64,
    pub ar_50_95: f64,
}

impl From<&Trial> for ReportTrial {
    fn from(t: &Trial) -> Self {
        ReportTrial {
            index: t.index,
            weights: t.config.weights.clone(),
            iou_threshold: t.config.iou_threshold,
            skip_threshold: t.config.skip_threshold,
            objective: t.objective_value,
            ap_50_95: t.report.ap_50_95,
            ap_50: t.report.ap_50,
            ap_75: t.report.ap_75,
            ar_50_95: t.report.ar_50_95,
        }
    }
}

impl StudyResult {
    pub fn report(&self) -> StudyReport {
        StudyReport {
            seed: self.seed,
            n_trials: self.n_trials,
            best: (&self.best).into(),
            history: self.history.iter().map(ReportTrial::from).collect(),
            best_so_far: best_so_far_curve(self),
        }
    }

    pub fn report_json(&self) -> String {
        serde_json::to_string_pretty(&self.report()).expect("study report serializes")
    }
}
