use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::DatasetGT;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            train_fraction: 0.85,
            seed: 0,
        }
    }
}

impl SplitSpec {
    pub fn new(train_fraction: f64, seed: u64) -> Result<Self> {
        if !(train_fraction > 0.0 && train_fraction < 1.0) {
            return Err(Error::Input(format!(
                "train fraction must lie in (0, 1), got {train_fraction}"
            )));
        }
        Ok(SplitSpec {
            train_fraction,
            seed,
        })
    }

    /// Validation image count for a dataset of `n` images.
    pub fn val_count(&self, n: usize) -> usize {
        let raw = (n as f64 * (1.0 - self.train_fraction)).round() as usize;
        raw.max(1).min(n.saturating_sub(1))
    }
}

/// Splits whole images into `(train, val)` with a seeded shuffle.
///
/// Both halves keep the original image order; annotations follow their image.
pub fn split(gt: &DatasetGT, spec: &SplitSpec) -> Result<(DatasetGT, DatasetGT)> {
    SplitSpec::new(spec.train_fraction, spec.seed)?;
    let n = gt.images.len();
    if n < 2 {
        return Err(Error::Input(format!(
            "splitting needs at least 2 images, got {n}"
        )));
    }
    let mut ids: Vec<u64> = gt.images.iter().map(|i| i.id).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    ids.shuffle(&mut rng);

    let n_val = spec.val_count(n);
    let val: HashSet<u64> = ids[..n_val].iter().copied().collect();
    let train: HashSet<u64> = ids[n_val..].iter().copied().collect();
    Ok((gt.subset(&train), gt.subset(&val)))
}
