use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{DatasetManifest, Label, Split};
use crate::error::{Error, Result};

/// Train/validation/test fractions.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SplitRatios {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        SplitRatios {
            train: 0.7,
            val: 0.1,
            test: 0.2,
        }
    }
}

impl SplitRatios {
    pub fn new(train: f64, val: f64, test: f64) -> Result<Self> {
        let r = SplitRatios { train, val, test };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.train, self.val, self.test];
        if all.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::invalid(format!("split ratios must be positive, got {all:?}")));
        }
        if (all.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!("split ratios must sum to 1, got {all:?}")));
        }
        Ok(())
    }

    /// Per-split counts for a class of `n` samples.
    ///
    /// Each split gets `floor(n * ratio)`; the (at most two) leftover samples go
    /// to validation first, then test, then train, one each. Every count is
    /// therefore within one sample of `n * ratio`.
    pub fn allocate(&self, n: usize) -> [usize; 3] {
        let floor = |r: f64| ((n as f64) * r + 1e-9).floor() as usize;
        let mut counts = [floor(self.train), floor(self.val), floor(self.test)];
        let mut leftover = n - counts.iter().sum::<usize>();
        for idx in [1, 2, 0] {
            if leftover == 0 {
                break;
            }
            counts[idx] += 1;
            leftover -= 1;
        }
        counts
    }
}

/// Stratified, seeded reassignment of every entry to TRAIN/VAL/TEST.
///
/// Within each class, entries are sorted by id before shuffling, so the result
/// depends only on the set of entries and the seed.
pub fn split(manifest: &DatasetManifest, ratios: SplitRatios, seed: u64) -> Result<DatasetManifest> {
    ratios.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = manifest.clone();
    out.seed = seed;
    for label in Label::ALL {
        let mut idx: Vec<usize> = (0..out.entries.len())
            .filter(|&i| out.entries[i].label == label)
            .collect();
        if idx.is_empty() {
            continue;
        }
        if idx.len() < 3 {
            return Err(Error::TooFewSamples {
                class: label.to_string(),
                count: idx.len(),
            });
        }
        idx.sort_by(|&a, &b| out.entries[a].id.cmp(&out.entries[b].id));
        idx.shuffle(&mut rng);
        let [n_train, n_val, _] = ratios.allocate(idx.len());
        for (pos, &i) in idx.iter().enumerate() {
            out.entries[i].split = if pos < n_train {
                Split::Train
            } else if pos < n_train + n_val {
                Split::Val
            } else {
                Split::Test
            };
        }
    }
    Ok(out)
}
