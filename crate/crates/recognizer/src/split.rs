use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{RecognizerError, Result};

/// Train/val shares; the test part takes the remainder.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitFractions {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        Self {
            train: 0.7,
            val: 0.2,
            test: 0.1,
        }
    }
}

impl SplitFractions {
    pub fn validate(&self) -> Result<()> {
        let parts = [self.train, self.val, self.test];
        if parts.iter().any(|f| !(0.0..=1.0).contains(f)) || (parts.iter().sum::<f64>() - 1.0).abs() > 1e-6 {
            return Err(RecognizerError::InvalidConfig(format!(
                "split fractions {parts:?} must be within [0,1] and sum to 1"
            )));
        }
        Ok(())
    }

    /// `(⌊train·n⌋, ⌊val·n⌋, rest)`.
    pub fn sizes(&self, n: usize) -> (usize, usize, usize) {
        // The epsilon keeps e.g. 0.7 × 10 from flooring to 6.
        let part = |f: f64| ((f * n as f64) + 1e-9).floor() as usize;
        let train = part(self.train).min(n);
        let val = part(self.val).min(n - train);
        (train, val, n - train - val)
    }
}

/// Indices into a sample list, partitioned into three disjoint parts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
    pub seed: u64,
}

impl DatasetSplit {
    pub fn len(&self) -> usize {
        self.train.len() + self.val.len() + self.test.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Shuffle `0..n` with `seed` and cut it into consecutive parts.
pub fn split_dataset(n: usize, fractions: SplitFractions, seed: u64) -> Result<DatasetSplit> {
    fractions.validate()?;
    let (a, b, c) = fractions.sizes(n);
    if a == 0 || b == 0 || c == 0 {
        return Err(RecognizerError::DatasetTooSmall(format!(
            "{n} samples split {a}/{b}/{c}; every part needs at least one"
        )));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let test = idx.split_off(a + b);
    let val = idx.split_off(a);
    Ok(DatasetSplit {
        train: idx,
        val,
        test,
        seed,
    })
}
