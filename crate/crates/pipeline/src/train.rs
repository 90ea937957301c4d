//! Fit a classifier on a harvested dataset.

use proctor_recognizer::{evaluate, split_dataset, train, Classifier, EpochStats, SplitFractions, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::dataset::LabeledDataset;
use crate::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub class_names: Vec<String>,
    pub samples: usize,
    pub train_samples: usize,
    pub val_samples: usize,
    pub test_samples: usize,
    pub split_seed: u64,
    pub history: Vec<EpochStats>,
    /// Top-1 accuracy on the held-out test part.
    pub test_accuracy: f64,
}

/// Split with `split_seed`, train, and score the held-out part.
pub fn train_on_dataset(
    dataset: &LabeledDataset,
    fractions: SplitFractions,
    split_seed: u64,
    cfg: &TrainConfig,
) -> Result<(Classifier, TrainReport)> {
    cfg.validate()?;
    let set = dataset.to_training_set()?;
    let split = split_dataset(set.samples.len(), fractions, split_seed)?;
    let (clf, history) = train(&set, &split, cfg)?;
    let test_accuracy = evaluate(&clf, &set, &split.test)?;
    let report = TrainReport {
        class_names: set.class_names,
        samples: split.len(),
        train_samples: split.train.len(),
        val_samples: split.val.len(),
        test_samples: split.test.len(),
        split_seed,
        history,
        test_accuracy,
    };
    Ok((clf, report))
}
