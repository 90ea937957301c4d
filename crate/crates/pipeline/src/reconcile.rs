//! Mapping OCR class names onto roster names.

use std::collections::BTreeMap;

use proctor_core::{normalize_name, Roster};
use serde::{Deserialize, Serialize};

use crate::dataset::LabeledDataset;
use crate::{PipelineError, Result};

/// Edit distance divided by the longer string's length, in characters.
pub fn normalized_distance(a: &str, b: &str) -> f64 {
    let n = a.chars().count().max(b.chars().count());
    if n == 0 {
        return 0.0;
    }
    strsim::levenshtein(a, b) as f64 / n as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum MergeOutcome {
    Exact {
        to: String,
    },
    Substring {
        to: String,
    },
    Fuzzy {
        to: String,
        distance: f64,
    },
    /// Several roster names fit equally well; the class is dropped.
    Ambiguous {
        candidates: Vec<String>,
    },
    Unmatched,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergeEntry {
    pub from: String,
    pub samples: usize,
    #[serde(flatten)]
    pub outcome: MergeOutcome,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MergeReport {
    pub entries: Vec<MergeEntry>,
}

impl MergeReport {
    fn count(&self, f: impl Fn(&MergeOutcome) -> bool) -> usize {
        self.entries.iter().filter(|e| f(&e.outcome)).count()
    }

    pub fn substring_merges(&self) -> usize {
        self.count(|o| matches!(o, MergeOutcome::Substring { .. }))
    }

    pub fn fuzzy_merges(&self) -> usize {
        self.count(|o| matches!(o, MergeOutcome::Fuzzy { .. }))
    }

    /// Classes dropped as unmatched or ambiguous.
    pub fn dropped(&self) -> usize {
        self.count(|o| matches!(o, MergeOutcome::Ambiguous { .. } | MergeOutcome::Unmatched))
    }

    pub fn dropped_samples(&self) -> usize {
        self.entries
            .iter()
            .filter(|e| matches!(e.outcome, MergeOutcome::Ambiguous { .. } | MergeOutcome::Unmatched))
            .map(|e| e.samples)
            .sum()
    }

    pub fn ambiguous(&self) -> impl Iterator<Item = &MergeEntry> {
        self.entries
            .iter()
            .filter(|e| matches!(e.outcome, MergeOutcome::Ambiguous { .. }))
    }
}

/// Decide where one OCR class goes. An exact roster match wins outright;
/// otherwise substring containment, then the closest roster name within
/// `fuzzy_max_dist`. Ties at either stage are ambiguous.
pub fn match_class(class: &str, roster: &Roster, fuzzy_max_dist: f64) -> MergeOutcome {
    let key = normalize_name(class);
    let names: Vec<(&str, String)> = roster.names().map(|n| (n, normalize_name(n))).collect();
    if let Some((n, _)) = names.iter().find(|(_, k)| *k == key) {
        return MergeOutcome::Exact { to: n.to_string() };
    }
    let contained: Vec<&str> = names
        .iter()
        .filter(|(_, k)| key.contains(k.as_str()))
        .map(|(n, _)| *n)
        .collect();
    match contained.len() {
        1 => {
            return MergeOutcome::Substring {
                to: contained[0].into(),
            }
        }
        0 => {}
        _ => {
            return MergeOutcome::Ambiguous {
                candidates: contained.into_iter().map(String::from).collect(),
            }
        }
    }
    let scored: Vec<(f64, &str)> = names.iter().map(|(n, k)| (normalized_distance(&key, k), *n)).collect();
    let Some(best) = scored.iter().map(|(d, _)| *d).min_by(f64::total_cmp) else {
        return MergeOutcome::Unmatched;
    };
    if best > fuzzy_max_dist {
        return MergeOutcome::Unmatched;
    }
    let at_best: Vec<&str> = scored.iter().filter(|(d, _)| *d == best).map(|(_, n)| *n).collect();
    if at_best.len() > 1 {
        return MergeOutcome::Ambiguous {
            candidates: at_best.into_iter().map(String::from).collect(),
        };
    }
    MergeOutcome::Fuzzy {
        to: at_best[0].into(),
        distance: best,
    }
}

/// Merge OCR classes into roster names and drop the rest. Samples of
/// merged classes are concatenated; none are lost except by a drop.
pub fn reconcile_with_roster(
    ds: LabeledDataset,
    roster: &Roster,
    fuzzy_max_dist: f64,
) -> Result<(LabeledDataset, MergeReport)> {
    if roster.is_empty() {
        return Err(PipelineError::Input("roster is empty".into()));
    }
    let mut report = MergeReport::default();
    let mut classes: BTreeMap<String, Vec<_>> = BTreeMap::new();
    for (name, samples) in ds.classes {
        let outcome = match_class(&name, roster, fuzzy_max_dist);
        report.entries.push(MergeEntry {
            from: name,
            samples: samples.len(),
            outcome: outcome.clone(),
        });
        match outcome {
            MergeOutcome::Exact { to } | MergeOutcome::Substring { to } | MergeOutcome::Fuzzy { to, .. } => {
                classes.entry(to).or_default().extend(samples);
            }
            MergeOutcome::Ambiguous { .. } | MergeOutcome::Unmatched => {}
        }
    }
    for samples in classes.values_mut() {
        samples.sort_by_key(|s| (s.frame_idx, s.cell));
    }
    Ok((LabeledDataset { root: ds.root, classes }, report))
}
