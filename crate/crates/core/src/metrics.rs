//! Bias level, bias-aligning/conflicting labels, group accuracies and
//! average precision for bias-conflict detection.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::characterize::ScoreVector;
use crate::data::{GroupKey, GroupTable, LabeledDataset};
use crate::error::{Error, Result};
use crate::seed;
use crate::trainer::TrainedModel;

/// Dependency `B(y, a) = P(a | y) / P(a)` of every defined (class, attribute)
/// pair, with the aligning (`B > 1`) and conflicting (`B < 1`) groups.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasReport {
    pub dependency: BTreeMap<GroupKey, f64>,
    pub bias_level: f64,
    pub aligning: BTreeSet<GroupKey>,
    pub conflicting: BTreeSet<GroupKey>,
}

impl BiasReport {
    pub fn is_conflicting(&self, key: GroupKey) -> bool {
        self.conflicting.contains(&key)
    }
}

/// Bias level of a group table: the maximum dependency over pairs whose
/// class and attribute both occur. The comparison against 1 is exact
/// integer arithmetic, so `B == 1` pairs land in neither set.
pub fn bias_level(table: &GroupTable) -> Result<BiasReport> {
    let total = table.total();
    if total == 0 {
        return Err(Error::InvalidDataset("group table is empty".into()));
    }
    let mut dependency = BTreeMap::new();
    let mut aligning = BTreeSet::new();
    let mut conflicting = BTreeSet::new();
    let mut level = f64::NEG_INFINITY;
    for y in 0..table.num_classes() {
        let ny = u128::from(table.class_count(y));
        if ny == 0 {
            continue;
        }
        for a in 0..table.num_attrs() {
            let na = u128::from(table.attr_count(a));
            if na == 0 {
                continue;
            }
            let key = GroupKey::new(y, a);
            let nya = u128::from(table.count(key));
            // B = (nya / ny) / (na / N) = nya * N / (ny * na)
            let num = nya * u128::from(total);
            let den = ny * na;
            let b = num as f64 / den as f64;
            match num.cmp(&den) {
                std::cmp::Ordering::Greater => {
                    aligning.insert(key);
                }
                std::cmp::Ordering::Less => {
                    conflicting.insert(key);
                }
                std::cmp::Ordering::Equal => {}
            }
            level = level.max(b);
            dependency.insert(key, b);
        }
    }
    Ok(BiasReport {
        dependency,
        bias_level: level,
        aligning,
        conflicting,
    })
}

/// Per-sample alignment category.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Alignment {
    Aligning,
    Conflicting,
    /// Group with dependency exactly 1.
    Neutral,
}

pub fn alignment(report: &BiasReport, ds: &LabeledDataset) -> Result<Vec<Alignment>> {
    (0..ds.len())
        .map(|i| {
            let g = ds.group(i);
            if !report.dependency.contains_key(&g) {
                return Err(Error::InvalidDataset(format!(
                    "sample {i}: group {g} has no dependency in the report"
                )));
            }
            Ok(if report.aligning.contains(&g) {
                Alignment::Aligning
            } else if report.conflicting.contains(&g) {
                Alignment::Conflicting
            } else {
                Alignment::Neutral
            })
        })
        .collect()
}

/// `true` for bias-conflicting samples. Neutral groups count as
/// non-conflicting.
pub fn label_alignment(report: &BiasReport, ds: &LabeledDataset) -> Result<Vec<bool>> {
    Ok(alignment(report, ds)?
        .into_iter()
        .map(|a| a == Alignment::Conflicting)
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub group_accuracy: BTreeMap<GroupKey, f64>,
    pub group_size: BTreeMap<GroupKey, usize>,
    pub worst_group_accuracy: f64,
    pub weighted_average_accuracy: f64,
    /// Train-set proportions, renormalized over groups present in the test set.
    pub train_group_weights: BTreeMap<GroupKey, f64>,
    /// Groups of the train label space missing from the test set.
    pub warnings: Vec<String>,
}

impl EvalReport {
    /// Plain-text summary.
    pub fn summary(&self) -> String {
        let mut s = String::new();
        s.push_str("group  n_test  accuracy  train_weight\n");
        for (g, acc) in &self.group_accuracy {
            s.push_str(&format!(
                "{:<6} {:>6}  {:>8.4}  {:>12.4}\n",
                g.to_string(),
                self.group_size[g],
                acc,
                self.train_group_weights[g]
            ));
        }
        s.push_str(&format!(
            "worst-group accuracy: {:.4}\n",
            self.worst_group_accuracy
        ));
        s.push_str(&format!(
            "weighted average accuracy: {:.4}\n",
            self.weighted_average_accuracy
        ));
        for w in &self.warnings {
            s.push_str(&format!("warning: {w}\n"));
        }
        s
    }
}

/// Group metrics from per-group `(correct, total)` counts of a test set.
pub fn summarize_groups(
    hits: &BTreeMap<GroupKey, (usize, usize)>,
    train_table: &GroupTable,
) -> Result<EvalReport> {
    if train_table.total() == 0 {
        return Err(Error::InvalidDataset("train group table is empty".into()));
    }
    let mut group_accuracy = BTreeMap::new();
    let mut group_size = BTreeMap::new();
    let mut warnings = Vec::new();
    for (&g, &(correct, total)) in hits {
        if total > 0 {
            group_accuracy.insert(g, correct as f64 / total as f64);
            group_size.insert(g, total);
        }
    }
    for (&g, &c) in train_table.counts() {
        if c > 0 && !group_accuracy.contains_key(&g) {
            warnings.push(format!("group {g} has no test samples; excluded"));
        }
    }
    if group_accuracy.is_empty() {
        return Err(Error::InvalidDataset(
            "test set has no evaluable group".into(),
        ));
    }
    let mass: u64 = group_accuracy.keys().map(|&g| train_table.count(g)).sum();
    if mass == 0 {
        return Err(Error::InvalidDataset(
            "no test group occurs in the train set".into(),
        ));
    }
    let train_group_weights: BTreeMap<GroupKey, f64> = group_accuracy
        .keys()
        .map(|&g| (g, train_table.count(g) as f64 / mass as f64))
        .collect();
    let worst = group_accuracy
        .values()
        .copied()
        .fold(f64::INFINITY, f64::min);
    let weighted = group_accuracy
        .iter()
        .map(|(g, acc)| train_group_weights[g] * acc)
        .sum();
    Ok(EvalReport {
        group_accuracy,
        group_size,
        worst_group_accuracy: worst,
        weighted_average_accuracy: weighted,
        train_group_weights,
        warnings,
    })
}

/// Group metrics for predicted labels on a test set.
pub fn group_eval_predictions(
    predictions: &[u32],
    test: &LabeledDataset,
    train_table: &GroupTable,
) -> Result<EvalReport> {
    if predictions.len() != test.len() {
        return Err(Error::ShapeMismatch {
            what: "predictions",
            expected: test.len(),
            found: predictions.len(),
        });
    }
    let mut hits: BTreeMap<GroupKey, (usize, usize)> = BTreeMap::new();
    for (i, &p) in predictions.iter().enumerate() {
        let e = hits.entry(test.group(i)).or_default();
        e.0 += usize::from(p == test.class_labels()[i]);
        e.1 += 1;
    }
    summarize_groups(&hits, train_table)
}

/// Evaluate `model` on `test`, weighting group accuracies by `train_table`.
pub fn group_eval(
    model: &TrainedModel,
    test: &LabeledDataset,
    train_table: &GroupTable,
) -> Result<EvalReport> {
    let preds = model.predict(test.features(), test.dim())?;
    group_eval_predictions(&preds, test, train_table)
}

/// Average precision of an explicit ranking (best first).
pub fn average_precision_of_order(order: &[usize], positives: &[bool]) -> Result<f64> {
    let total = positives.iter().filter(|&&p| p).count();
    if total == 0 {
        return Err(Error::NoPositives);
    }
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (k, &i) in order.iter().enumerate() {
        if positives[i] {
            hits += 1;
            sum += hits as f64 / (k + 1) as f64;
        }
    }
    Ok(sum / total as f64)
}

/// AP of `scores` as a detector of conflicting samples: samples ranked by
/// descending score (ties by lower index), precision averaged at each hit.
pub fn bias_conflict_ap(scores: &ScoreVector, conflicting: &[bool]) -> Result<f64> {
    average_precision(scores.values(), conflicting)
}

pub fn average_precision(scores: &[f64], positives: &[bool]) -> Result<f64> {
    if scores.len() != positives.len() {
        return Err(Error::ShapeMismatch {
            what: "conflict labels",
            expected: scores.len(),
            found: positives.len(),
        });
    }
    if let Some(index) = scores.iter().position(|s| !s.is_finite()) {
        return Err(Error::NonFinite {
            what: "score",
            index,
        });
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| crate::select::score_cmp(scores[b], scores[a]).then(a.cmp(&b)));
    average_precision_of_order(&order, positives)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ApBaseline {
    pub mean: f64,
    pub std: f64,
    pub trials: usize,
}

/// Monte-Carlo AP of uniformly random orderings.
pub fn random_ap_baseline(positives: &[bool], trials: usize, seed: u64) -> Result<ApBaseline> {
    if trials == 0 {
        return Err(Error::InvalidConfig("trials must be at least 1".into()));
    }
    let mut rng = seed::stage_rng(seed, "ap-baseline");
    let mut order: Vec<usize> = (0..positives.len()).collect();
    let mut aps = Vec::with_capacity(trials);
    for _ in 0..trials {
        order.shuffle(&mut rng);
        aps.push(average_precision_of_order(&order, positives)?);
    }
    let (mean, std) = mean_std(&aps);
    Ok(ApBaseline { mean, std, trials })
}

/// Mean and sample standard deviation (0 for a single value).
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}
