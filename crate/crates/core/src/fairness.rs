//! Group fairness metrics over prediction records: accuracy-ratio (PQD),
//! positive-rate parity across classes (DPM), and true-positive-rate parity
//! across classes (EOM), with an explicit skip policy for degenerate
//! classes.

use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};

/// One labelled prediction with its sensitive group.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PredictionRecord {
    pub sample_id: String,
    pub group: String,
    pub true_label: String,
    pub pred_label: String,
}

impl PredictionRecord {
    pub fn new(
        sample_id: impl Into<String>,
        group: impl Into<String>,
        true_label: impl Into<String>,
        pred_label: impl Into<String>,
    ) -> Result<Self> {
        let record = Self {
            sample_id: sample_id.into(),
            group: group.into(),
            true_label: true_label.into(),
            pred_label: pred_label.into(),
        };
        for (field, value) in [
            ("sample_id", &record.sample_id),
            ("group", &record.group),
            ("true_label", &record.true_label),
            ("pred_label", &record.pred_label),
        ] {
            if value.is_empty() {
                return Err(Error::InvalidValue {
                    context: "prediction record",
                    message: format!("field {field} is empty"),
                });
            }
        }
        Ok(record)
    }
}

/// All fairness metrics plus the degenerate-class bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct FairnessReport {
    pub per_group_accuracy: BTreeMap<String, f64>,
    pub pqd: f64,
    pub dpm: f64,
    pub eom: f64,
    /// Classes never predicted by any group, excluded from the DPM mean.
    pub dpm_skipped_classes: Vec<String>,
    /// Classes with fewer than two groups holding true instances (or zero
    /// best TPR), excluded from the EOM mean.
    pub eom_skipped_classes: Vec<String>,
    pub n_records: usize,
}

fn check_non_empty(records: &[PredictionRecord]) -> Result<()> {
    if records.is_empty() {
        return Err(Error::EmptyInput {
            context: "prediction records",
        });
    }
    Ok(())
}

/// Per-group classification accuracy.
pub fn group_accuracies(records: &[PredictionRecord]) -> Result<BTreeMap<String, f64>> {
    check_non_empty(records)?;
    let mut totals: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
    for r in records {
        let entry = totals.entry(&r.group).or_insert((0, 0));
        entry.0 += 1;
        if r.true_label == r.pred_label {
            entry.1 += 1;
        }
    }
    Ok(totals
        .into_iter()
        .map(|(g, (n, correct))| (g.to_owned(), correct as f64 / n as f64))
        .collect())
}

/// Ratio of the worst group accuracy to the best.
pub fn pqd(records: &[PredictionRecord]) -> Result<f64> {
    let accuracies = group_accuracies(records)?;
    pqd_from_accuracies(accuracies.values().copied())
}

/// PQD computed directly from per-group accuracies (any common scale).
pub fn pqd_from_accuracies(accuracies: impl IntoIterator<Item = f64>) -> Result<f64> {
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    let mut any = false;
    for a in accuracies {
        if !a.is_finite() || a < 0.0 {
            return Err(Error::InvalidValue {
                context: "group accuracies",
                message: format!("accuracy {a} is not a nonnegative real"),
            });
        }
        min = min.min(a);
        max = max.max(a);
        any = true;
    }
    if !any {
        return Err(Error::EmptyInput {
            context: "group accuracies",
        });
    }
    if max <= 0.0 {
        return Err(Error::AllAccuraciesZero);
    }
    Ok(min / max)
}

/// Per-group positive-prediction rates for every class, as
/// `class -> group -> p(pred = class | group)`.
fn prediction_rates(
    records: &[PredictionRecord],
    class_set: &BTreeSet<String>,
) -> BTreeMap<String, BTreeMap<String, f64>> {
    let mut group_sizes: BTreeMap<&str, usize> = BTreeMap::new();
    let mut counts: BTreeMap<(&str, &str), usize> = BTreeMap::new();
    for r in records {
        *group_sizes.entry(&r.group).or_insert(0) += 1;
        *counts.entry((r.pred_label.as_str(), r.group.as_str())).or_insert(0) += 1;
    }
    let mut rates = BTreeMap::new();
    for class in class_set {
        let mut per_group = BTreeMap::new();
        for (&group, &size) in &group_sizes {
            let count = counts.get(&(class.as_str(), group)).copied().unwrap_or(0);
            per_group.insert(group.to_owned(), count as f64 / size as f64);
        }
        rates.insert(class.clone(), per_group);
    }
    rates
}

/// Demographic parity across classes: mean over classes of the min/max
/// ratio of per-group positive-prediction rates. Classes never predicted by
/// any group are skipped and reported.
pub fn dpm(
    records: &[PredictionRecord],
    class_set: &BTreeSet<String>,
) -> Result<(f64, Vec<String>)> {
    check_non_empty(records)?;
    if class_set.is_empty() {
        return Err(Error::EmptyInput { context: "class set" });
    }
    let rates = prediction_rates(records, class_set);
    let mut skipped = Vec::new();
    let mut total = 0.0;
    let mut used = 0usize;
    for (class, per_group) in &rates {
        let min = per_group.values().copied().fold(f64::INFINITY, f64::min);
        let max = per_group.values().copied().fold(0.0f64, f64::max);
        if max > 0.0 {
            total += min / max;
            used += 1;
        } else {
            skipped.push(class.clone());
        }
    }
    if used == 0 {
        return Err(Error::AllClassesSkipped { metric: "dpm" });
    }
    Ok((total / used as f64, skipped))
}

/// Equality of opportunity across classes: mean over classes of the min/max
/// ratio of per-group true-positive rates, taken over groups that hold true
/// instances of the class. Classes with fewer than two eligible groups, or
/// with a zero best rate, are skipped and reported.
pub fn eom(
    records: &[PredictionRecord],
    class_set: &BTreeSet<String>,
) -> Result<(f64, Vec<String>)> {
    check_non_empty(records)?;
    if class_set.is_empty() {
        return Err(Error::EmptyInput { context: "class set" });
    }
    // (class, group) -> (true instances, true positives)
    let mut counts: BTreeMap<(&str, &str), (usize, usize)> = BTreeMap::new();
    for r in records {
        let entry = counts
            .entry((r.true_label.as_str(), r.group.as_str()))
            .or_insert((0, 0));
        entry.0 += 1;
        if r.pred_label == r.true_label {
            entry.1 += 1;
        }
    }
    let mut skipped = Vec::new();
    let mut total = 0.0;
    let mut used = 0usize;
    for class in class_set {
        let mut tprs = Vec::new();
        for (&(c, _), &(n, tp)) in &counts {
            if c == class {
                tprs.push(tp as f64 / n as f64);
            }
        }
        let max = tprs.iter().copied().fold(0.0f64, f64::max);
        if tprs.len() < 2 || max <= 0.0 {
            skipped.push(class.clone());
            continue;
        }
        let min = tprs.iter().copied().fold(f64::INFINITY, f64::min);
        total += min / max;
        used += 1;
    }
    if used == 0 {
        return Err(Error::AllClassesSkipped { metric: "eom" });
    }
    Ok((total / used as f64, skipped))
}

/// The distinct true labels united with the distinct predicted labels.
pub fn class_set(records: &[PredictionRecord]) -> BTreeSet<String> {
    let mut classes = BTreeSet::new();
    for r in records {
        classes.insert(r.true_label.clone());
        classes.insert(r.pred_label.clone());
    }
    classes
}

/// Computes every metric over the union class set.
///
/// When EOM has no eligible class at all (for example a single sensitive
/// group), it is reported as the vacuous 1.0 with every class listed as
/// skipped.
pub fn fairness_report(records: &[PredictionRecord]) -> Result<FairnessReport> {
    check_non_empty(records)?;
    let classes = class_set(records);
    let per_group_accuracy = group_accuracies(records)?;
    let pqd = pqd_from_accuracies(per_group_accuracy.values().copied())?;
    let (dpm_value, dpm_skipped) = dpm(records, &classes)?;
    let (eom_value, eom_skipped) = match eom(records, &classes) {
        Ok((value, skipped)) => (value, skipped),
        Err(Error::AllClassesSkipped { .. }) => (1.0, classes.iter().cloned().collect()),
        Err(e) => return Err(e),
    };
    Ok(FairnessReport {
        per_group_accuracy,
        pqd,
        dpm: dpm_value,
        eom: eom_value,
        dpm_skipped_classes: dpm_skipped,
        eom_skipped_classes: eom_skipped,
        n_records: records.len(),
    })
}
