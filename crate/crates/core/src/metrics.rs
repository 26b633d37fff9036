//! Group fairness and utility metrics.
//!
//! All rates are empirical frequencies over the evaluated nodes. Internal
//! values stay in `[0, 1]`; percentage-point views multiply by 100.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_POSITIVE_CLASS: usize = 1;

/// Predictions, ground truth and group ids for the nodes under evaluation.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PredictionSet {
    predicted: Vec<usize>,
    actual: Vec<usize>,
    sensitive: Vec<usize>,
    positive_class: usize,
}

impl PredictionSet {
    pub fn new(predicted: Vec<usize>, actual: Vec<usize>, sensitive: Vec<usize>) -> Result<Self> {
        if predicted.len() != actual.len() || predicted.len() != sensitive.len() {
            return Err(Error::Schema(format!(
                "prediction arrays differ in length: {}, {}, {}",
                predicted.len(),
                actual.len(),
                sensitive.len()
            )));
        }
        Ok(Self {
            predicted,
            actual,
            sensitive,
            positive_class: DEFAULT_POSITIVE_CLASS,
        })
    }

    /// Restricts full-length arrays to the node ids in `mask`.
    pub fn masked(
        predicted: &[usize],
        actual: &[usize],
        sensitive: &[usize],
        mask: &[usize],
    ) -> Result<Self> {
        let pick = |v: &[usize]| -> Result<Vec<usize>> {
            mask.iter()
                .map(|&i| {
                    v.get(i).copied().ok_or_else(|| {
                        Error::Schema(format!("mask index {i} out of range {}", v.len()))
                    })
                })
                .collect()
        };
        Self::new(pick(predicted)?, pick(actual)?, pick(sensitive)?)
    }

    pub fn with_positive_class(mut self, class: usize) -> Self {
        self.positive_class = class;
        self
    }

    pub fn len(&self) -> usize {
        self.predicted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.predicted.is_empty()
    }

    pub fn predicted(&self) -> &[usize] {
        &self.predicted
    }

    pub fn actual(&self) -> &[usize] {
        &self.actual
    }

    pub fn sensitive(&self) -> &[usize] {
        &self.sensitive
    }

    pub fn positive_class(&self) -> usize {
        self.positive_class
    }

    fn groups(&self) -> BTreeSet<usize> {
        self.sensitive.iter().copied().collect()
    }

    fn rows(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        self.predicted
            .iter()
            .zip(&self.actual)
            .zip(&self.sensitive)
            .map(|((&p, &a), &s)| (p, a, s))
    }

    /// `P(Y_hat = positive | S = group)`, or `None` if the group is absent.
    pub fn positive_rate(&self, group: usize) -> Option<f64> {
        let (mut n, mut pos) = (0usize, 0usize);
        for (p, _, s) in self.rows() {
            if s == group {
                n += 1;
                pos += usize::from(p == self.positive_class);
            }
        }
        (n > 0).then(|| pos as f64 / n as f64)
    }

    /// `P(Y_hat = positive | Y = positive, S = group)`.
    pub fn true_positive_rate(&self, group: usize) -> Option<f64> {
        let (mut n, mut tp) = (0usize, 0usize);
        for (p, a, s) in self.rows() {
            if s == group && a == self.positive_class {
                n += 1;
                tp += usize::from(p == self.positive_class);
            }
        }
        (n > 0).then(|| tp as f64 / n as f64)
    }

    fn require_binary_groups(&self) -> Result<()> {
        if let Some(&g) = self.groups().iter().find(|&&g| g > 1) {
            return Err(Error::Spec(format!(
                "binary group metric applied to data containing group {g}"
            )));
        }
        Ok(())
    }
}

/// `|P(Y_hat=1 | S=0) - P(Y_hat=1 | S=1)|`.
pub fn dp_gap_binary(preds: &PredictionSet) -> Result<f64> {
    preds.require_binary_groups()?;
    let r0 = preds.positive_rate(0).ok_or(Error::UndefinedGroup(0))?;
    let r1 = preds.positive_rate(1).ok_or(Error::UndefinedGroup(1))?;
    Ok((r0 - r1).abs())
}

/// Multi-group, multi-class demographic parity gap: for each group present,
/// the largest deviation of a class's conditional prediction rate from its
/// marginal rate, averaged over the groups present.
pub fn dp_gap_multi(preds: &PredictionSet) -> Result<f64> {
    if preds.is_empty() {
        return Err(Error::EmptyEvaluation);
    }
    let total = preds.len() as f64;
    let mut marginal: BTreeMap<usize, usize> = BTreeMap::new();
    let mut by_group: BTreeMap<usize, (usize, BTreeMap<usize, usize>)> = BTreeMap::new();
    for (p, _, s) in preds.rows() {
        *marginal.entry(p).or_insert(0) += 1;
        let entry = by_group.entry(s).or_default();
        entry.0 += 1;
        *entry.1.entry(p).or_insert(0) += 1;
    }
    let mut sum = 0.0;
    for (size, counts) in by_group.values() {
        let worst = marginal
            .iter()
            .map(|(class, &m)| {
                let c = counts.get(class).copied().unwrap_or(0);
                (m as f64 / total - c as f64 / *size as f64).abs()
            })
            .fold(0.0, f64::max);
        sum += worst;
    }
    Ok(sum / by_group.len() as f64)
}

/// `|TPR(S=0) - TPR(S=1)|` for the positive class.
pub fn eo_gap(preds: &PredictionSet) -> Result<f64> {
    preds.require_binary_groups()?;
    let tpr = |g: usize| {
        preds.true_positive_rate(g).ok_or_else(|| {
            Error::UndefinedConditional(format!("group {g} has no actual positives"))
        })
    };
    Ok((tpr(0)? - tpr(1)?).abs())
}

/// `min(r0, r1) / max(r0, r1)` over group positive-prediction rates, in `[0, 1]`.
pub fn prule(preds: &PredictionSet) -> Result<f64> {
    preds.require_binary_groups()?;
    let r0 = preds.positive_rate(0).ok_or(Error::UndefinedGroup(0))?;
    let r1 = preds.positive_rate(1).ok_or(Error::UndefinedGroup(1))?;
    let hi = r0.max(r1);
    if hi == 0.0 {
        return Err(Error::UndefinedConditional(
            "neither group receives a positive prediction".into(),
        ));
    }
    Ok(r0.min(r1) / hi)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Utility {
    pub acc: f64,
    pub f1: f64,
}

fn f1_for(preds: &PredictionSet, class: usize) -> f64 {
    let (mut tp, mut fp, mut fnn) = (0usize, 0usize, 0usize);
    for (p, a, _) in preds.rows() {
        match (p == class, a == class) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fnn += 1,
            _ => {}
        }
    }
    if tp == 0 {
        return 0.0;
    }
    let precision = tp as f64 / (tp + fp) as f64;
    let recall = tp as f64 / (tp + fnn) as f64;
    2.0 * precision * recall / (precision + recall)
}

/// Accuracy, and F1 of the positive class (binary) or macro-F1 over the
/// classes that occur in either predictions or labels.
pub fn utility(preds: &PredictionSet) -> Result<Utility> {
    if preds.is_empty() {
        return Err(Error::EmptyEvaluation);
    }
    let correct = preds.rows().filter(|(p, a, _)| p == a).count();
    let acc = correct as f64 / preds.len() as f64;
    let classes: BTreeSet<usize> = preds
        .predicted
        .iter()
        .chain(&preds.actual)
        .copied()
        .collect();
    let binary = classes.iter().all(|&c| c <= 1);
    let f1 = if binary {
        f1_for(preds, preds.positive_class)
    } else {
        classes.iter().map(|&c| f1_for(preds, c)).sum::<f64>() / classes.len() as f64
    };
    Ok(Utility { acc, f1 })
}

/// Per-group contingency tallies.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupCounts {
    pub nodes: usize,
    pub predicted_positive: usize,
    pub actual_positive: usize,
    pub true_positive: usize,
}

/// Evaluation summary. Gap fields are internal `[0, 1]` values; `None`
/// marks an undefined conditional rather than a measured zero.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FairnessReport {
    pub acc: f64,
    pub f1: f64,
    /// Binary form when exactly groups {0, 1} are present, multi-group form otherwise.
    pub dp_gap: Option<f64>,
    pub dp_gap_multi: Option<f64>,
    pub eo_gap: Option<f64>,
    pub prule: Option<f64>,
    pub per_group_positive_rate: BTreeMap<usize, f64>,
    pub counts: BTreeMap<usize, GroupCounts>,
    pub evaluated: usize,
}

/// Stable external field names, in output order.
pub const REPORT_FIELDS: [&str; 5] = ["acc", "f1", "dp_gap_pp", "eo_gap_pp", "prule"];

impl FairnessReport {
    pub fn compute(preds: &PredictionSet) -> Result<Self> {
        let Utility { acc, f1 } = utility(preds)?;
        let groups = preds.groups();
        let binary_groups = groups.iter().copied().eq([0usize, 1]);
        let dp_gap_multi = dp_gap_multi(preds).ok();
        let dp_gap = if binary_groups {
            dp_gap_binary(preds).ok()
        } else {
            dp_gap_multi
        };
        let mut counts: BTreeMap<usize, GroupCounts> = BTreeMap::new();
        let pos = preds.positive_class;
        for (p, a, s) in preds.rows() {
            let c = counts.entry(s).or_default();
            c.nodes += 1;
            c.predicted_positive += usize::from(p == pos);
            c.actual_positive += usize::from(a == pos);
            c.true_positive += usize::from(p == pos && a == pos);
        }
        let per_group_positive_rate = counts
            .iter()
            .map(|(&g, c)| (g, c.predicted_positive as f64 / c.nodes as f64))
            .collect();
        Ok(Self {
            acc,
            f1,
            dp_gap,
            dp_gap_multi,
            eo_gap: if binary_groups { eo_gap(preds).ok() } else { None },
            prule: if binary_groups { prule(preds).ok() } else { None },
            per_group_positive_rate,
            counts,
            evaluated: preds.len(),
        })
    }

    pub fn dp_gap_pp(&self) -> Option<f64> {
        self.dp_gap.map(|g| g * 100.0)
    }

    pub fn eo_gap_pp(&self) -> Option<f64> {
        self.eo_gap.map(|g| g * 100.0)
    }

    pub fn prule_pct(&self) -> Option<f64> {
        self.prule.map(|r| r * 100.0)
    }

    /// External values keyed by [`REPORT_FIELDS`].
    pub fn external_values(&self) -> [Option<f64>; 5] {
        [
            Some(self.acc),
            Some(self.f1),
            self.dp_gap_pp(),
            self.eo_gap_pp(),
            self.prule_pct(),
        ]
    }

    /// `key=value` lines; undefined values print as `NA`.
    pub fn to_kv(&self) -> String {
        let mut out = String::new();
        for (k, v) in REPORT_FIELDS.iter().zip(self.external_values()) {
            let _ = writeln!(out, "{k}={}", format_value(v));
        }
        out
    }

    /// Aligned two-line table with the same fields as [`Self::to_kv`].
    pub fn to_table(&self) -> String {
        let cells: Vec<String> = self.external_values().iter().map(|v| format_value(*v)).collect();
        let widths: Vec<usize> = REPORT_FIELDS
            .iter()
            .zip(&cells)
            .map(|(k, c)| k.len().max(c.len()))
            .collect();
        let row = |items: Vec<&str>| {
            items
                .iter()
                .zip(&widths)
                .map(|(s, w)| format!("{s:>w$}"))
                .collect::<Vec<_>>()
                .join("  ")
        };
        format!(
            "{}\n{}\n",
            row(REPORT_FIELDS.to_vec()),
            row(cells.iter().map(String::as_str).collect())
        )
    }
}

pub fn format_value(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| format!("{x}"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(pred: &[usize], actual: &[usize], groups: &[usize]) -> PredictionSet {
        PredictionSet::new(pred.to_vec(), actual.to_vec(), groups.to_vec()).unwrap()
    }

    #[test]
    fn dp_binary_examples() {
        let s = set(&[1, 1, 0, 0, 1, 0, 0, 0], &[0; 8], &[0, 0, 0, 0, 1, 1, 1, 1]);
        assert_eq!(dp_gap_binary(&s).unwrap(), 0.25);
        let s = set(&[1, 0, 1, 0], &[0; 4], &[0, 0, 1, 1]);
        assert_eq!(dp_gap_binary(&s).unwrap(), 0.0);
        let s = set(&[1, 1, 0, 0], &[0; 4], &[0, 0, 1, 1]);
        assert_eq!(dp_gap_binary(&s).unwrap(), 1.0);
        let s = set(&[1, 1], &[0; 2], &[0, 0]);
        assert!(matches!(dp_gap_binary(&s), Err(Error::UndefinedGroup(1))));
    }

    #[test]
    fn dp_multi_examples() {
        let s = set(&[1, 0, 1, 0], &[0; 4], &[0, 0, 1, 1]);
        assert_eq!(dp_gap_multi(&s).unwrap(), 0.0);
        let s = set(&[1, 0, 1], &[0; 3], &[0, 0, 0]);
        assert_eq!(dp_gap_multi(&s).unwrap(), 0.0);
        assert!(matches!(
            dp_gap_multi(&set(&[], &[], &[])),
            Err(Error::EmptyEvaluation)
        ));
    }

    #[test]
    fn dp_multi_three_groups() {
        // Marginals: class0 3/6, class1 2/6, class2 1/6.
        // g0 {0,0}: max(|.5-1|, |1/3|, |1/6|) = .5
        // g1 {1,1}: max(.5, |1/3-1|, 1/6) = 2/3
        // g2 {0,2}: max(0, 1/3, |1/6-.5|) = 1/3
        let s = set(&[0, 0, 1, 1, 0, 2], &[0; 6], &[0, 0, 1, 1, 2, 2]);
        let expected = (0.5 + 2.0 / 3.0 + 1.0 / 3.0) / 3.0;
        assert!((dp_gap_multi(&s).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn eo_examples() {
        // Group 0: 5 positives, 4 predicted positive; group 1: 5 positives, 3 hit.
        let pred = [1, 1, 1, 1, 0, 1, 1, 1, 0, 0];
        let actual = [1; 10];
        let groups = [0, 0, 0, 0, 0, 1, 1, 1, 1, 1];
        assert!((eo_gap(&set(&pred, &actual, &groups)).unwrap() - 0.2).abs() < 1e-12);
        assert_eq!(eo_gap(&set(&[1, 0, 1, 0], &[1, 0, 1, 0], &[0, 0, 1, 1])).unwrap(), 0.0);
        let s = set(&[1, 0, 1, 0], &[1, 0, 0, 0], &[0, 0, 1, 1]);
        assert!(matches!(eo_gap(&s), Err(Error::UndefinedConditional(_))));
    }

    #[test]
    fn prule_examples() {
        let s = set(&[1, 1, 0, 0, 1, 0, 0, 0], &[0; 8], &[0, 0, 0, 0, 1, 1, 1, 1]);
        assert_eq!(prule(&s).unwrap() * 100.0, 50.0);
        let s = set(&[1, 0, 1, 0], &[0; 4], &[0, 0, 1, 1]);
        assert_eq!(prule(&s).unwrap() * 100.0, 100.0);
        let s = set(&[0, 0, 1, 0], &[0; 4], &[0, 0, 1, 1]);
        assert_eq!(prule(&s).unwrap(), 0.0);
        let s = set(&[0, 0, 0, 0], &[0; 4], &[0, 0, 1, 1]);
        assert!(matches!(prule(&s), Err(Error::UndefinedConditional(_))));
    }

    #[test]
    fn utility_examples() {
        let u = utility(&set(&[1, 0, 1], &[1, 0, 1], &[0; 3])).unwrap();
        assert_eq!((u.acc, u.f1), (1.0, 1.0));
        let u = utility(&set(&[1, 1, 0, 0], &[1, 0, 1, 0], &[0; 4])).unwrap();
        assert_eq!((u.acc, u.f1), (0.5, 0.5));
        let u = utility(&set(&[0, 0, 0], &[1, 0, 1], &[0; 3])).unwrap();
        assert_eq!(u.f1, 0.0);
        assert!(matches!(
            utility(&set(&[], &[], &[])),
            Err(Error::EmptyEvaluation)
        ));
    }

    #[test]
    fn macro_f1_multiclass() {
        // class0 f1 = 1, class1: tp1 fp0 fn1 -> 2/3, class2: tp1 fp1 fn0 -> 2/3
        let u = utility(&set(&[0, 1, 2, 2], &[0, 1, 1, 2], &[0; 4])).unwrap();
        assert!((u.f1 - (1.0 + 2.0 / 3.0 + 2.0 / 3.0) / 3.0).abs() < 1e-12);
    }

    #[test]
    fn report_formats_share_values() {
        let s = set(&[1, 1, 0, 0, 1, 0, 0, 0], &[1, 0, 1, 0, 1, 1, 0, 0], &[0, 0, 0, 0, 1, 1, 1, 1]);
        let r = FairnessReport::compute(&s).unwrap();
        assert_eq!(r.dp_gap_pp(), Some(25.0));
        let kv = r.to_kv();
        assert!(kv.contains("dp_gap_pp=25\n"));
        let table = r.to_table();
        let values: Vec<&str> = table.lines().nth(1).unwrap().split_whitespace().collect();
        let kv_values: Vec<&str> = kv.lines().map(|l| l.split_once('=').unwrap().1).collect();
        assert_eq!(values, kv_values);
    }

    #[test]
    fn undefined_values_print_na() {
        let s = set(&[0, 0, 0, 0], &[0, 0, 0, 0], &[0, 0, 1, 1]);
        let r = FairnessReport::compute(&s).unwrap();
        assert_eq!(r.eo_gap, None);
        assert_eq!(r.prule, None);
        assert!(r.to_kv().contains("eo_gap_pp=NA"));
    }
}
