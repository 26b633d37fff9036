use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How one raw numeric column becomes binary features.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnRule {
    /// Column must already be 0/1.
    Passthrough,
    /// `1` when the value is strictly above the threshold.
    Threshold(f64),
    /// One indicator per quantile bin; exactly one is active per node.
    QuantileBins(usize),
    /// Passthrough for 0/1 columns, quantile bins otherwise.
    Auto { bins: usize },
}

/// A rule after fitting on training rows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FittedColumn {
    Passthrough { name: String },
    Threshold { name: String, theta: f64 },
    /// Bin index = number of boundaries `b` with `value >= b`.
    Quantile { name: String, boundaries: Vec<f64> },
    /// Column was constant on the fit rows; one always-on indicator.
    Constant { name: String },
}

impl FittedColumn {
    pub fn name(&self) -> &str {
        match self {
            FittedColumn::Passthrough { name }
            | FittedColumn::Threshold { name, .. }
            | FittedColumn::Quantile { name, .. }
            | FittedColumn::Constant { name } => name,
        }
    }

    pub fn width(&self) -> usize {
        match self {
            FittedColumn::Quantile { boundaries, .. } => boundaries.len() + 1,
            _ => 1,
        }
    }

    fn encode(&self, value: f64, row: usize, out: &mut Vec<bool>) -> Result<()> {
        match self {
            FittedColumn::Passthrough { name } => {
                if value == 0.0 {
                    out.push(false);
                } else if value == 1.0 {
                    out.push(true);
                } else {
                    return Err(Error::Parse {
                        row,
                        column: name.clone(),
                        message: format!("passthrough column holds non-binary value {value}"),
                    });
                }
            }
            FittedColumn::Threshold { theta, .. } => out.push(value > *theta),
            FittedColumn::Quantile { boundaries, .. } => {
                let bin = boundaries.iter().filter(|&&b| value >= b).count();
                out.extend((0..=boundaries.len()).map(|i| i == bin));
            }
            FittedColumn::Constant { .. } => out.push(true),
        }
        Ok(())
    }
}

/// Fitted binarizer; recorded in run manifests for reproducibility.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FittedBinarizer {
    pub columns: Vec<FittedColumn>,
}

impl FittedBinarizer {
    /// Total binary feature count `M`.
    pub fn width(&self) -> usize {
        self.columns.iter().map(FittedColumn::width).sum()
    }

    /// Applies the fitted rules to raw rows. Row numbers in errors are 0-based.
    pub fn transform(&self, raw: &[Vec<f64>]) -> Result<Vec<Vec<bool>>> {
        let width = self.width();
        raw.iter()
            .enumerate()
            .map(|(row, values)| {
                if values.len() != self.columns.len() {
                    return Err(Error::Schema(format!(
                        "row {row} has {} raw features, binarizer expects {}",
                        values.len(),
                        self.columns.len()
                    )));
                }
                let mut bits = Vec::with_capacity(width);
                for (col, &v) in self.columns.iter().zip(values) {
                    col.encode(v, row, &mut bits)?;
                }
                Ok(bits)
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Binarized {
    pub features: Vec<Vec<bool>>,
    pub fitted: FittedBinarizer,
    pub warnings: Vec<String>,
}

/// Linear-interpolation quantile of sorted data.
fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

/// Fits `rules` on `fit_rows` and binarizes every row of `raw`.
///
/// `names` labels the raw columns for error messages and the fitted spec.
pub fn binarize(
    raw: &[Vec<f64>],
    names: &[String],
    rules: &[ColumnRule],
    fit_rows: &[usize],
) -> Result<Binarized> {
    if names.len() != rules.len() {
        return Err(Error::Schema(format!(
            "{} column names but {} binarization rules",
            names.len(),
            rules.len()
        )));
    }
    if fit_rows.is_empty() && !raw.is_empty() {
        return Err(Error::Schema("binarizer has no rows to fit on".into()));
    }
    let mut warnings = Vec::new();
    let mut columns = Vec::with_capacity(rules.len());
    for (c, (name, rule)) in names.iter().zip(rules).enumerate() {
        let mut values: Vec<f64> = Vec::with_capacity(fit_rows.len());
        for &r in fit_rows {
            let v = *raw.get(r).and_then(|row| row.get(c)).ok_or_else(|| {
                Error::Schema(format!("row {r} lacks raw feature column `{name}`"))
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    row: r,
                    column: name.clone(),
                    message: format!("non-finite value {v}"),
                });
            }
            values.push(v);
        }
        let is_binary = values.iter().all(|&v| v == 0.0 || v == 1.0);
        let bins = match rule {
            ColumnRule::Passthrough => {
                columns.push(FittedColumn::Passthrough { name: name.clone() });
                continue;
            }
            ColumnRule::Threshold(theta) => {
                columns.push(FittedColumn::Threshold {
                    name: name.clone(),
                    theta: *theta,
                });
                continue;
            }
            ColumnRule::Auto { .. } if is_binary => {
                columns.push(FittedColumn::Passthrough { name: name.clone() });
                continue;
            }
            ColumnRule::QuantileBins(q) | ColumnRule::Auto { bins: q } => *q,
        };
        if bins == 0 {
            return Err(Error::Schema(format!(
                "column `{name}`: quantile bins must be at least 1"
            )));
        }
        values.sort_by(f64::total_cmp);
        if values.first() == values.last() {
            warnings.push(format!(
                "column `{name}` is constant on fit rows; collapsed to a single always-on bin"
            ));
            columns.push(FittedColumn::Constant { name: name.clone() });
            continue;
        }
        let mut boundaries: Vec<f64> = (1..bins)
            .map(|k| quantile_sorted(&values, k as f64 / bins as f64))
            .collect();
        boundaries.dedup();
        columns.push(FittedColumn::Quantile {
            name: name.clone(),
            boundaries,
        });
    }
    let fitted = FittedBinarizer { columns };
    let features = fitted.transform(raw)?;
    Ok(Binarized {
        features,
        fitted,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn col(values: &[f64]) -> Vec<Vec<f64>> {
        values.iter().map(|&v| vec![v]).collect()
    }

    fn names() -> Vec<String> {
        vec!["x".to_string()]
    }

    fn bits(b: &Binarized) -> Vec<String> {
        b.features
            .iter()
            .map(|r| r.iter().map(|&x| if x { '1' } else { '0' }).collect())
            .collect()
    }

    #[test]
    fn passthrough_unchanged() {
        let raw = col(&[0.0, 1.0, 1.0]);
        let b = binarize(&raw, &names(), &[ColumnRule::Passthrough], &[0, 1, 2]).unwrap();
        assert_eq!(bits(&b), vec!["0", "1", "1"]);
    }

    #[test]
    fn median_split() {
        // Oracle: the median of {1,2,3,4} is 2.5, so 1,2 fall below and 3,4 above.
        let raw = col(&[1.0, 2.0, 3.0, 4.0]);
        let b = binarize(&raw, &names(), &[ColumnRule::QuantileBins(2)], &[0, 1, 2, 3]).unwrap();
        assert_eq!(bits(&b), vec!["10", "10", "01", "01"]);
        assert_eq!(
            b.fitted.columns[0],
            FittedColumn::Quantile {
                name: "x".into(),
                boundaries: vec![2.5]
            }
        );
    }

    #[test]
    fn threshold_zero() {
        let raw = col(&[-1.0, 5.0]);
        let b = binarize(&raw, &names(), &[ColumnRule::Threshold(0.0)], &[0, 1]).unwrap();
        assert_eq!(bits(&b), vec!["0", "1"]);
    }

    #[test]
    fn constant_column_collapses_with_warning() {
        let raw = col(&[3.0, 3.0, 7.0]);
        let b = binarize(&raw, &names(), &[ColumnRule::QuantileBins(4)], &[0, 1]).unwrap();
        assert_eq!(bits(&b), vec!["1", "1", "1"]);
        assert_eq!(b.warnings.len(), 1);
    }

    #[test]
    fn fit_on_train_rows_only() {
        // Boundaries come from rows 0 and 1 only; row 2 is an outlier.
        let raw = col(&[0.0, 10.0, 1000.0]);
        let b = binarize(&raw, &names(), &[ColumnRule::QuantileBins(2)], &[0, 1]).unwrap();
        assert_eq!(bits(&b), vec!["10", "01", "01"]);
    }

    #[test]
    fn auto_detects_binary() {
        let raw: Vec<Vec<f64>> = vec![vec![0.0, 1.5], vec![1.0, 2.5]];
        let b = binarize(
            &raw,
            &["a".into(), "b".into()],
            &[ColumnRule::Auto { bins: 4 }, ColumnRule::Auto { bins: 4 }],
            &[0, 1],
        )
        .unwrap();
        assert!(matches!(b.fitted.columns[0], FittedColumn::Passthrough { .. }));
        assert!(matches!(b.fitted.columns[1], FittedColumn::Quantile { .. }));
    }

    #[test]
    fn passthrough_rejects_non_binary() {
        let raw = col(&[0.0, 2.0]);
        let err = binarize(&raw, &names(), &[ColumnRule::Passthrough], &[0, 1]).unwrap_err();
        assert!(matches!(err, Error::Parse { row: 1, .. }));
    }

    proptest::proptest! {
        #[test]
        fn quantile_bins_one_hot(values in proptest::collection::vec(-1e6f64..1e6, 2..40), q in 1usize..8) {
            let raw = col(&values);
            let rows: Vec<usize> = (0..values.len()).collect();
            let b = binarize(&raw, &names(), &[ColumnRule::QuantileBins(q)], &rows).unwrap();
            let width = b.fitted.width();
            for row in &b.features {
                proptest::prop_assert_eq!(row.len(), width);
                proptest::prop_assert_eq!(row.iter().filter(|&&x| x).count(), 1);
            }
        }
    }
}
