//! Detection-quality evaluation: confusion counts and the six derived
//! metrics, permutation feature importance, and the cumulative feature-set
//! ablation. Fake is the positive class throughout.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_chacha::rand_core::SeedableRng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ensemble::{train_stack, StackConfig};
use crate::extract::AdRecord;
use crate::featurize::{ColumnKind, FeatureMatrix, Featurizer, FeaturizerConfig, FeatureTag};
use crate::learners::LearnerError;
use crate::types::{derive_seed, Label};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("predictions and labels disagree in length: {predictions} vs {labels}")]
    LengthMismatch { predictions: usize, labels: usize },
    #[error("nothing to evaluate")]
    Empty,
    #[error(transparent)]
    Learner(#[from] LearnerError),
    #[error(transparent)]
    Stack(#[from] crate::ensemble::StackError),
    #[error(transparent)]
    Featurize(#[from] crate::featurize::FeaturizeError),
}

/// Binary confusion counts with fake as the positive class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.tn + self.fp + self.fn_
    }
}

pub fn confusion(predictions: &[Label], labels: &[Label]) -> Result<ConfusionCounts, EvalError> {
    if predictions.len() != labels.len() {
        return Err(EvalError::LengthMismatch {
            predictions: predictions.len(),
            labels: labels.len(),
        });
    }
    if predictions.is_empty() {
        return Err(EvalError::Empty);
    }
    let mut c = ConfusionCounts {
        tp: 0,
        tn: 0,
        fp: 0,
        fn_: 0,
    };
    for (&p, &y) in predictions.iter().zip(labels) {
        match (p, y) {
            (Label::Fake, Label::Fake) => c.tp += 1,
            (Label::Real, Label::Real) => c.tn += 1,
            (Label::Fake, Label::Real) => c.fp += 1,
            (Label::Real, Label::Fake) => c.fn_ += 1,
        }
    }
    Ok(c)
}

/// The six metrics. A 0/0 ratio reports as 0 and the metric name is flagged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub accuracy: f64,
    pub fpr: f64,
    pub fnr: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub undefined: Vec<String>,
}

pub fn metrics(c: &ConfusionCounts) -> Result<MetricsReport, EvalError> {
    if c.total() == 0 {
        return Err(EvalError::Empty);
    }
    let mut undefined = Vec::new();
    let mut ratio = |name: &str, num: u64, den: u64| -> f64 {
        if den == 0 {
            undefined.push(name.to_string());
            0.0
        } else {
            num as f64 / den as f64
        }
    };
    let precision = ratio("precision", c.tp, c.tp + c.fp);
    let recall = ratio("recall", c.tp, c.tp + c.fn_);
    let fpr = ratio("fpr", c.fp, c.fp + c.tn);
    let fnr = ratio("fnr", c.fn_, c.fn_ + c.tp);
    let accuracy = (c.tp + c.tn) as f64 / c.total() as f64;
    let f1 = if precision + recall == 0.0 {
        undefined.push("f1".to_string());
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Ok(MetricsReport {
        precision,
        recall,
        f1,
        accuracy,
        fpr,
        fnr,
        undefined,
    })
}

pub fn accuracy_of(probs: &[f64], labels: &[Label]) -> f64 {
    probs
        .iter()
        .zip(labels)
        .filter(|(&p, &y)| Label::from_p_fake(p) == y)
        .count() as f64
        / labels.len() as f64
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ImportanceEntry {
    pub feature: String,
    pub mean_importance: f64,
    pub std: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ImportanceReport {
    pub baseline_accuracy: f64,
    pub n_shuffles: usize,
    pub entries: Vec<ImportanceEntry>,
}

/// Permutation feature importance: accuracy drop when a feature's values
/// are shuffled across rows. Tabular columns permute individually; every
/// text-derived column (statistics and n-gram counts) permutes as one
/// `description` block under a shared row permutation.
pub fn permutation_importance<P>(
    predict: P,
    x_test: &FeatureMatrix,
    labels: &[Label],
    n_shuffles: usize,
    seed: u64,
) -> Result<ImportanceReport, EvalError>
where
    P: Fn(&FeatureMatrix) -> Result<Vec<f64>, LearnerError>,
{
    if x_test.n_rows() != labels.len() {
        return Err(EvalError::LengthMismatch {
            predictions: x_test.n_rows(),
            labels: labels.len(),
        });
    }
    if x_test.n_rows() == 0 {
        return Err(EvalError::Empty);
    }
    let baseline_accuracy = accuracy_of(&predict(x_test)?, labels);

    // Groups: every non-text column alone, all text columns together.
    let mut groups: Vec<(String, Vec<usize>)> = Vec::new();
    let mut text_cols: Vec<usize> = Vec::new();
    for (i, meta) in x_test.columns().iter().enumerate() {
        if matches!(meta.kind, ColumnKind::TextStat | ColumnKind::NgramCount) {
            text_cols.push(i);
        } else {
            groups.push((meta.name.clone(), vec![i]));
        }
    }
    if !text_cols.is_empty() {
        groups.push(("description".to_string(), text_cols));
    }

    let n = x_test.n_rows();
    let mut entries = Vec::with_capacity(groups.len());
    for (g_idx, (name, cols)) in groups.iter().enumerate() {
        let mut scratch = x_test.clone();
        let mut accs = Vec::with_capacity(n_shuffles);
        for s in 0..n_shuffles {
            let mut rng =
                ChaCha8Rng::seed_from_u64(derive_seed(seed, (g_idx as u64) * 1_000 + s as u64));
            let mut perm: Vec<usize> = (0..n).collect();
            for i in (1..n).rev() {
                let j = rng.gen_range(0..=i);
                perm.swap(i, j);
            }
            for &c in cols {
                for (r, &src) in perm.iter().enumerate() {
                    scratch.set(r, c, x_test.get(src, c));
                }
            }
            accs.push(accuracy_of(&predict(&scratch)?, labels));
            // restore for the next shuffle of this group
            for &c in cols {
                for r in 0..n {
                    scratch.set(r, c, x_test.get(r, c));
                }
            }
        }
        let mean_acc = accs.iter().sum::<f64>() / n_shuffles as f64;
        let mean_importance = baseline_accuracy - mean_acc;
        let var = accs
            .iter()
            .map(|a| {
                let d = a - mean_acc;
                d * d
            })
            .sum::<f64>()
            / n_shuffles as f64;
        entries.push(ImportanceEntry {
            feature: name.clone(),
            mean_importance,
            std: var.sqrt(),
        });
    }
    entries.sort_by(|a, b| {
        b.mean_importance
            .partial_cmp(&a.mean_importance)
            .unwrap()
            .then_with(|| a.feature.cmp(&b.feature))
    });
    Ok(ImportanceReport {
        baseline_accuracy,
        n_shuffles,
        entries,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AblationRow {
    pub name: String,
    pub removed: Vec<FeatureTag>,
    pub metrics: MetricsReport,
}

/// Cumulative feature-set ablation: train and evaluate the full stack once
/// per removal step, same seeds throughout. The last row is the text-only
/// base model when the order covers all three tabular feature sets.
pub fn ablation(
    train: &[AdRecord],
    y_train: &[Label],
    test: &[AdRecord],
    y_test: &[Label],
    feat_cfg: FeaturizerConfig,
    stack_cfg: &StackConfig,
    order: &[FeatureTag],
) -> Result<Vec<AblationRow>, EvalError> {
    let featurizer = Featurizer::fit(train, feat_cfg)?;
    let x_train_full = featurizer.transform(train)?;
    let x_test_full = featurizer.transform(test)?;

    let mut rows = Vec::new();
    let mut removed: Vec<FeatureTag> = Vec::new();
    for step in 0..=order.len() {
        let name = if step == 0 {
            "full".to_string()
        } else {
            format!(
                "-{}",
                removed
                    .iter()
                    .map(|t| format!("{t:?}").to_lowercase())
                    .collect::<Vec<_>>()
                    .join("-")
            )
        };
        let keep: Vec<FeatureTag> = [
            FeatureTag::Basic,
            FeatureTag::Refined,
            FeatureTag::Spatial,
            FeatureTag::Text,
        ]
        .into_iter()
        .filter(|t| !removed.contains(t))
        .collect();
        let x_train = x_train_full.select_tags(&keep);
        let x_test = x_test_full.select_tags(&keep);
        let ens = train_stack(&x_train, y_train, stack_cfg)?;
        let preds: Vec<Label> = ens
            .predict(&x_test)?
            .into_iter()
            .map(|(l, _)| l)
            .collect();
        let m = metrics(&confusion(&preds, y_test)?)?;
        rows.push(AblationRow {
            name,
            removed: removed.clone(),
            metrics: m,
        });
        if step < order.len() {
            removed.push(order[step]);
        }
    }
    Ok(rows)
}

pub fn ablation_table(rows: &[AblationRow]) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:<28} {:>9} {:>8} {:>8} {:>9}\n",
        "configuration", "precision", "recall", "f1", "accuracy"
    ));
    for r in rows {
        out.push_str(&format!(
            "{:<28} {:>9.3} {:>8.3} {:>8.3} {:>9.3}\n",
            r.name, r.metrics.precision, r.metrics.recall, r.metrics.f1, r.metrics.accuracy
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn confusion_basics() {
        let c = confusion(
            &[Label::Fake, Label::Real],
            &[Label::Fake, Label::Real],
        )
        .unwrap();
        assert_eq!(
            c,
            ConfusionCounts {
                tp: 1,
                tn: 1,
                fp: 0,
                fn_: 0
            }
        );
        let c = confusion(
            &[Label::Fake; 5],
            &[Label::Fake, Label::Fake, Label::Fake, Label::Real, Label::Real],
        )
        .unwrap();
        assert_eq!(
            c,
            ConfusionCounts {
                tp: 3,
                tn: 0,
                fp: 2,
                fn_: 0
            }
        );
    }

    #[test]
    fn metrics_worked_example() {
        let m = metrics(&ConfusionCounts {
            tp: 3,
            fp: 1,
            fn_: 1,
            tn: 5,
        })
        .unwrap();
        assert_eq!(m.precision, 0.75);
        assert_eq!(m.recall, 0.75);
        assert_eq!(m.f1, 0.75);
        assert_eq!(m.accuracy, 0.8);
        assert!((m.fpr - 1.0 / 6.0).abs() < 1e-15);
        assert_eq!(m.fnr, 0.25);
        assert!(m.undefined.is_empty());
    }

    #[test]
    fn perfect_predictions() {
        let m = metrics(&ConfusionCounts {
            tp: 7,
            tn: 3,
            fp: 0,
            fn_: 0,
        })
        .unwrap();
        assert_eq!(
            (m.precision, m.recall, m.f1, m.accuracy, m.fpr, m.fnr),
            (1.0, 1.0, 1.0, 1.0, 0.0, 0.0)
        );
    }

    #[test]
    fn zero_division_convention() {
        // nothing predicted fake, nothing actually fake -> precision,
        // recall, fnr, f1 all 0/0
        let m = metrics(&ConfusionCounts {
            tp: 0,
            tn: 4,
            fp: 0,
            fn_: 0,
        })
        .unwrap();
        assert_eq!(m.precision, 0.0);
        assert_eq!(m.recall, 0.0);
        assert_eq!(m.f1, 0.0);
        assert_eq!(m.accuracy, 1.0);
        assert!(m.undefined.contains(&"precision".to_string()));
        assert!(m.undefined.contains(&"f1".to_string()));
    }

    #[test]
    fn accuracy_reconstruction_cross_check() {
        // 3,370 fake / 2,447 real with fpr 0.098 and fnr 0.074 puts
        // accuracy near 0.915-0.916.
        let fp = (0.098f64 * 2447.0).round() as u64;
        let fn_ = (0.074f64 * 3370.0).round() as u64;
        assert_eq!((fp, fn_), (240, 249));
        let c = ConfusionCounts {
            tp: 3370 - fn_,
            tn: 2447 - fp,
            fp,
            fn_,
        };
        let m = metrics(&c).unwrap();
        assert!((m.accuracy - 0.915).abs() <= 0.002, "accuracy {}", m.accuracy);
    }

    #[test]
    fn f1_between_precision_and_recall() {
        for tp in 0..8u64 {
            for fp in 0..8u64 {
                for fn_ in 0..8u64 {
                    let c = ConfusionCounts { tp, tn: 3, fp, fn_ };
                    if c.total() == 0 {
                        continue;
                    }
                    let m = metrics(&c).unwrap();
                    if m.undefined.is_empty() {
                        let lo = m.precision.min(m.recall);
                        let hi = m.precision.max(m.recall);
                        assert!(m.f1 >= lo - 1e-12 && m.f1 <= hi + 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn importance_of_constant_column_is_exactly_zero() {
        use crate::featurize::{ColumnMeta, FeatureTag};
        // model: predicts from column 0 only; column 1 constant
        let x = FeatureMatrix::new(
            vec![0.9, 5.0, 0.1, 5.0, 0.8, 5.0, 0.2, 5.0],
            4,
            vec![
                ColumnMeta {
                    name: "signal".into(),
                    kind: ColumnKind::Numeric,
                    tag: FeatureTag::Basic,
                },
                ColumnMeta {
                    name: "constant".into(),
                    kind: ColumnKind::Numeric,
                    tag: FeatureTag::Basic,
                },
            ],
        );
        let y = [Label::Fake, Label::Real, Label::Fake, Label::Real];
        let predict = |m: &FeatureMatrix| -> Result<Vec<f64>, LearnerError> {
            Ok((0..m.n_rows()).map(|r| m.get(r, 0)).collect())
        };
        let report = permutation_importance(predict, &x, &y, 5, 3).unwrap();
        let c = report
            .entries
            .iter()
            .find(|e| e.feature == "constant")
            .unwrap();
        assert_eq!(c.mean_importance, 0.0);
        assert_eq!(c.std, 0.0);
        let s = report.entries.iter().find(|e| e.feature == "signal").unwrap();
        assert!(s.mean_importance > 0.0);
    }

    #[test]
    fn importance_of_ignored_column_is_exactly_zero() {
        use crate::featurize::{ColumnMeta, FeatureTag};
        use crate::learners::{fit, LearnerSpec};
        // stump splits on column 0; column 1 varies but is ignored
        let x = FeatureMatrix::new(
            vec![0.0, 9.0, 0.0, 7.0, 1.0, 3.0, 1.0, 1.0],
            4,
            vec![
                ColumnMeta {
                    name: "used".into(),
                    kind: ColumnKind::Numeric,
                    tag: FeatureTag::Basic,
                },
                ColumnMeta {
                    name: "ignored".into(),
                    kind: ColumnKind::Numeric,
                    tag: FeatureTag::Basic,
                },
            ],
        );
        let y = [Label::Real, Label::Real, Label::Fake, Label::Fake];
        let model = fit(&LearnerSpec::preset("decision_tree").unwrap(), &x, &y).unwrap();
        let report =
            permutation_importance(|m| model.predict_proba(m), &x, &y, 5, 0).unwrap();
        let e = report.entries.iter().find(|e| e.feature == "ignored").unwrap();
        assert_eq!(e.mean_importance, 0.0);
    }
}
