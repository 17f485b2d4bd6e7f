//! Confusion matrices, per-class and macro metrics, one-vs-rest ROC curves
//! and trapezoidal AUC.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::io_util::{fmt_sig, write_atomic};
use crate::{Scalar, NUM_CLASSES};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("{truth} true labels but {pred} predictions")]
    LengthMismatch { truth: usize, pred: usize },
    #[error("label {0} is outside 0..{NUM_CLASSES}")]
    LabelOutOfRange(usize),
    #[error("confusion matrix is empty")]
    Empty,
    #[error("ROC needs at least one positive and one negative sample ({positives} positives, {negatives} negatives)")]
    DegenerateClass { positives: usize, negatives: usize },
    #[error("non-finite score at index {0}")]
    NonFiniteScore(usize),
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = EvalError> = std::result::Result<T, E>;

/// Counts indexed `[true class][predicted class]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ConfusionMatrix {
    pub counts: [[u64; NUM_CLASSES]; NUM_CLASSES],
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..NUM_CLASSES).map(|c| self.counts[c][c]).sum()
    }

    pub fn row_sum(&self, c: usize) -> u64 {
        self.counts[c].iter().sum()
    }

    pub fn col_sum(&self, c: usize) -> u64 {
        self.counts.iter().map(|r| r[c]).sum()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("true\\pred,0,1,2\n");
        for (t, row) in self.counts.iter().enumerate() {
            writeln!(out, "{t},{},{},{}", row[0], row[1], row[2]).expect("write to string");
        }
        out
    }
}

fn check_label(l: usize) -> Result<()> {
    if l >= NUM_CLASSES {
        return Err(EvalError::LabelOutOfRange(l));
    }
    Ok(())
}

pub fn confusion_matrix(truth: &[usize], pred: &[usize]) -> Result<ConfusionMatrix> {
    if truth.len() != pred.len() {
        return Err(EvalError::LengthMismatch {
            truth: truth.len(),
            pred: pred.len(),
        });
    }
    let mut cm = ConfusionMatrix::default();
    for (&t, &p) in truth.iter().zip(pred) {
        check_label(t)?;
        check_label(p)?;
        cm.counts[t][p] += 1;
    }
    Ok(cm)
}

/// One-vs-rest counts for a single class.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BinaryCounts {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    pub fn_: u64,
}

impl BinaryCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.tn + self.fp + self.fn_
    }
}

pub fn binary_reduce(cm: &ConfusionMatrix, cls: usize) -> Result<BinaryCounts> {
    check_label(cls)?;
    let tp = cm.counts[cls][cls];
    let fn_ = cm.row_sum(cls) - tp;
    let fp = cm.col_sum(cls) - tp;
    let tn = cm.total() - tp - fn_ - fp;
    Ok(BinaryCounts { tp, tn, fp, fn_ })
}

/// Marks metrics whose denominator was zero (reported as 0).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ZeroDivision {
    pub precision: bool,
    pub recall: bool,
    pub f1: bool,
}

impl ZeroDivision {
    pub fn any(&self) -> bool {
        self.precision || self.recall || self.f1
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BinaryMetrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub zero_division: ZeroDivision,
}

fn ratio(num: f64, den: f64) -> (f64, bool) {
    if den == 0.0 {
        (0.0, true)
    } else {
        (num / den, false)
    }
}

impl BinaryMetrics {
    /// Accuracy `(TP+TN)/(TP+TN+FP+FN)`, precision `TP/(TP+FP)`,
    /// recall `TP/(TP+FN)` and `F1 = 2PR/(P+R)`.
    pub fn from_counts(b: &BinaryCounts) -> Self {
        let (tp, tn, fp, fn_) = (b.tp as f64, b.tn as f64, b.fp as f64, b.fn_ as f64);
        let (accuracy, _) = ratio(tp + tn, tp + tn + fp + fn_);
        let (precision, p0) = ratio(tp, tp + fp);
        let (recall, r0) = ratio(tp, tp + fn_);
        let (f1, f0) = ratio(2.0 * precision * recall, precision + recall);
        Self {
            accuracy,
            precision,
            recall,
            f1,
            zero_division: ZeroDivision {
                precision: p0,
                recall: r0,
                f1: f0,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub per_class: [BinaryMetrics; NUM_CLASSES],
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    /// `trace / total`.
    pub accuracy: f64,
    /// One-vs-rest AUC; `None` where the class had no positives or no negatives.
    pub auc: [Option<f64>; NUM_CLASSES],
}

impl MetricsReport {
    pub fn with_auc(mut self, auc: [Option<f64>; NUM_CLASSES]) -> Self {
        self.auc = auc;
        self
    }

    pub fn to_csv(&self) -> String {
        let auc_cell = |a: Option<f64>| a.map(fmt_sig).unwrap_or_default();
        let mut out = String::from("scope,accuracy,precision,recall,f1,auc\n");
        for (c, m) in self.per_class.iter().enumerate() {
            writeln!(
                out,
                "class{c},{},{},{},{},{}",
                fmt_sig(m.accuracy),
                fmt_sig(m.precision),
                fmt_sig(m.recall),
                fmt_sig(m.f1),
                auc_cell(self.auc[c])
            )
            .expect("write to string");
        }
        let aucs: Vec<f64> = self.auc.iter().flatten().copied().collect();
        let macro_auc =
            (aucs.len() == NUM_CLASSES).then(|| aucs.iter().sum::<f64>() / NUM_CLASSES as f64);
        let macro_acc = self.per_class.iter().map(|m| m.accuracy).sum::<f64>() / NUM_CLASSES as f64;
        writeln!(
            out,
            "macro,{},{},{},{},{}",
            fmt_sig(macro_acc),
            fmt_sig(self.macro_precision),
            fmt_sig(self.macro_recall),
            fmt_sig(self.macro_f1),
            auc_cell(macro_auc)
        )
        .expect("write to string");
        writeln!(out, "overall,{},,,,", fmt_sig(self.accuracy)).expect("write to string");
        out
    }
}

/// Per-class metrics via one-vs-rest reduction plus unweighted macro means.
pub fn classification_metrics(cm: &ConfusionMatrix) -> Result<MetricsReport> {
    let total = cm.total();
    if total == 0 {
        return Err(EvalError::Empty);
    }
    let mut per_class = [BinaryMetrics::from_counts(&binary_reduce(cm, 0)?); NUM_CLASSES];
    for (c, slot) in per_class.iter_mut().enumerate().skip(1) {
        *slot = BinaryMetrics::from_counts(&binary_reduce(cm, c)?);
    }
    let mean =
        |f: fn(&BinaryMetrics) -> f64| per_class.iter().map(f).sum::<f64>() / NUM_CLASSES as f64;
    Ok(MetricsReport {
        macro_precision: mean(|m| m.precision),
        macro_recall: mean(|m| m.recall),
        macro_f1: mean(|m| m.f1),
        accuracy: cm.trace() as f64 / total as f64,
        per_class,
        auc: [None; NUM_CLASSES],
    })
}

/// ROC points from `(0, 0)` to `(1, 1)`, as `(fpr, tpr)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RocCurve {
    pub points: Vec<(f64, f64)>,
}

impl RocCurve {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("fpr,tpr\n");
        for &(f, t) in &self.points {
            writeln!(out, "{},{}", fmt_sig(f), fmt_sig(t)).expect("write to string");
        }
        out
    }
}

/// Sweeps thresholds from the highest score down; tied scores move the
/// curve as one step.
pub fn roc_curve<T: Scalar>(positive: &[bool], scores: &[T]) -> Result<RocCurve> {
    if positive.len() != scores.len() {
        return Err(EvalError::LengthMismatch {
            truth: positive.len(),
            pred: scores.len(),
        });
    }
    if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
        return Err(EvalError::NonFiniteScore(i));
    }
    let pos = positive.iter().filter(|&&p| p).count();
    let neg = positive.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(EvalError::DegenerateClass {
            positives: pos,
            negatives: neg,
        });
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).expect("finite scores"));

    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut k = 0;
    while k < order.len() {
        let s = scores[order[k]];
        while k < order.len() && scores[order[k]] == s {
            if positive[order[k]] {
                tp += 1;
            } else {
                fp += 1;
            }
            k += 1;
        }
        points.push((fp as f64 / neg as f64, tp as f64 / pos as f64));
    }
    if points.last() != Some(&(1.0, 1.0)) {
        points.push((1.0, 1.0));
    }
    Ok(RocCurve { points })
}

/// ROC of class `cls` against the rest, scored by its predicted probability.
pub fn roc_one_vs_rest<T: Scalar>(
    truth: &[usize],
    class_scores: &[T],
    cls: usize,
) -> Result<RocCurve> {
    check_label(cls)?;
    let positive: Vec<bool> = truth.iter().map(|&t| t == cls).collect();
    roc_curve(&positive, class_scores)
}

/// Trapezoidal area under the curve over the fpr axis.
pub fn auc(curve: &RocCurve) -> f64 {
    curve
        .points
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[0].1 + w[1].1) / 2.0)
        .sum()
}

/// Writes `metrics.csv`, `confusion.csv` and `roc_class{0,1,2}.csv`.
/// Classes without a curve get no ROC file.
pub fn export_report(
    report: &MetricsReport,
    cm: &ConfusionMatrix,
    curves: &[Option<RocCurve>; NUM_CLASSES],
    dir: &Path,
) -> Result<Vec<PathBuf>> {
    let mut files = vec![
        (dir.join("metrics.csv"), report.to_csv()),
        (dir.join("confusion.csv"), cm.to_csv()),
    ];
    for (c, curve) in curves.iter().enumerate() {
        if let Some(curve) = curve {
            files.push((dir.join(format!("roc_class{c}.csv")), curve.to_csv()));
        }
    }
    let mut written = Vec::with_capacity(files.len());
    for (path, body) in files {
        write_atomic(&path, body.as_bytes()).map_err(|source| EvalError::Io {
            path: path.clone(),
            source,
        })?;
        written.push(path);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn confusion_examples() {
        let cm = confusion_matrix(&[0, 1, 2], &[0, 1, 2]).unwrap();
        assert_eq!(cm.counts, [[1, 0, 0], [0, 1, 0], [0, 0, 1]]);
        let cm = confusion_matrix(&[0, 0, 1], &[0, 1, 1]).unwrap();
        assert_eq!(cm.counts, [[1, 1, 0], [0, 1, 0], [0, 0, 0]]);
        assert!(matches!(
            confusion_matrix(&[0], &[]),
            Err(EvalError::LengthMismatch { .. })
        ));
        assert!(matches!(
            confusion_matrix(&[3], &[0]),
            Err(EvalError::LabelOutOfRange(3))
        ));
    }

    #[test]
    fn binary_reduction() {
        let cm = ConfusionMatrix {
            counts: [[50, 5, 0], [5, 40, 0], [0, 0, 0]],
        };
        let b = binary_reduce(&cm, 0).unwrap();
        assert_eq!(
            b,
            BinaryCounts {
                tp: 50,
                tn: 40,
                fp: 5,
                fn_: 5
            }
        );
        for c in 0..3 {
            assert_eq!(binary_reduce(&cm, c).unwrap().total(), cm.total());
        }
        assert!(binary_reduce(&cm, 3).is_err());

        let diag = ConfusionMatrix {
            counts: [[3, 0, 0], [0, 4, 0], [0, 0, 5]],
        };
        for c in 0..3 {
            let b = binary_reduce(&diag, c).unwrap();
            assert_eq!((b.fp, b.fn_), (0, 0));
        }
    }

    #[test]
    fn metric_equations() {
        let m = BinaryMetrics::from_counts(&BinaryCounts {
            tp: 50,
            tn: 40,
            fp: 5,
            fn_: 5,
        });
        assert_eq!(m.accuracy, 0.9);
        assert_eq!(m.precision, 50.0 / 55.0);
        assert_eq!(m.recall, 50.0 / 55.0);
        assert!((m.f1 - 50.0 / 55.0).abs() < 1e-15);
        assert!(!m.zero_division.any());
    }

    #[test]
    fn diagonal_is_perfect_and_empty_class_flags() {
        let diag = ConfusionMatrix {
            counts: [[3, 0, 0], [0, 4, 0], [0, 0, 5]],
        };
        let r = classification_metrics(&diag).unwrap();
        assert_eq!(r.accuracy, 1.0);
        assert_eq!(
            (r.macro_precision, r.macro_recall, r.macro_f1),
            (1.0, 1.0, 1.0)
        );

        let cm = ConfusionMatrix {
            counts: [[50, 5, 0], [5, 40, 0], [0, 0, 0]],
        };
        let r = classification_metrics(&cm).unwrap();
        assert_eq!(r.per_class[2].precision, 0.0);
        assert!(r.per_class[2].zero_division.precision && r.per_class[2].zero_division.recall);
        assert!(matches!(
            classification_metrics(&ConfusionMatrix::default()),
            Err(EvalError::Empty)
        ));
    }

    #[test]
    fn roc_examples() {
        // positives scored 0.9, 0.4; negatives 0.6, 0.1
        let c = roc_curve(&[true, true, false, false], &[0.9, 0.4, 0.6, 0.1]).unwrap();
        assert_eq!(
            c.points,
            vec![(0.0, 0.0), (0.0, 0.5), (0.5, 0.5), (0.5, 1.0), (1.0, 1.0)]
        );
        assert_eq!(auc(&c), 0.75);

        let flat = roc_curve(&[true, false, true], &[0.3, 0.3, 0.3]).unwrap();
        assert_eq!(flat.points, vec![(0.0, 0.0), (1.0, 1.0)]);
        assert_eq!(auc(&flat), 0.5);

        let perfect = roc_curve(&[true, true, false], &[0.8, 0.7, 0.1]).unwrap();
        assert!(perfect.points.contains(&(0.0, 1.0)));
        assert_eq!(auc(&perfect), 1.0);

        assert!(matches!(
            roc_curve(&[true, true], &[0.1, 0.2]),
            Err(EvalError::DegenerateClass { .. })
        ));
        assert!(matches!(
            roc_curve(&[true, false], &[f64::NAN, 0.2]),
            Err(EvalError::NonFiniteScore(0))
        ));
    }

    #[test]
    fn export_is_deterministic() {
        let cm = ConfusionMatrix {
            counts: [[3, 0, 0], [0, 4, 0], [0, 0, 5]],
        };
        let truth = [0, 0, 0, 1, 1, 1, 1, 2, 2, 2, 2, 2];
        let scores: Vec<f64> = truth
            .iter()
            .map(|&t| if t == 0 { 0.9 } else { 0.1 })
            .collect();
        let curve = roc_one_vs_rest(&truth, &scores, 0).unwrap();
        let report = classification_metrics(&cm)
            .unwrap()
            .with_auc([Some(auc(&curve)), None, None]);
        let curves = [Some(curve.clone()), None, None];

        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        export_report(&report, &cm, &curves, a.path()).unwrap();
        export_report(&report, &cm, &curves, b.path()).unwrap();
        for f in ["metrics.csv", "confusion.csv", "roc_class0.csv"] {
            let x = std::fs::read(a.path().join(f)).unwrap();
            assert_eq!(x, std::fs::read(b.path().join(f)).unwrap());
        }
        let roc = std::fs::read_to_string(a.path().join("roc_class0.csv")).unwrap();
        assert_eq!(roc.lines().count() - 1, curve.points.len());
        let metrics = std::fs::read_to_string(a.path().join("metrics.csv")).unwrap();
        assert!(metrics
            .lines()
            .nth(1)
            .unwrap()
            .starts_with("class0,1,1,1,1,1"));
        assert!(metrics.contains("\noverall,1,"));
    }
}
