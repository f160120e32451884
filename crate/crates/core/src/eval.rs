//! Confusion matrices, one-vs-rest metrics and report tables.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{CLASSES, NUM_CLASSES};

/// Rows are true classes, columns predicted classes, in [`CLASSES`] order.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: [[u64; NUM_CLASSES]; NUM_CLASSES],
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..NUM_CLASSES).map(|i| self.counts[i][i]).sum()
    }

    pub fn true_positives(&self, c: usize) -> u64 {
        self.counts[c][c]
    }

    pub fn false_positives(&self, c: usize) -> u64 {
        (0..NUM_CLASSES)
            .filter(|&t| t != c)
            .map(|t| self.counts[t][c])
            .sum()
    }

    pub fn false_negatives(&self, c: usize) -> u64 {
        (0..NUM_CLASSES)
            .filter(|&p| p != c)
            .map(|p| self.counts[c][p])
            .sum()
    }
}

pub fn confusion(truth: &[usize], pred: &[usize]) -> Result<ConfusionMatrix> {
    if truth.len() != pred.len() {
        return Err(Error::Dimension {
            expected: truth.len(),
            actual: pred.len(),
        });
    }
    let mut m = ConfusionMatrix::default();
    for (&t, &p) in truth.iter().zip(pred) {
        if t >= NUM_CLASSES || p >= NUM_CLASSES {
            return Err(Error::Target(format!("class index out of range: {t}/{p}")));
        }
        m.counts[t][p] += 1;
    }
    Ok(m)
}

/// Precision, recall and F-measure; `None` where a denominator is zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f_measure: Option<f64>,
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

pub fn class_metrics(m: &ConfusionMatrix, c: usize) -> ClassMetrics {
    let tp = m.true_positives(c);
    let precision = ratio(tp, tp + m.false_positives(c));
    let recall = ratio(tp, tp + m.false_negatives(c));
    let f_measure = match (precision, recall) {
        (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
        _ => None,
    };
    ClassMetrics {
        precision,
        recall,
        f_measure,
    }
}

pub fn accuracy(m: &ConfusionMatrix) -> Result<f64> {
    let total = m.total();
    if total == 0 {
        return Err(Error::data("accuracy of an empty confusion matrix"));
    }
    Ok(m.trace() as f64 / total as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassReport {
    pub class: String,
    pub support: u64,
    #[serde(flatten)]
    pub metrics: ClassMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// e.g. "AE[50]" or "MLP[50]"
    pub model: String,
    pub config_hash: String,
    pub per_class: Vec<ClassReport>,
    pub accuracy: f64,
    pub confusion: ConfusionMatrix,
}

impl EvalReport {
    pub fn new(
        model: impl Into<String>,
        config_hash: impl Into<String>,
        m: ConfusionMatrix,
    ) -> Result<Self> {
        let per_class = CLASSES
            .iter()
            .enumerate()
            .map(|(c, cat)| ClassReport {
                class: cat.name().to_string(),
                support: m.counts[c].iter().sum(),
                metrics: class_metrics(&m, c),
            })
            .collect();
        Ok(EvalReport {
            model: model.into(),
            config_hash: config_hash.into(),
            per_class,
            accuracy: accuracy(&m)?,
            confusion: m,
        })
    }

    pub fn class(&self, name: &str) -> Option<&ClassMetrics> {
        self.per_class
            .iter()
            .find(|c| c.class.eq_ignore_ascii_case(name))
            .map(|c| &c.metrics)
    }
}

/// Published multiclass accuracies on the same benchmark, shown for comparison.
pub const LITERATURE_ACCURACY: [(&str, f64); 4] = [
    ("Huang et al. (sequential learning)", 76.04),
    ("Javaid et al. (sparse AE, self-taught)", 79.10),
    ("Yin et al. (RNN)", 81.29),
    ("Shone et al. (stacked NDAE)", 85.42),
];

fn pct(v: Option<f64>) -> String {
    match v {
        Some(v) => format!("{:.2}", 100.0 * v),
        None => "n/a".to_string(),
    }
}

/// Per-class metric table followed by the accuracy comparison table.
pub fn render_report(reports: &[EvalReport]) -> Result<String> {
    if reports.is_empty() {
        return Err(Error::data("no reports to render"));
    }
    let mut out = String::new();
    let col = reports
        .iter()
        .map(|r| r.model.len())
        .max()
        .unwrap_or(0)
        .max(9);

    let _ = writeln!(out, "Per-class performance (%)");
    let mut header = format!("{:<8}", "Class");
    let mut sub = format!("{:<8}", "");
    for metric in ["Precision", "Recall", "F_measure"] {
        let width = reports.len() * (col + 1) - 1;
        let _ = write!(header, " | {metric:^width$}");
        sub.push_str(" |");
        for r in reports {
            let _ = write!(sub, " {:>col$}", r.model);
        }
    }
    let _ = writeln!(out, "{header}");
    let _ = writeln!(out, "{sub}");
    let _ = writeln!(out, "{}", "-".repeat(sub.len()));
    for (c, cat) in CLASSES.iter().enumerate() {
        let mut row = format!("{:<8}", cat.name());
        let metrics: Vec<&ClassMetrics> = reports.iter().map(|r| &r.per_class[c].metrics).collect();
        for pick in [
            (|m: &ClassMetrics| m.precision) as fn(&ClassMetrics) -> Option<f64>,
            |m| m.recall,
            |m| m.f_measure,
        ] {
            row.push_str(" |");
            for m in &metrics {
                let _ = write!(row, " {:>col$}", pct(pick(m)));
            }
        }
        let _ = writeln!(out, "{row}");
    }

    let _ = writeln!(out);
    let _ = writeln!(out, "Accuracy comparison");
    let name_width = LITERATURE_ACCURACY
        .iter()
        .map(|(n, _)| n.len())
        .chain(reports.iter().map(|r| r.model.len() + 11))
        .max()
        .unwrap_or(0);
    let _ = writeln!(out, "{:<name_width$} | Accuracy (%)", "Model");
    let _ = writeln!(out, "{}", "-".repeat(name_width + 15));
    for r in reports {
        let _ = writeln!(
            out,
            "{:<name_width$} | {:.2}",
            format!("{} (measured)", r.model),
            100.0 * r.accuracy
        );
    }
    for (name, acc) in LITERATURE_ACCURACY {
        let _ = writeln!(out, "{name:<name_width$} | {acc:.2}");
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn diagonal() -> ConfusionMatrix {
        let mut m = ConfusionMatrix::default();
        for i in 0..NUM_CLASSES {
            m.counts[i][i] = 5 + i as u64;
        }
        m
    }

    #[test]
    fn confusion_counts() {
        let m = confusion(&[0, 0, 1], &[0, 1, 1]).unwrap();
        assert_eq!(m.counts[0][0], 1);
        assert_eq!(m.counts[0][1], 1);
        assert_eq!(m.counts[1][1], 1);
        assert_eq!(m.total(), 3);
        assert_eq!(confusion(&[], &[]).unwrap(), ConfusionMatrix::default());
        assert!(confusion(&[0], &[]).is_err());
        assert!(confusion(&[4], &[0]).is_err());
    }

    #[test]
    fn diagonal_metrics() {
        let m = diagonal();
        for c in 0..NUM_CLASSES {
            let cm = class_metrics(&m, c);
            assert_eq!(cm.precision, Some(1.0));
            assert_eq!(cm.recall, Some(1.0));
            assert_eq!(cm.f_measure, Some(1.0));
        }
        assert_eq!(accuracy(&m).unwrap(), 1.0);
    }

    #[test]
    fn undefined_metrics() {
        let mut m = ConfusionMatrix::default();
        m.counts[0][0] = 4;
        let cm = class_metrics(&m, 2);
        assert_eq!(cm.precision, None);
        assert_eq!(cm.recall, None);
        assert_eq!(cm.f_measure, None);

        // True but never predicted: recall 0, precision undefined.
        m.counts[1][0] = 2;
        let cm = class_metrics(&m, 1);
        assert_eq!(cm.precision, None);
        assert_eq!(cm.recall, Some(0.0));
        assert_eq!(cm.f_measure, None);
        assert!(accuracy(&ConfusionMatrix::default()).is_err());
    }

    #[test]
    fn hand_computed_metrics() {
        // TP=3, FP=1, FN=1 for class 0.
        let mut m = ConfusionMatrix::default();
        m.counts[0][0] = 3;
        m.counts[1][0] = 1;
        m.counts[0][2] = 1;
        let cm = class_metrics(&m, 0);
        assert_eq!(cm.precision, Some(0.75));
        assert_eq!(cm.recall, Some(0.75));
        assert!((cm.f_measure.unwrap() - 0.75).abs() < 1e-15);

        let mut m = ConfusionMatrix::default();
        m.counts[0][0] = 50;
        m.counts[1][1] = 40;
        m.counts[2][3] = 10;
        assert_eq!(accuracy(&m).unwrap(), 0.9);

        let mut off = ConfusionMatrix::default();
        off.counts[0][1] = 3;
        off.counts[2][0] = 1;
        assert_eq!(accuracy(&off).unwrap(), 0.0);
    }

    #[test]
    fn render_layout() {
        assert!(render_report(&[]).is_err());
        let mut m = diagonal();
        m.counts[3][0] = 2;
        let ae = EvalReport::new("AE[50]", "abc", m).unwrap();
        let mut empty_r2l = ConfusionMatrix::default();
        empty_r2l.counts[0][0] = 1;
        let mlp = EvalReport::new("MLP[50]", "abc", empty_r2l).unwrap();
        let text = render_report(&[mlp, ae]).unwrap();
        assert!(text.contains("Normal"));
        assert!(text.contains("R2L"));
        assert!(text.contains("n/a"));
        assert!(text.contains("AE[50] (measured)"));
        assert!(text.contains("85.42"));
        assert!(text.contains("100.00"));
    }
}
