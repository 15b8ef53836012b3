//! Binary classification metrics with class 1 as the positive class.
//!
//! Zero denominators evaluate to 0: precision with no predicted positives,
//! recall with no actual positives, and F1 when precision and recall are
//! both 0. ROC thresholds sweep the distinct scores from high to low, so a
//! run of tied scores becomes one diagonal segment.

use std::ops::{Add, AddAssign};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl Confusion {
    pub fn total(&self) -> u64 {
        self.tp + self.tn + self.fp + self.fn_
    }

    pub fn accuracy(&self) -> f64 {
        ratio(self.tp + self.tn, self.total())
    }

    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    pub fn f1(&self) -> f64 {
        let (p, r) = (self.precision(), self.recall());
        if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        }
    }

    /// False-positive rate, `fp / (fp + tn)`.
    pub fn fpr(&self) -> f64 {
        ratio(self.fp, self.fp + self.tn)
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl Add for Confusion {
    type Output = Confusion;

    fn add(self, o: Confusion) -> Confusion {
        Confusion {
            tp: self.tp + o.tp,
            tn: self.tn + o.tn,
            fp: self.fp + o.fp,
            fn_: self.fn_ + o.fn_,
        }
    }
}

impl AddAssign for Confusion {
    fn add_assign(&mut self, o: Confusion) {
        *self = *self + o;
    }
}

pub fn confusion(y_true: &[usize], y_pred: &[usize]) -> Result<Confusion> {
    if y_true.len() != y_pred.len() {
        return Err(Error::DimensionMismatch {
            expected: y_true.len(),
            found: y_pred.len(),
        });
    }
    let mut c = Confusion::default();
    for (&t, &p) in y_true.iter().zip(y_pred) {
        match (t, p) {
            (1, 1) => c.tp += 1,
            (0, 0) => c.tn += 1,
            (0, 1) => c.fp += 1,
            (1, 0) => c.fn_ += 1,
            _ => return Err(Error::NonBinaryLabels),
        }
    }
    Ok(c)
}

/// ROC points from `(0, 0)` to `(1, 1)` and the trapezoidal area under them.
pub fn roc_auc(scores: &[f64], y_true: &[usize]) -> Result<(Vec<(f64, f64)>, f64)> {
    if scores.len() != y_true.len() {
        return Err(Error::DimensionMismatch {
            expected: y_true.len(),
            found: scores.len(),
        });
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::NonFinite);
    }
    if y_true.iter().any(|&t| t > 1) {
        return Err(Error::NonBinaryLabels);
    }
    let pos = y_true.iter().filter(|&&t| t == 1).count() as f64;
    let neg = y_true.len() as f64 - pos;
    if pos == 0.0 || neg == 0.0 {
        return Err(Error::SingleClass("AUC"));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0.0, 0.0);
    let mut auc = 0.0;
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if y_true[order[i]] == 1 {
                tp += 1.0;
            } else {
                fp += 1.0;
            }
            i += 1;
        }
        let (x0, y0) = *points.last().expect("non-empty");
        let (x1, y1) = (fp / neg, tp / pos);
        auc += (x1 - x0) * (y0 + y1) / 2.0;
        points.push((x1, y1));
    }
    Ok((points, auc))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub confusion: Confusion,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub roc_points: Vec<(f64, f64)>,
    /// `None` when the labels contain a single class.
    pub auc: Option<f64>,
    /// Seconds.
    pub wall_time: f64,
}

pub const CSV_HEADER: &str = "Classifier,Avg. time,Ac,Fm,Pr,Re";

impl EvalReport {
    pub fn from_confusion(confusion: Confusion) -> Self {
        EvalReport {
            confusion,
            accuracy: confusion.accuracy(),
            precision: confusion.precision(),
            recall: confusion.recall(),
            f1: confusion.f1(),
            roc_points: Vec::new(),
            auc: None,
            wall_time: 0.0,
        }
    }

    /// Builds a report from predictions and, optionally, ranking scores.
    pub fn evaluate(y_true: &[usize], y_pred: &[usize], scores: Option<&[f64]>, wall_time: f64) -> Result<Self> {
        let mut r = EvalReport::from_confusion(confusion(y_true, y_pred)?);
        r.wall_time = wall_time;
        if let Some(s) = scores {
            match roc_auc(s, y_true) {
                Ok((points, auc)) => {
                    r.roc_points = points;
                    r.auc = Some(auc);
                }
                Err(Error::SingleClass(_)) => {}
                Err(e) => return Err(e),
            }
        }
        Ok(r)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialises")
    }

    pub fn csv_row(&self, classifier: &str) -> String {
        format!(
            "{},{:.4},{:.5},{:.5},{:.5},{:.5}",
            csv_field(classifier),
            self.wall_time,
            self.accuracy,
            self.f1,
            self.precision,
            self.recall
        )
    }
}

pub(crate) fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}
