//! Confusion counts, threshold metrics, ROC and AUC.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, shape, Error, Result};

pub const DEFAULT_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.tp + self.tn + self.fp + self.fn_
    }
}

fn check_inputs(scores: &[f64], labels: &[u8]) -> Result<()> {
    if scores.len() != labels.len() {
        return Err(shape(format!("{} scores, {} labels", scores.len(), labels.len())));
    }
    if scores.is_empty() {
        return Err(invalid("no scores"));
    }
    if labels.iter().any(|&l| l > 1) {
        return Err(invalid("labels must be 0 or 1"));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(invalid("NaN score"));
    }
    Ok(())
}

/// A score at or above `threshold` is a positive prediction.
pub fn confusion(scores: &[f64], labels: &[u8], threshold: f64) -> Result<ConfusionMatrix> {
    check_inputs(scores, labels)?;
    let mut cm = ConfusionMatrix::default();
    for (&s, &y) in scores.iter().zip(labels) {
        match (s >= threshold, y == 1) {
            (true, true) => cm.tp += 1,
            (true, false) => cm.fp += 1,
            (false, false) => cm.tn += 1,
            (false, true) => cm.fn_ += 1,
        }
    }
    Ok(cm)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub auc: Option<f64>,
    pub confusion: ConfusionMatrix,
    /// Names of metrics whose denominator was zero and were reported as 0.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub degenerate: Vec<String>,
}

fn ratio(num: u64, den: u64, name: &str, degenerate: &mut Vec<String>) -> f64 {
    if den == 0 {
        degenerate.push(name.to_string());
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn f1_score(precision: f64, recall: f64) -> Option<f64> {
    let s = precision + recall;
    (s > 0.0).then(|| 2.0 * precision * recall / s)
}

pub fn classification_metrics(cm: &ConfusionMatrix) -> Result<MetricsReport> {
    if cm.total() == 0 {
        return Err(invalid("empty confusion matrix"));
    }
    let mut degenerate = Vec::new();
    let accuracy = (cm.tp + cm.tn) as f64 / cm.total() as f64;
    let precision = ratio(cm.tp, cm.tp + cm.fp, "precision", &mut degenerate);
    let recall = ratio(cm.tp, cm.tp + cm.fn_, "recall", &mut degenerate);
    let f1 = f1_score(precision, recall).unwrap_or_else(|| {
        degenerate.push("f1".to_string());
        0.0
    });
    Ok(MetricsReport { accuracy, precision, recall, f1, auc: None, confusion: *cm, degenerate })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub fpr: f64,
    pub tpr: f64,
    /// Samples with score >= threshold are positive; the first point uses +inf.
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
}

impl RocCurve {
    /// CSV `threshold,fpr,tpr`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["threshold", "fpr", "tpr"])?;
        for p in &self.points {
            w.write_record([p.threshold.to_string(), p.fpr.to_string(), p.tpr.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn class_counts(labels: &[u8]) -> Result<(u64, u64)> {
    let pos = labels.iter().filter(|&&l| l == 1).count() as u64;
    let neg = labels.len() as u64 - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::RocUndefined("labels contain a single class"));
    }
    Ok((pos, neg))
}

/// One point per distinct score, swept from the highest down, after the
/// (0,0) point at threshold +inf. Tied scores move both rates in one step,
/// which is what makes the trapezoid area equal the pair-count statistic.
pub fn roc_points(scores: &[f64], labels: &[u8]) -> Result<RocCurve> {
    check_inputs(scores, labels)?;
    let (pos, neg) = class_counts(labels)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut points = vec![RocPoint { fpr: 0.0, tpr: 0.0, threshold: f64::INFINITY }];
    let (mut tp, mut fp) = (0u64, 0u64);
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if labels[order[i]] == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push(RocPoint { fpr: fp as f64 / neg as f64, tpr: tp as f64 / pos as f64, threshold: s });
    }
    Ok(RocCurve { points })
}

pub fn auc_trapezoid(roc: &RocCurve) -> f64 {
    roc.points
        .windows(2)
        .map(|w| (w[1].fpr - w[0].fpr) * (w[1].tpr + w[0].tpr) / 2.0)
        .sum()
}

/// Mann-Whitney statistic: concordant positive/negative pairs plus half the
/// tied pairs, over all pairs. Quadratic; used as an oracle.
pub fn auc_paircount(scores: &[f64], labels: &[u8]) -> Result<f64> {
    check_inputs(scores, labels)?;
    let (pos, neg) = class_counts(labels)?;
    let mut twice = 0u64;
    for (&sp, _) in scores.iter().zip(labels).filter(|(_, &l)| l == 1) {
        for (&sn, _) in scores.iter().zip(labels).filter(|(_, &l)| l == 0) {
            twice += if sp > sn { 2 } else if sp == sn { 1 } else { 0 };
        }
    }
    Ok(twice as f64 / 2.0 / (pos * neg) as f64)
}

/// Threshold metrics plus AUC in one report.
pub fn evaluate(scores: &[f64], labels: &[u8], threshold: f64) -> Result<(MetricsReport, RocCurve)> {
    let cm = confusion(scores, labels, threshold)?;
    let mut report = classification_metrics(&cm)?;
    let roc = roc_points(scores, labels)?;
    report.auc = Some(auc_trapezoid(&roc));
    Ok((report, roc))
}
