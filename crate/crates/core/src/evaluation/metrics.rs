use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Weight of accuracy in the accuracy–parameter trade-off.
pub const APT_ACC_WEIGHT: f64 = 0.9;
/// Weight of the normalized parameter count in the trade-off.
pub const APT_PARAM_WEIGHT: f64 = 0.1;
/// Parameter count (millions) that normalizes the trade-off.
pub const APT_REFERENCE_PARAMS_M: f64 = 7.3;

/// Binary confusion counts; the positive class is opacity.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn record(&mut self, predicted_positive: bool, actual_positive: bool) {
        match (predicted_positive, actual_positive) {
            (true, true) => self.tp += 1,
            (true, false) => self.fp += 1,
            (false, false) => self.tn += 1,
            (false, true) => self.fn_ += 1,
        }
    }
}

/// `None` marks a metric whose denominator is zero.
pub type Metric = Option<f64>;

fn ratio(num: u64, den: u64) -> Metric {
    (den > 0).then(|| num as f64 / den as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub acc: Metric,
    pub sen: Metric,
    pub spe: Metric,
    pub f1: Metric,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub acc: Metric,
    pub sen: Metric,
    pub spe: Metric,
    pub f1: Metric,
    pub apt: Metric,
    pub params_millions: f64,
}

impl MetricsReport {
    pub fn new(cm: &ConfusionMatrix, params_millions: f64) -> Result<Self> {
        let s = metrics(cm);
        let apt = match s.acc {
            Some(acc) => Some(apt(acc, params_millions)?),
            None if params_millions > 0.0 => None,
            None => return Err(Error::NonPositiveParams(params_millions)),
        };
        Ok(Self {
            acc: s.acc,
            sen: s.sen,
            spe: s.spe,
            f1: s.f1,
            apt,
            params_millions,
        })
    }
}

/// Count outcomes with `p >= threshold` classified positive.
pub fn confusion<P: Copy + Into<f64>>(predictions: &[P], labels: &[u8], threshold: f64) -> Result<ConfusionMatrix> {
    if predictions.len() != labels.len() {
        return Err(Error::LengthMismatch {
            expected: predictions.len(),
            found: labels.len(),
        });
    }
    let mut cm = ConfusionMatrix::default();
    for (&p, &t) in predictions.iter().zip(labels) {
        if t > 1 {
            return Err(Error::InvalidLabel(t as f64));
        }
        cm.record(p.into() >= threshold, t == 1);
    }
    Ok(cm)
}

/// Accuracy, sensitivity, specificity and F1 from confusion counts.
pub fn metrics(cm: &ConfusionMatrix) -> Scores {
    Scores {
        acc: ratio(cm.tp + cm.tn, cm.total()),
        sen: ratio(cm.tp, cm.tp + cm.fn_),
        spe: ratio(cm.tn, cm.tn + cm.fp),
        f1: ratio(2 * cm.tp, 2 * cm.tp + cm.fp + cm.fn_),
    }
}

/// Accuracy–parameter trade-off: `0.9·acc − 0.1·params/7.3`, params in millions.
pub fn apt(acc: f64, params_millions: f64) -> Result<f64> {
    if params_millions.is_nan() || params_millions <= 0.0 {
        return Err(Error::NonPositiveParams(params_millions));
    }
    Ok(APT_ACC_WEIGHT * acc - APT_PARAM_WEIGHT * params_millions / APT_REFERENCE_PARAMS_M)
}

pub fn format_metric(m: Metric) -> String {
    match m {
        Some(v) => v.to_string(),
        None => "undefined".to_string(),
    }
}

pub fn parse_metric(s: &str) -> Result<Metric> {
    let s = s.trim();
    if s == "undefined" {
        return Ok(None);
    }
    s.parse::<f64>()
        .map(Some)
        .map_err(|_| Error::MalformedEntry(format!("not a metric value: {s:?}")))
}
