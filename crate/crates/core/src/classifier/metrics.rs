use serde::{Deserialize, Serialize};

use super::ClassifierModel;
use crate::dataset::{Dataset, Label, Split};
use crate::error::{Error, Result};

/// Accuracy and F-scores with OPACITY as the positive class.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassifierMetrics {
    pub accuracy: f64,
    pub f1: f64,
    pub f2: f64,
    pub true_positive: usize,
    pub false_positive: usize,
    pub false_negative: usize,
    pub true_negative: usize,
    pub per_class: [usize; 2],
}

fn f_beta(beta: f64, precision: f64, recall: f64) -> f64 {
    let b2 = beta * beta;
    let denom = b2 * precision + recall;
    if denom == 0.0 {
        0.0
    } else {
        (1.0 + b2) * precision * recall / denom
    }
}

/// Metrics from (truth, prediction) pairs.
pub fn metrics_from_predictions(pairs: &[(Label, Label)]) -> Result<ClassifierMetrics> {
    if pairs.is_empty() {
        return Err(Error::invalid("cannot compute metrics on an empty split"));
    }
    let (mut tp, mut fp, mut fn_, mut tn) = (0, 0, 0, 0);
    let mut per_class = [0; 2];
    for &(truth, pred) in pairs {
        per_class[truth.index()] += 1;
        match (truth, pred) {
            (Label::Opacity, Label::Opacity) => tp += 1,
            (Label::Normal, Label::Opacity) => fp += 1,
            (Label::Opacity, Label::Normal) => fn_ += 1,
            (Label::Normal, Label::Normal) => tn += 1,
        }
    }
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    Ok(ClassifierMetrics {
        accuracy: ratio(tp + tn, pairs.len()),
        f1: f_beta(1.0, precision, recall),
        f2: f_beta(2.0, precision, recall),
        true_positive: tp,
        false_positive: fp,
        false_negative: fn_,
        true_negative: tn,
        per_class,
    })
}

pub fn evaluate_classifier(model: &ClassifierModel, data: &Dataset, split: Split) -> Result<ClassifierMetrics> {
    let samples = data.split(split);
    if samples.is_empty() {
        return Err(Error::invalid(format!("{} split is empty", split.as_str())));
    }
    let images: Vec<_> = samples.iter().map(|s| &s.image).collect();
    let probs = model.predict_batch(&images)?;
    let pairs: Vec<(Label, Label)> = samples.iter().zip(&probs).map(|(s, p)| (s.label, p.decision())).collect();
    metrics_from_predictions(&pairs)
}
