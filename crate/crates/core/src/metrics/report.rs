use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{confusion_matrix, f1_mean, f1_scores, topk_accuracy, accuracy, Granularity, PredictionSet};

pub const F1_CONVENTION: &str = "per-class F1 is 0 when a class has no true positives; macro F1 averages over classes present in labels or predictions; body predictions come from the action argmax";

/// All rates are fractions in `[0, 1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub num_samples: usize,
    pub top1_action: f64,
    pub top5_action: f64,
    pub top1_body: f64,
    pub f1_macro_body: f64,
    pub f1_micro_body: f64,
    pub f1_macro_action: f64,
    pub f1_micro_action: f64,
    pub f1_mean: f64,
    pub per_class_f1: Vec<f64>,
    /// `[true][predicted]` counts over action classes.
    pub confusion: Vec<Vec<usize>>,
}

fn pct(x: f64) -> f64 {
    (x * 10000.0).round() / 100.0
}

impl MetricsReport {
    pub fn compute(preds: &PredictionSet) -> Self {
        let action = f1_scores(preds, Granularity::Action);
        let body = f1_scores(preds, Granularity::Body);
        let k = preds.num_classes();
        let pred = preds.predicted();
        Self {
            num_samples: preds.len(),
            top1_action: topk_accuracy(preds, 1),
            top5_action: topk_accuracy(preds, 5.min(k)),
            top1_body: accuracy(&preds.body_predicted(), &preds.body_labels()),
            f1_macro_body: body.macro_f1,
            f1_micro_body: body.micro_f1,
            f1_macro_action: action.macro_f1,
            f1_micro_action: action.micro_f1,
            f1_mean: f1_mean([body.macro_f1, body.micro_f1, action.macro_f1, action.micro_f1]),
            per_class_f1: action.per_class,
            confusion: confusion_matrix(&pred, &preds.labels, k),
        }
    }

    /// Display values (percent, two decimals) with the full-precision
    /// report under `"raw"`.
    pub fn to_json(&self) -> serde_json::Value {
        json!({
            "num_samples": self.num_samples,
            "top1_action": pct(self.top1_action),
            "top5_action": pct(self.top5_action),
            "top1_body": pct(self.top1_body),
            "f1_macro_body": pct(self.f1_macro_body),
            "f1_micro_body": pct(self.f1_micro_body),
            "f1_macro_action": pct(self.f1_macro_action),
            "f1_micro_action": pct(self.f1_micro_action),
            "f1_mean": pct(self.f1_mean),
            "per_class_f1": self.per_class_f1.iter().map(|&v| pct(v)).collect::<Vec<_>>(),
            "f1_convention": F1_CONVENTION,
            "raw": self,
        })
    }

    /// Confusion matrix as CSV with class names heading rows and columns.
    pub fn confusion_csv(&self, class_names: &[String]) -> String {
        let quote = |s: &str| if s.contains([',', '"', '\n']) { format!("\"{}\"", s.replace('"', "\"\"")) } else { s.to_string() };
        let mut out = String::from("true\\pred");
        for n in class_names {
            let _ = write!(out, ",{}", quote(n));
        }
        out.push('\n');
        for (name, row) in class_names.iter().zip(&self.confusion) {
            out.push_str(&quote(name));
            for c in row {
                let _ = write!(out, ",{c}");
            }
            out.push('\n');
        }
        out
    }
}
