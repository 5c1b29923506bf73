//! Evaluation: Top-k accuracy, F1 at action and body granularity,
//! confusion matrices, score ensembling and the bone transform.

mod io;
mod report;

pub use io::{read_predictions, write_predictions, ScoreRecord};
pub use report::{MetricsReport, F1_CONVENTION};

use crate::data::{Frames, LabelTaxonomy};
use crate::error::{MmnError, Result};

/// Scores for `N` samples over `K` action classes plus their true labels.
#[derive(Clone, Debug, PartialEq)]
pub struct PredictionSet {
    pub ids: Vec<String>,
    /// Row-major `[N, K]`.
    pub scores: Vec<f64>,
    pub labels: Vec<usize>,
    pub taxonomy: LabelTaxonomy,
}

impl PredictionSet {
    pub fn new(ids: Vec<String>, scores: Vec<f64>, labels: Vec<usize>, taxonomy: LabelTaxonomy) -> Result<Self> {
        let k = taxonomy.num_actions();
        if ids.len() != labels.len() || scores.len() != labels.len() * k {
            return Err(MmnError::Data(format!(
                "{} ids, {} labels and {} scores do not describe N x {k}",
                ids.len(),
                labels.len(),
                scores.len()
            )));
        }
        if let Some((i, &y)) = labels.iter().enumerate().find(|(_, &y)| y >= k) {
            return Err(MmnError::Data(format!("sample {}: label {y} outside {k} classes", ids[i])));
        }
        if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
            return Err(MmnError::Data(format!("sample {}: non-finite score", ids[i / k])));
        }
        Ok(Self { ids, scores, labels, taxonomy })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.taxonomy.num_actions()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let k = self.num_classes();
        &self.scores[i * k..(i + 1) * k]
    }

    /// Predicted actions, ties going to the lowest index.
    pub fn predicted(&self) -> Vec<usize> {
        (0..self.len()).map(|i| argmax(self.row(i))).collect()
    }

    pub fn body_predicted(&self) -> Vec<usize> {
        self.predicted().into_iter().map(|a| self.taxonomy.body_of(a)).collect()
    }

    pub fn body_labels(&self) -> Vec<usize> {
        self.labels.iter().map(|&a| self.taxonomy.body_of(a)).collect()
    }
}

/// Index of the largest score; the lowest index wins ties.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (j, &s) in row.iter().enumerate() {
        if s > row[best] {
            best = j;
        }
    }
    best
}

/// Zero-based position of class `y` when classes are ordered by
/// descending score with ties broken toward the lower index.
pub fn rank_of(row: &[f64], y: usize) -> usize {
    let s = row[y];
    row.iter().enumerate().filter(|&(j, &v)| v > s || (v == s && j < y)).count()
}

/// Fraction of samples whose true label is among the `k` best scores.
pub fn topk_accuracy(preds: &PredictionSet, k: usize) -> f64 {
    if preds.is_empty() {
        return 0.0;
    }
    let hits = (0..preds.len()).filter(|&i| rank_of(preds.row(i), preds.labels[i]) < k).count();
    hits as f64 / preds.len() as f64
}

/// Fraction of positions where `pred == label`.
pub fn accuracy(pred: &[usize], labels: &[usize]) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    pred.iter().zip(labels).filter(|(p, l)| p == l).count() as f64 / labels.len() as f64
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Granularity {
    Action,
    Body,
}

#[derive(Clone, Debug, PartialEq)]
pub struct F1Scores {
    pub macro_f1: f64,
    pub micro_f1: f64,
    /// F1 of every class `0..num_classes`, 0 where undefined.
    pub per_class: Vec<f64>,
}

/// F1 from hard predictions. Macro averages over classes that occur in
/// `labels` or `pred`; micro is the global rate, equal to accuracy.
pub fn f1_from_labels(pred: &[usize], labels: &[usize], num_classes: usize) -> F1Scores {
    let mut tp = vec![0usize; num_classes];
    let mut n_pred = vec![0usize; num_classes];
    let mut n_true = vec![0usize; num_classes];
    for (&p, &y) in pred.iter().zip(labels) {
        n_pred[p] += 1;
        n_true[y] += 1;
        if p == y {
            tp[p] += 1;
        }
    }
    let per_class: Vec<f64> = (0..num_classes)
        .map(|c| {
            // 2PR/(P+R) reduces to 2TP/(pred + true); 0 when TP is 0
            let denom = n_pred[c] + n_true[c];
            if tp[c] == 0 { 0.0 } else { 2.0 * tp[c] as f64 / denom as f64 }
        })
        .collect();
    let present: Vec<usize> = (0..num_classes).filter(|&c| n_pred[c] + n_true[c] > 0).collect();
    let macro_f1 =
        if present.is_empty() { 0.0 } else { present.iter().map(|&c| per_class[c]).sum::<f64>() / present.len() as f64 };
    F1Scores { macro_f1, micro_f1: accuracy(pred, labels), per_class }
}

pub fn f1_scores(preds: &PredictionSet, granularity: Granularity) -> F1Scores {
    match granularity {
        Granularity::Action => f1_from_labels(&preds.predicted(), &preds.labels, preds.num_classes()),
        Granularity::Body => f1_from_labels(&preds.body_predicted(), &preds.body_labels(), preds.taxonomy.num_bodies()),
    }
}

/// Mean of body macro, body micro, action macro and action micro F1.
pub fn f1_mean(components: [f64; 4]) -> f64 {
    components.iter().sum::<f64>() / 4.0
}

/// `m[i][j]` counts samples of true class `i` predicted as `j`.
pub fn confusion_matrix(pred: &[usize], labels: &[usize], num_classes: usize) -> Vec<Vec<usize>> {
    let mut m = vec![vec![0; num_classes]; num_classes];
    for (&p, &y) in pred.iter().zip(labels) {
        m[y][p] += 1;
    }
    m
}

pub fn softmax(row: &[f64]) -> Vec<f64> {
    let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = row.iter().map(|v| (v - m).exp()).collect();
    let z: f64 = e.iter().sum();
    e.into_iter().map(|v| v / z).collect()
}

/// Per-sample `w * softmax(a) + (1 - w) * softmax(b)`; samples must appear
/// in the same order with the same ids.
pub fn ensemble_scores(a: &PredictionSet, b: &PredictionSet, w: f64) -> Result<PredictionSet> {
    if !(0.0..=1.0).contains(&w) {
        return Err(MmnError::Config(format!("ensemble weight must lie in [0, 1], got {w}")));
    }
    if a.num_classes() != b.num_classes() || a.len() != b.len() {
        return Err(MmnError::Data(format!(
            "cannot ensemble {}x{} with {}x{} scores",
            a.len(),
            a.num_classes(),
            b.len(),
            b.num_classes()
        )));
    }
    if let Some(i) = (0..a.len()).find(|&i| a.ids[i] != b.ids[i]) {
        return Err(MmnError::Data(format!("sample order differs at row {i}: {} vs {}", a.ids[i], b.ids[i])));
    }
    if a.labels != b.labels {
        return Err(MmnError::Data("the two prediction sets disagree on labels".into()));
    }
    let mut scores = Vec::with_capacity(a.scores.len());
    for i in 0..a.len() {
        let (pa, pb) = (softmax(a.row(i)), softmax(b.row(i)));
        scores.extend(pa.iter().zip(&pb).map(|(x, y)| w * x + (1.0 - w) * y));
    }
    PredictionSet::new(a.ids.clone(), scores, a.labels.clone(), a.taxonomy.clone())
}

/// Bone vectors `joint[v] - joint[parent[v]]`; roots (their own parent)
/// get zero bones.
pub fn to_bone(frames: &Frames, parent: &[usize]) -> Result<Frames> {
    let v = frames.joints;
    if parent.len() != v {
        return Err(MmnError::Config(format!("parent map has {} entries for {v} joints", parent.len())));
    }
    if let Some(j) = parent.iter().position(|&p| p >= v) {
        return Err(MmnError::Config(format!("joint {j} has parent {} outside {v} joints", parent[j])));
    }
    for start in 0..v {
        // every walk must reach a root within v steps
        let mut j = start;
        for _ in 0..=v {
            if parent[j] == j {
                break;
            }
            j = parent[j];
        }
        if parent[j] != j {
            return Err(MmnError::Config(format!("parent map is cyclic through joint {start}")));
        }
    }
    let c = frames.channels;
    let mut data = frames.data.clone();
    for t in 0..frames.len {
        let f = frames.frame(t);
        for j in 0..v {
            for ch in 0..c {
                data[(t * v + j) * c + ch] = f[j * c + ch] - f[parent[j] * c + ch];
            }
        }
    }
    Frames::new(frames.len, v, c, data)
}
