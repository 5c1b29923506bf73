use crate::error::{Result, TensorError};
use crate::ops::reduce::softmax_rows;
use crate::tensor::{BackwardOp, Tensor};

struct CrossEntropy {
    labels: Vec<usize>,
    probs: Vec<f64>,
    k: usize,
}

impl BackwardOp for CrossEntropy {
    fn name(&self) -> &'static str {
        "cross_entropy"
    }

    fn backward(&self, _parents: &[Tensor], _output: &Tensor, grad: &[f64]) -> Vec<Option<Vec<f64>>> {
        let scale = grad[0] / self.labels.len() as f64;
        let mut g: Vec<f64> = self.probs.iter().map(|p| p * scale).collect();
        for (i, &l) in self.labels.iter().enumerate() {
            g[i * self.k + l] -= scale;
        }
        vec![Some(g)]
    }
}

impl Tensor {
    /// Mean negative log-likelihood of `labels` under row-wise softmax of
    /// `[B, K]` logits.
    pub fn cross_entropy(&self, labels: &[usize]) -> Result<Tensor> {
        if self.ndim() != 2 || self.shape()[0] != labels.len() {
            return Err(TensorError::ShapeMismatch {
                op: "cross_entropy",
                lhs: self.shape().to_vec(),
                rhs: vec![labels.len()],
            });
        }
        let k = self.shape()[1];
        if let Some((i, &l)) = labels.iter().enumerate().find(|(_, &l)| l >= k) {
            return Err(TensorError::Data(format!("sample {i} has label {l} outside [0, {k})")));
        }
        let mut loss = 0.0;
        for (row, &l) in self.data().chunks(k).zip(labels) {
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
            loss += lse - row[l];
        }
        loss /= labels.len() as f64;
        let probs = softmax_rows(self.data(), k);
        Tensor::from_op(
            "cross_entropy",
            vec![loss],
            vec![1],
            vec![self.clone()],
            Box::new(CrossEntropy { labels: labels.to_vec(), probs, k }),
        )
    }
}
