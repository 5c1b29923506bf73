use crate::error::{Result, TensorError};
use crate::ops::elementwise::broadcast_index;
use crate::tensor::{numel, BackwardOp, Tensor};

struct SumAxes {
    /// Flat input index -> flat output index.
    map: Option<Vec<usize>>,
    scale: f64,
}

impl BackwardOp for SumAxes {
    fn name(&self) -> &'static str {
        "sum_axes"
    }

    fn backward(&self, _parents: &[Tensor], _output: &Tensor, grad: &[f64]) -> Vec<Option<Vec<f64>>> {
        let g = match &self.map {
            None => grad.iter().map(|g| g * self.scale).collect(),
            Some(map) => map.iter().map(|&j| grad[j] * self.scale).collect(),
        };
        vec![Some(g)]
    }
}

fn reduce_axes(x: &Tensor, axes: &[usize], keepdim: bool, mean: bool) -> Result<Tensor> {
    let nd = x.ndim();
    if let Some(&bad) = axes.iter().find(|&&a| a >= nd) {
        return Err(TensorError::Dimension {
            op: "sum_axes",
            msg: format!("axis {bad} out of range for shape {:?}", x.shape()),
        });
    }
    let mut axes = axes.to_vec();
    axes.sort_unstable();
    axes.dedup();
    let mut kept: Vec<usize> = x.shape().to_vec();
    let mut count = 1usize;
    for &a in &axes {
        count *= x.shape()[a];
        kept[a] = 1;
    }
    let map = broadcast_index(&kept, x.shape());
    let mut out = vec![0.0; numel(&kept)];
    match &map {
        None => out.copy_from_slice(x.data()),
        Some(map) => {
            for (v, &j) in x.data().iter().zip(map) {
                out[j] += v;
            }
        }
    }
    let scale = if mean { 1.0 / count as f64 } else { 1.0 };
    if mean {
        out.iter_mut().for_each(|v| *v *= scale);
    }
    let shape = if keepdim {
        kept
    } else {
        let s: Vec<usize> =
            x.shape().iter().enumerate().filter(|(i, _)| !axes.contains(i)).map(|(_, &d)| d).collect();
        if s.is_empty() {
            vec![1]
        } else {
            s
        }
    };
    Tensor::from_op(
        if mean { "mean_axes" } else { "sum_axes" },
        out,
        shape,
        vec![x.clone()],
        Box::new(SumAxes { map, scale }),
    )
}

struct Softmax;

impl BackwardOp for Softmax {
    fn name(&self) -> &'static str {
        "softmax"
    }

    fn backward(&self, _parents: &[Tensor], output: &Tensor, grad: &[f64]) -> Vec<Option<Vec<f64>>> {
        let k = *output.shape().last().unwrap();
        let y = output.data();
        let mut gx = vec![0.0; y.len()];
        for ((ys, gs), out) in y.chunks(k).zip(grad.chunks(k)).zip(gx.chunks_mut(k)) {
            let dot: f64 = ys.iter().zip(gs).map(|(a, b)| a * b).sum();
            for ((o, &yv), &gv) in out.iter_mut().zip(ys).zip(gs) {
                *o = yv * (gv - dot);
            }
        }
        vec![Some(gx)]
    }
}

/// Row-wise max-subtracted softmax over the last axis.
pub(crate) fn softmax_rows(data: &[f64], k: usize) -> Vec<f64> {
    let mut out = vec![0.0; data.len()];
    for (row, o) in data.chunks(k).zip(out.chunks_mut(k)) {
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut z = 0.0;
        for (ov, &v) in o.iter_mut().zip(row) {
            *ov = (v - m).exp();
            z += *ov;
        }
        o.iter_mut().for_each(|v| *v /= z);
    }
    out
}

impl Tensor {
    pub fn sum(&self) -> Result<Tensor> {
        let axes: Vec<usize> = (0..self.ndim()).collect();
        reduce_axes(self, &axes, false, false)
    }

    pub fn mean(&self) -> Result<Tensor> {
        let axes: Vec<usize> = (0..self.ndim()).collect();
        reduce_axes(self, &axes, false, true)
    }

    pub fn sum_axes(&self, axes: &[usize], keepdim: bool) -> Result<Tensor> {
        reduce_axes(self, axes, keepdim, false)
    }

    pub fn mean_axes(&self, axes: &[usize], keepdim: bool) -> Result<Tensor> {
        reduce_axes(self, axes, keepdim, true)
    }

    /// Population standard deviation over `axes`, computed as
    /// `sqrt(var + eps^2)` so it stays differentiable at zero variance.
    pub fn std_axes(&self, axes: &[usize], keepdim: bool, eps: f64) -> Result<Tensor> {
        let mu = self.mean_axes(axes, true)?;
        let var = self.sub(&mu)?.square()?.mean_axes(axes, keepdim)?;
        var.add_scalar(eps * eps)?.sqrt()
    }

    pub fn softmax(&self) -> Result<Tensor> {
        let k = *self.shape().last().unwrap();
        let data = softmax_rows(self.data(), k);
        Tensor::from_op("softmax", data, self.shape().to_vec(), vec![self.clone()], Box::new(Softmax))
    }

    /// Mean over the time and joint axes of a `[.., T, V, C]` tensor.
    pub fn global_mean_pool(&self) -> Result<Tensor> {
        let nd = self.ndim();
        if nd < 3 {
            return Err(TensorError::Dimension {
                op: "global_mean_pool",
                msg: format!("needs [.., T, V, C], got {:?}", self.shape()),
            });
        }
        self.mean_axes(&[nd - 3, nd - 2], false)
    }
}
