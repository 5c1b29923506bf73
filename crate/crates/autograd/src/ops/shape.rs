//! Layout ops: reshape, channel concat/slice, and time-axis ops.
//!
//! Time-axis ops treat a tensor of shape `[.., T, V, C]` as
//! `[outer, T, V*C]`; the time axis is always third from last.

use crate::error::{Result, TensorError};
use crate::tensor::{numel, BackwardOp, Tensor};

struct Reshape;

impl BackwardOp for Reshape {
    fn name(&self) -> &'static str {
        "reshape"
    }

    fn backward(&self, _parents: &[Tensor], _output: &Tensor, grad: &[f64]) -> Vec<Option<Vec<f64>>> {
        vec![Some(grad.to_vec())]
    }
}

struct ConcatLast {
    widths: Vec<usize>,
}

impl BackwardOp for ConcatLast {
    fn name(&self) -> &'static str {
        "concat"
    }

    fn backward(&self, parents: &[Tensor], _output: &Tensor, grad: &[f64]) -> Vec<Option<Vec<f64>>> {
        let total: usize = self.widths.iter().sum();
        let rows = grad.len() / total;
        let mut offset = 0;
        parents
            .iter()
            .zip(&self.widths)
            .map(|(p, &w)| {
                let start = offset;
                offset += w;
                p.requires_grad().then(|| {
                    let mut g = Vec::with_capacity(rows * w);
                    for r in 0..rows {
                        g.extend_from_slice(&grad[r * total + start..r * total + start + w]);
                    }
                    g
                })
            })
            .collect()
    }
}

struct SliceLast {
    start: usize,
    width: usize,
    total: usize,
}

impl BackwardOp for SliceLast {
    fn name(&self) -> &'static str {
        "slice"
    }

    fn backward(&self, parents: &[Tensor], _output: &Tensor, grad: &[f64]) -> Vec<Option<Vec<f64>>> {
        let mut g = vec![0.0; parents[0].numel()];
        for (r, chunk) in grad.chunks(self.width).enumerate() {
            let base = r * self.total + self.start;
            g[base..base + self.width].copy_from_slice(chunk);
        }
        vec![Some(g)]
    }
}

fn time_layout(op: &'static str, shape: &[usize]) -> Result<(usize, usize, usize)> {
    let nd = shape.len();
    if nd < 3 {
        return Err(TensorError::Dimension { op, msg: format!("needs [.., T, V, C], got {shape:?}") });
    }
    let outer = numel(&shape[..nd - 3]);
    Ok((outer, shape[nd - 3], shape[nd - 2] * shape[nd - 1]))
}

struct TemporalDiff;

impl BackwardOp for TemporalDiff {
    fn name(&self) -> &'static str {
        "temporal_diff"
    }

    fn backward(&self, parents: &[Tensor], _output: &Tensor, grad: &[f64]) -> Vec<Option<Vec<f64>>> {
        let (outer, t, inner) = time_layout("temporal_diff", parents[0].shape()).unwrap();
        let mut g = vec![0.0; parents[0].numel()];
        for o in 0..outer {
            for s in 0..t - 1 {
                let src = (o * (t - 1) + s) * inner;
                let hi = (o * t + s + 1) * inner;
                let lo = (o * t + s) * inner;
                for i in 0..inner {
                    g[hi + i] += grad[src + i];
                    g[lo + i] -= grad[src + i];
                }
            }
        }
        vec![Some(g)]
    }
}

struct PadTimeFront {
    frames: usize,
}

impl BackwardOp for PadTimeFront {
    fn name(&self) -> &'static str {
        "pad_time_front"
    }

    fn backward(&self, parents: &[Tensor], _output: &Tensor, grad: &[f64]) -> Vec<Option<Vec<f64>>> {
        let (outer, t, inner) = time_layout("pad_time_front", parents[0].shape()).unwrap();
        let padded = t + self.frames;
        let mut g = Vec::with_capacity(parents[0].numel());
        for o in 0..outer {
            let base = (o * padded + self.frames) * inner;
            g.extend_from_slice(&grad[base..base + t * inner]);
        }
        vec![Some(g)]
    }
}

struct TemporalPool {
    factor: usize,
}

impl BackwardOp for TemporalPool {
    fn name(&self) -> &'static str {
        "temporal_mean_pool"
    }

    fn backward(&self, parents: &[Tensor], _output: &Tensor, grad: &[f64]) -> Vec<Option<Vec<f64>>> {
        let (outer, t, inner) = time_layout("temporal_mean_pool", parents[0].shape()).unwrap();
        let tp = t / self.factor;
        let w = 1.0 / self.factor as f64;
        let mut g = vec![0.0; parents[0].numel()];
        for o in 0..outer {
            for s in 0..t {
                let src = (o * tp + s / self.factor) * inner;
                let dst = (o * t + s) * inner;
                for i in 0..inner {
                    g[dst + i] = grad[src + i] * w;
                }
            }
        }
        vec![Some(g)]
    }
}

impl Tensor {
    pub fn reshape(&self, shape: &[usize]) -> Result<Tensor> {
        if numel(shape) != self.numel() {
            return Err(TensorError::ShapeMismatch {
                op: "reshape",
                lhs: self.shape().to_vec(),
                rhs: shape.to_vec(),
            });
        }
        Tensor::from_op("reshape", self.to_vec(), shape.to_vec(), vec![self.clone()], Box::new(Reshape))
    }

    /// Concatenates along the last axis; all leading extents must agree.
    pub fn concat_last(parts: &[&Tensor]) -> Result<Tensor> {
        let first = parts.first().ok_or_else(|| TensorError::Dimension {
            op: "concat",
            msg: "needs at least one input".into(),
        })?;
        let lead = &first.shape()[..first.ndim() - 1];
        for p in parts {
            if p.ndim() != first.ndim() || &p.shape()[..p.ndim() - 1] != lead {
                return Err(TensorError::ShapeMismatch {
                    op: "concat",
                    lhs: first.shape().to_vec(),
                    rhs: p.shape().to_vec(),
                });
            }
        }
        let widths: Vec<usize> = parts.iter().map(|p| *p.shape().last().unwrap()).collect();
        let total: usize = widths.iter().sum();
        let rows = numel(lead);
        let mut data = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for (p, &w) in parts.iter().zip(&widths) {
                data.extend_from_slice(&p.data()[r * w..(r + 1) * w]);
            }
        }
        let mut shape = lead.to_vec();
        shape.push(total);
        Tensor::from_op(
            "concat",
            data,
            shape,
            parts.iter().map(|&p| p.clone()).collect(),
            Box::new(ConcatLast { widths }),
        )
    }

    /// Channels `[start, end)` of the last axis.
    pub fn slice_last(&self, start: usize, end: usize) -> Result<Tensor> {
        let total = *self.shape().last().unwrap();
        if start >= end || end > total {
            return Err(TensorError::Dimension {
                op: "slice",
                msg: format!("range {start}..{end} invalid for last extent {total}"),
            });
        }
        let width = end - start;
        let data: Vec<f64> =
            self.data().chunks(total).flat_map(|row| row[start..end].iter().copied()).collect();
        let mut shape = self.shape().to_vec();
        *shape.last_mut().unwrap() = width;
        Tensor::from_op("slice", data, shape, vec![self.clone()], Box::new(SliceLast { start, width, total }))
    }

    /// `x[t+1] - x[t]` along time; `T` frames become `T-1`.
    pub fn temporal_diff(&self) -> Result<Tensor> {
        let (outer, t, inner) = time_layout("temporal_diff", self.shape())?;
        if t < 2 {
            return Err(TensorError::Dimension {
                op: "temporal_diff",
                msg: format!("needs at least 2 frames, got {t}"),
            });
        }
        let x = self.data();
        let mut data = Vec::with_capacity(outer * (t - 1) * inner);
        for o in 0..outer {
            for s in 0..t - 1 {
                let lo = (o * t + s) * inner;
                let hi = lo + inner;
                data.extend((0..inner).map(|i| x[hi + i] - x[lo + i]));
            }
        }
        let mut shape = self.shape().to_vec();
        let nd = shape.len();
        shape[nd - 3] = t - 1;
        Tensor::from_op("temporal_diff", data, shape, vec![self.clone()], Box::new(TemporalDiff))
    }

    /// Prepends `frames` all-zero frames on the time axis.
    pub fn pad_time_front(&self, frames: usize) -> Result<Tensor> {
        let (outer, t, inner) = time_layout("pad_time_front", self.shape())?;
        let x = self.data();
        let mut data = Vec::with_capacity(outer * (t + frames) * inner);
        for o in 0..outer {
            data.extend(std::iter::repeat(0.0).take(frames * inner));
            data.extend_from_slice(&x[o * t * inner..(o + 1) * t * inner]);
        }
        let mut shape = self.shape().to_vec();
        let nd = shape.len();
        shape[nd - 3] = t + frames;
        Tensor::from_op("pad_time_front", data, shape, vec![self.clone()], Box::new(PadTimeFront { frames }))
    }

    /// Averages non-overlapping windows of `factor` frames.
    pub fn temporal_mean_pool(&self, factor: usize) -> Result<Tensor> {
        let (outer, t, inner) = time_layout("temporal_mean_pool", self.shape())?;
        if factor == 0 || t % factor != 0 {
            return Err(TensorError::Dimension {
                op: "temporal_mean_pool",
                msg: format!("{t} frames not divisible by pooling factor {factor}"),
            });
        }
        if factor == 1 {
            return Ok(self.clone());
        }
        let tp = t / factor;
        let w = 1.0 / factor as f64;
        let x = self.data();
        let mut data = vec![0.0; outer * tp * inner];
        for o in 0..outer {
            for s in 0..t {
                let src = (o * t + s) * inner;
                let dst = (o * tp + s / factor) * inner;
                for i in 0..inner {
                    data[dst + i] += x[src + i] * w;
                }
            }
        }
        let mut shape = self.shape().to_vec();
        let nd = shape.len();
        shape[nd - 3] = tp;
        Tensor::from_op("temporal_mean_pool", data, shape, vec![self.clone()], Box::new(TemporalPool { factor }))
    }

    /// Halves the frame count by averaging adjacent frame pairs.
    pub fn temporal_downsample_by_2(&self) -> Result<Tensor> {
        let (_, t, _) = time_layout("temporal_downsample_by_2", self.shape())?;
        if t % 2 != 0 {
            return Err(TensorError::Dimension {
                op: "temporal_downsample_by_2",
                msg: format!("odd frame count {t}"),
            });
        }
        self.temporal_mean_pool(2)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(t: usize) -> Tensor {
        Tensor::new((0..t).map(|i| i as f64).collect(), &[t, 1, 1]).unwrap()
    }

    #[test]
    fn diff_of_constant_is_zero() {
        let x = Tensor::full(&[5, 2, 3], 4.0);
        let d = x.temporal_diff().unwrap();
        assert_eq!(d.shape(), &[4, 2, 3]);
        assert!(d.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn diff_of_ramp_is_one() {
        let d = ramp(6).temporal_diff().unwrap();
        assert!(d.data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn downsample_rejects_odd_length() {
        let err = ramp(5).temporal_downsample_by_2().unwrap_err();
        assert!(matches!(err, TensorError::Dimension { op: "temporal_downsample_by_2", .. }));
    }

    #[test]
    fn downsample_averages_pairs() {
        let d = ramp(4).temporal_downsample_by_2().unwrap();
        assert_eq!(d.data(), &[0.5, 2.5]);
    }

    #[test]
    fn pad_front_prepends_zero_frames() {
        let p = ramp(3).pad_time_front(1).unwrap();
        assert_eq!(p.data(), &[0.0, 0.0, 1.0, 2.0]);
    }

    #[test]
    fn slice_bounds_checked() {
        let x = Tensor::zeros(&[2, 4]);
        assert!(x.slice_last(2, 2).is_err());
        assert!(x.slice_last(0, 5).is_err());
        assert_eq!(x.slice_last(1, 3).unwrap().shape(), &[2, 2]);
    }

    #[test]
    fn concat_checks_leading_extents() {
        let a = Tensor::zeros(&[2, 3]);
        let b = Tensor::zeros(&[3, 3]);
        assert!(Tensor::concat_last(&[&a, &b]).is_err());
    }
}
