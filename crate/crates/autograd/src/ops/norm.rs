use crate::error::{Result, TensorError};
use crate::tensor::{BackwardOp, Tensor};

struct LayerNorm {
    c: usize,
    /// Per-row (mean, 1/std).
    stats: Vec<(f64, f64)>,
}

impl BackwardOp for LayerNorm {
    fn name(&self) -> &'static str {
        "layer_norm"
    }

    fn backward(&self, parents: &[Tensor], _output: &Tensor, grad: &[f64]) -> Vec<Option<Vec<f64>>> {
        let (x, gain, bias) = (&parents[0], &parents[1], &parents[2]);
        let c = self.c;
        let mut gx = vec![0.0; x.numel()];
        let mut ggain = vec![0.0; c];
        let mut gbias = vec![0.0; c];
        let mut xhat = vec![0.0; c];
        let mut dxhat = vec![0.0; c];
        for (r, (&(mu, inv), (xr, gr))) in self.stats.iter().zip(x.data().chunks(c).zip(grad.chunks(c))).enumerate() {
            for i in 0..c {
                xhat[i] = (xr[i] - mu) * inv;
                dxhat[i] = gr[i] * gain.data()[i];
                ggain[i] += gr[i] * xhat[i];
                gbias[i] += gr[i];
            }
            let m1 = dxhat.iter().sum::<f64>() / c as f64;
            let m2 = dxhat.iter().zip(&xhat).map(|(a, b)| a * b).sum::<f64>() / c as f64;
            let out = &mut gx[r * c..(r + 1) * c];
            for i in 0..c {
                out[i] = inv * (dxhat[i] - m1 - xhat[i] * m2);
            }
        }
        vec![
            x.requires_grad().then_some(gx),
            gain.requires_grad().then_some(ggain),
            bias.requires_grad().then_some(gbias),
        ]
    }
}

/// Running per-channel statistics of a batch-norm layer.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchNormState {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
    initialized: bool,
}

/// Statistics of one training batch, per channel (biased variance).
#[derive(Clone, Debug, PartialEq)]
pub struct BatchStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

impl BatchNormState {
    /// Zero mean, unit variance.
    pub fn new(channels: usize) -> Self {
        Self { mean: vec![0.0; channels], var: vec![1.0; channels], initialized: true }
    }

    /// State that must see a training batch before eval-mode use.
    pub fn uninitialized(channels: usize) -> Self {
        Self { initialized: false, ..Self::new(channels) }
    }

    pub fn from_parts(mean: Vec<f64>, var: Vec<f64>) -> Self {
        Self { mean, var, initialized: true }
    }

    pub fn is_initialized(&self) -> bool {
        self.initialized
    }

    pub fn channels(&self) -> usize {
        self.mean.len()
    }

    /// Exponential moving average toward the batch statistics.
    pub fn update(&mut self, stats: &BatchStats, momentum: f64) {
        for (r, &b) in self.mean.iter_mut().zip(&stats.mean) {
            *r = (1.0 - momentum) * *r + momentum * b;
        }
        for (r, &b) in self.var.iter_mut().zip(&stats.var) {
            *r = (1.0 - momentum) * *r + momentum * b;
        }
        self.initialized = true;
    }
}

struct BatchNorm {
    c: usize,
    inv_std: Vec<f64>,
    /// Mean used for normalization; `None` in eval mode.
    batch_mean: Option<Vec<f64>>,
}

impl BackwardOp for BatchNorm {
    fn name(&self) -> &'static str {
        "batch_norm"
    }

    fn backward(&self, parents: &[Tensor], _output: &Tensor, grad: &[f64]) -> Vec<Option<Vec<f64>>> {
        let c = self.c;
        let x = parents[0].data();
        let g = match &self.batch_mean {
            None => grad.iter().enumerate().map(|(i, g)| g * self.inv_std[i % c]).collect(),
            Some(mean) => {
                let n = (x.len() / c) as f64;
                let mut sum_g = vec![0.0; c];
                let mut sum_gx = vec![0.0; c];
                for (i, (&g, &xv)) in grad.iter().zip(x).enumerate() {
                    let ch = i % c;
                    sum_g[ch] += g;
                    sum_gx[ch] += g * (xv - mean[ch]) * self.inv_std[ch];
                }
                grad.iter()
                    .zip(x)
                    .enumerate()
                    .map(|(i, (&g, &xv))| {
                        let ch = i % c;
                        let xhat = (xv - mean[ch]) * self.inv_std[ch];
                        self.inv_std[ch] * (g - sum_g[ch] / n - xhat * sum_gx[ch] / n)
                    })
                    .collect()
            }
        };
        vec![Some(g)]
    }
}

impl Tensor {
    /// Normalizes each position over the last (channel) axis, then applies
    /// `gain` and `bias`.
    pub fn layer_norm(&self, gain: &Tensor, bias: &Tensor, eps: f64) -> Result<Tensor> {
        let c = *self.shape().last().unwrap();
        if gain.shape() != [c] || bias.shape() != [c] {
            return Err(TensorError::ShapeMismatch {
                op: "layer_norm",
                lhs: self.shape().to_vec(),
                rhs: gain.shape().to_vec(),
            });
        }
        let mut stats = Vec::with_capacity(self.numel() / c);
        let mut data = Vec::with_capacity(self.numel());
        for row in self.data().chunks(c) {
            let mu = row.iter().sum::<f64>() / c as f64;
            let var = row.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / c as f64;
            let inv = 1.0 / (var + eps).sqrt();
            stats.push((mu, inv));
            data.extend(row.iter().enumerate().map(|(i, v)| (v - mu) * inv * gain.data()[i] + bias.data()[i]));
        }
        Tensor::from_op(
            "layer_norm",
            data,
            self.shape().to_vec(),
            vec![self.clone(), gain.clone(), bias.clone()],
            Box::new(LayerNorm { c, stats }),
        )
    }

    /// Batch normalization without affine parameters over every axis but
    /// the last. In training mode the batch statistics are used and returned
    /// so the caller can fold them into the running state.
    pub fn batch_norm(
        &self,
        state: &BatchNormState,
        training: bool,
        eps: f64,
    ) -> Result<(Tensor, Option<BatchStats>)> {
        let c = *self.shape().last().unwrap();
        if state.channels() != c {
            return Err(TensorError::ShapeMismatch {
                op: "batch_norm",
                lhs: self.shape().to_vec(),
                rhs: vec![state.channels()],
            });
        }
        let x = self.data();
        let (mean, var, stats) = if training {
            let n = (x.len() / c) as f64;
            let mut mean = vec![0.0; c];
            for (i, &v) in x.iter().enumerate() {
                mean[i % c] += v;
            }
            mean.iter_mut().for_each(|m| *m /= n);
            let mut var = vec![0.0; c];
            for (i, &v) in x.iter().enumerate() {
                let d = v - mean[i % c];
                var[i % c] += d * d;
            }
            var.iter_mut().for_each(|s| *s /= n);
            let stats = BatchStats { mean: mean.clone(), var: var.clone() };
            (mean, var, Some(stats))
        } else {
            if !state.is_initialized() {
                return Err(TensorError::Config("batch_norm in eval mode with uninitialized running statistics".into()));
            }
            (state.mean.clone(), state.var.clone(), None)
        };
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
        let data = x.iter().enumerate().map(|(i, &v)| (v - mean[i % c]) * inv_std[i % c]).collect();
        let out = Tensor::from_op(
            "batch_norm",
            data,
            self.shape().to_vec(),
            vec![self.clone()],
            Box::new(BatchNorm { c, inv_std, batch_mean: training.then_some(mean) }),
        )?;
        Ok((out, stats))
    }

    /// [`Tensor::batch_norm`] that also folds training statistics into `state`.
    pub fn batch_norm_step(
        &self,
        state: &mut BatchNormState,
        training: bool,
        momentum: f64,
        eps: f64,
    ) -> Result<Tensor> {
        let (out, stats) = self.batch_norm(state, training, eps)?;
        if let Some(stats) = stats {
            state.update(&stats, momentum);
        }
        Ok(out)
    }
}
