//! Parameter handles for the small building blocks shared across the model.

use mmn_autograd::Tensor;

use super::params::{ForwardCtx, Init, ParamId, ParamStore};
use crate::error::Result;

/// Affine map over the channel axis, weight stored `[in, out]`.
#[derive(Clone, Copy, Debug)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
    pub fan_in: usize,
    pub fan_out: usize,
}

impl Linear {
    /// Uniform `±1/sqrt(fan_in)` weights and zero bias.
    pub fn build(store: &mut ParamStore, init: &mut Init, name: &str, fan_in: usize, fan_out: usize, bias: bool) -> Self {
        let w = init.uniform(fan_in * fan_out, 1.0 / (fan_in as f64).sqrt());
        Self::with_weight(store, name, fan_in, fan_out, w, bias)
    }

    /// All-zero weights and bias.
    pub fn zeros(store: &mut ParamStore, name: &str, fan_in: usize, fan_out: usize) -> Self {
        Self::with_weight(store, name, fan_in, fan_out, vec![0.0; fan_in * fan_out], true)
    }

    pub fn with_weight(store: &mut ParamStore, name: &str, fan_in: usize, fan_out: usize, w: Vec<f64>, bias: bool) -> Self {
        let weight = store.add(format!("{name}.W"), &[fan_in, fan_out], w);
        let bias = bias.then(|| store.add(format!("{name}.b"), &[fan_out], vec![0.0; fan_out]));
        Self { weight, bias, fan_in, fan_out }
    }

    pub fn forward(&self, x: &Tensor, ctx: &ForwardCtx) -> Result<Tensor> {
        Ok(x.linear(ctx.param(self.weight), self.bias.map(|b| ctx.param(b)))?)
    }
}

/// Layer norm over channels with learnable gain and bias.
#[derive(Clone, Copy, Debug)]
pub struct LayerNorm {
    pub gain: ParamId,
    pub bias: ParamId,
}

impl LayerNorm {
    pub fn build(store: &mut ParamStore, name: &str, channels: usize) -> Self {
        Self {
            gain: store.add(format!("{name}.gain"), &[channels], vec![1.0; channels]),
            bias: store.add(format!("{name}.bias"), &[channels], vec![0.0; channels]),
        }
    }

    pub fn forward(&self, x: &Tensor, ctx: &ForwardCtx, eps: f64) -> Result<Tensor> {
        Ok(x.layer_norm(ctx.param(self.gain), ctx.param(self.bias), eps)?)
    }
}

/// Initial adjacency `0.5 I + 0.5/V`: half self, half uniform neighborhood.
pub fn adjacency_init(v: usize) -> Vec<f64> {
    let mut a = vec![0.5 / v as f64; v * v];
    for i in 0..v {
        a[i * v + i] += 0.5;
    }
    a
}
