//! Input projection and the skate positional embedding.

use mmn_autograd::Tensor;

use super::layers::Linear;
use super::params::{ForwardCtx, Init, ParamId, ParamStore};
use super::ModelConfig;
use crate::error::Result;

/// Fixed sinusoidal temporal features `F_te`, shape `[T, C]`.
///
/// Frame `t` is normalized to `n_t = -1 + 2t/(T-1)` (or 0 when `T = 1`);
/// even channels hold `sin(n_t * w)`, odd channels `cos(n_t * w)` with
/// `w = 10000^(-2k/C)` for channel pair `k`.
pub fn temporal_features(t_len: usize, channels: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(t_len * channels);
    for t in 0..t_len {
        let n = if t_len == 1 { 0.0 } else { -1.0 + 2.0 * t as f64 / (t_len - 1) as f64 };
        for c in 0..channels {
            let k = (c / 2) as f64;
            let w = 10000f64.powf(-2.0 * k / channels as f64);
            out.push(if c % 2 == 0 { (n * w).sin() } else { (n * w).cos() });
        }
    }
    out
}

/// `F_ste[t, v, c] = F_te[t, c] * F_se[v, c]`, shape `[T, V, C]`.
pub fn skate_embedding(t_len: usize, f_se: &Tensor) -> Result<Tensor> {
    let (v, c) = (f_se.shape()[0], f_se.shape()[1]);
    let f_te = Tensor::new(temporal_features(t_len, c), &[t_len, 1, c])?;
    Ok(f_te.mul(&f_se.reshape(&[1, v, c])?)?)
}

#[derive(Clone, Debug)]
pub struct Embedding {
    pub proj: [Linear; 3],
    pub f_se: ParamId,
}

impl Embedding {
    pub fn build(store: &mut ParamStore, init: &mut Init, cfg: &ModelConfig) -> Self {
        let c = cfg.channels;
        let proj = [
            Linear::build(store, init, "embed/proj.0", cfg.in_channels, c, true),
            Linear::build(store, init, "embed/proj.1", c, c, true),
            Linear::build(store, init, "embed/proj.2", c, c, true),
        ];
        let f_se = store.add("embed/F_se", &[cfg.joints, c], init.normal(cfg.joints * c, 0.02));
        Self { proj, f_se }
    }

    /// Three-layer projection of `[.., T, V, C_in]` frames to `[.., T, V, C]`.
    pub fn project(&self, frames: &Tensor, ctx: &ForwardCtx) -> Result<Tensor> {
        let h = self.proj[0].forward(frames, ctx)?.gelu()?;
        let h = self.proj[1].forward(&h, ctx)?.gelu()?;
        self.proj[2].forward(&h, ctx)
    }

    /// `X_feat = X_proj + F_ste`.
    pub fn forward(&self, frames: &Tensor, ctx: &ForwardCtx) -> Result<Tensor> {
        let t_len = frames.shape()[frames.ndim() - 3];
        let x_proj = self.project(frames, ctx)?;
        let f_ste = skate_embedding(t_len, ctx.param(self.f_se))?;
        Ok(x_proj.add(&f_ste)?)
    }
}
